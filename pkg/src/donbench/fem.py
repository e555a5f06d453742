"""1D Galerkin finite elements with quadratic shape functions.

The spatial discretization uses Lagrange P2 elements on a uniform grid of
``[0, 1]`` (3 nodes per element, shared endpoints, so ``n_nodes ==
2 * n_elements + 1``) with 3-point Gauss quadrature, which integrates every
polynomial appearing in the weak forms exactly.  All matrices are symmetric
banded with two superdiagonals and are factorized once per time loop where
the coefficients are constant.

Two transient solvers are built on this kernel:

* ``solve_reaction_diffusion``  -- backward-Euler stepping of
  ``du/dt = D u'' + u0(x) - k(x) u`` with static spatial inputs.
* ``solve_thermo_electrical``   -- the nonlinear coupled system
  ``dT/dt = (k_th T')' + Q_ext(t) + Q_e`` and
  ``d2phi/dt2 = (gamma(T) phi')' + rho_e(t)`` with
  ``gamma = 1 / (1 + beta T)`` and Joule heating
  ``Q_e = gamma |phi'|**2``, advanced by Picard iteration between a
  Newmark step for the potential and a backward-Euler step for the
  temperature.  An uncoupled variant freezes the cross terms at supplied
  reference trajectories so each field depends on its own input only.

Boundary conditions are Dirichlet at both endpoints (default homogeneous);
initial conditions are zero fields (and zero potential velocity).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .errors import SolverError
from .fields import SampledFunction

# 3-point Gauss-Legendre rule on [-1, 1]
_GQ_XI = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
_GQ_W = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])

# quadratic shape functions on the reference element, sampled at quadrature
# points: _SHAPE[q, a] = N_a(xi_q), _DSHAPE[q, a] = N_a'(xi_q)
_SHAPE = np.stack(
    [
        _GQ_XI * (_GQ_XI - 1.0) / 2.0,
        1.0 - _GQ_XI**2,
        _GQ_XI * (_GQ_XI + 1.0) / 2.0,
    ],
    axis=1,
)
_DSHAPE = np.stack(
    [_GQ_XI - 0.5, -2.0 * _GQ_XI, _GQ_XI + 0.5],
    axis=1,
)

NEWMARK_BETA = 0.25
NEWMARK_GAMMA = 0.5
PICARD_TOL = 1e-8
PICARD_MAX_ITER = 50
GAMMA_DENOM_FLOOR = 1e-6


@dataclass(frozen=True)
class Grid1D:
    """Uniform quadratic-element grid on [0, 1]."""

    n_elements: int = 127

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError("n_elements must be >= 1")

    @property
    def n_nodes(self) -> int:
        return 2 * self.n_elements + 1

    @property
    def element_size(self) -> float:
        return 1.0 / self.n_elements

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_nodes)


@dataclass(frozen=True)
class TimeScheme:
    """Uniform time grid: `n_steps` stored states from 0 to `t_end`."""

    n_steps: int = 101
    t_end: float = 1.0

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2 (initial state plus steps)")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")

    @property
    def dt(self) -> float:
        return self.t_end / (self.n_steps - 1)

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_steps)


@dataclass(frozen=True)
class BoundarySpec:
    """Dirichlet values prescribed at the two endpoints."""

    left: float = 0.0
    right: float = 0.0


@dataclass(frozen=True)
class ReactionDiffusionInputs:
    u0: SampledFunction
    k: SampledFunction
    diffusivity: float = 0.01


@dataclass(frozen=True)
class ThermoElectricalInputs:
    q_ext: SampledFunction
    rho_e: SampledFunction
    k_thermal: float = 0.116
    beta: float = 3.9
    coupling: str = "coupled"  # "coupled" | "uncoupled"
    reference_fields: Optional[tuple] = None  # (T_ref, phi_ref) trajectories

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.coupling not in ("coupled", "uncoupled"):
            raise ValueError(f"unknown coupling mode {self.coupling!r}")
        if self.coupling == "uncoupled" and self.reference_fields is None:
            raise ValueError("uncoupled mode requires reference_fields")


@dataclass(frozen=True)
class FieldSolution:
    """A space-time scalar field on the FEM grid, time-major layout."""

    values: np.ndarray  # (n_steps, n_nodes)
    field_name: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("values must be (n_steps, n_nodes)")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


class BandedSymmetric:
    """Symmetric banded matrix with two superdiagonals (upper storage).

    ``ab[2 + i - j, j] == A[i, j]`` for ``j - 2 <= i <= j`` (the
    scipy ``solveh_banded`` layout).
    """

    __slots__ = ("ab",)

    def __init__(self, ab: np.ndarray):
        self.ab = ab

    @classmethod
    def zeros(cls, n: int) -> "BandedSymmetric":
        return cls(np.zeros((3, n)))

    @property
    def n(self) -> int:
        return self.ab.shape[1]

    def copy(self) -> "BandedSymmetric":
        return BandedSymmetric(self.ab.copy())

    @staticmethod
    def combine(terms) -> "BandedSymmetric":
        """Linear combination sum(c * M for c, M in terms)."""
        out = None
        for c, mat in terms:
            out = c * mat.ab if out is None else out + c * mat.ab
        return BandedSymmetric(out)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        ab = self.ab
        y = ab[2] * x
        sup1 = ab[1, 1:]
        y[:-1] += sup1 * x[1:]
        y[1:] += sup1 * x[:-1]
        sup2 = ab[0, 2:]
        y[:-2] += sup2 * x[2:]
        y[2:] += sup2 * x[:-2]
        return y

    def to_dense(self) -> np.ndarray:
        n = self.n
        a = np.zeros((n, n))
        for j in range(n):
            for k in range(3):
                i = j - 2 + k
                if 0 <= i <= j:
                    a[i, j] = self.ab[k, j]
                    a[j, i] = self.ab[k, j]
        return a


class DirichletSolver:
    """Prefactored solve of ``A x = b`` with Dirichlet endpoint values.

    The interior block of the banded matrix is Cholesky-factorized once;
    each solve eliminates the boundary columns against the prescribed
    values and reinserts them into the returned full-length vector.
    """

    def __init__(self, matrix: BandedSymmetric, bc: BoundarySpec):
        n = matrix.n
        if n < 3:
            raise SolverError("grid too small for an interior Dirichlet system")
        ab = matrix.ab
        ab_int = ab[:, 1:-1].copy()
        # slots that would reference the eliminated boundary rows
        ab_int[1, 0] = 0.0
        ab_int[0, 0] = 0.0
        if ab_int.shape[1] >= 2:
            ab_int[0, 1] = 0.0
        try:
            self._factor = cholesky_banded(ab_int, lower=False)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"banded Cholesky factorization failed: {exc}") from exc
        self._bc = bc
        # couplings of the first/last interior rows to the boundary columns
        self._cl = (ab[1, 1], ab[0, 2] if n >= 5 else 0.0)
        self._cr = (ab[0, n - 1] if n >= 5 else 0.0, ab[1, n - 1])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        bc = self._bc
        b = rhs[1:-1].copy()
        b[0] -= self._cl[0] * bc.left
        if b.size >= 2:
            b[1] -= self._cl[1] * bc.left
            b[-2] -= self._cr[0] * bc.right
        b[-1] -= self._cr[1] * bc.right
        x = np.empty(rhs.shape[0])
        x[0] = bc.left
        x[-1] = bc.right
        x[1:-1] = cho_solve_banded((self._factor, False), b)
        return x


class _Workspace:
    """Per-grid assembly tables shared by the transient solvers."""

    def __init__(self, grid: Grid1D):
        self.grid = grid
        n_el = grid.n_elements
        h = grid.element_size
        self.jac = h / 2.0
        self.dshape_dx = _DSHAPE / self.jac  # (q, a)
        self.node_idx = 2 * np.arange(n_el)[:, None] + np.arange(3)[None, :]
        left = np.arange(n_el) * h
        self.quad_x = (left[:, None] + (_GQ_XI[None, :] + 1.0) * (h / 2.0)).ravel()
        self.wjac = _GQ_W * self.jac  # (q,)
        # element integrand bases: base[q, a, b] = w_q J f_a(xi_q) f_b(xi_q)
        self.mass_base = np.einsum("q,qa,qb->qab", self.wjac, _SHAPE, _SHAPE)
        self.stiff_base = np.einsum(
            "q,qa,qb->qab", self.wjac, self.dshape_dx, self.dshape_dx
        )

    def nodal_to_quad(self, nodal: np.ndarray) -> np.ndarray:
        """Interpolate nodal values to quadrature points, shape (n_el, q)."""
        return nodal[self.node_idx] @ _SHAPE.T

    def grad_at_quad(self, nodal: np.ndarray) -> np.ndarray:
        """Spatial derivative of a nodal field at quadrature points."""
        return nodal[self.node_idx] @ self.dshape_dx.T

    def _accumulate(self, element_mats: np.ndarray) -> BandedSymmetric:
        out = BandedSymmetric.zeros(self.grid.n_nodes)
        cols = 2 * np.arange(self.grid.n_elements)
        for a in range(3):
            for b in range(a, 3):
                np.add.at(out.ab[2 - (b - a)], cols + b, element_mats[:, a, b])
        return out

    def assemble(self, base: np.ndarray, weight_quad=None) -> BandedSymmetric:
        if weight_quad is None:
            elems = np.broadcast_to(
                base.sum(axis=0), (self.grid.n_elements, 3, 3)
            ).copy()
            return self._accumulate(elems)
        return self._accumulate(np.einsum("eq,qab->eab", weight_quad, base))

    def mass(self, weight_quad=None) -> BandedSymmetric:
        return self.assemble(self.mass_base, weight_quad)

    def stiffness(self, weight_quad=None) -> BandedSymmetric:
        return self.assemble(self.stiff_base, weight_quad)

    def load_from_quad(self, values_quad: np.ndarray) -> np.ndarray:
        """Load vector for an integrand given at quadrature points."""
        contrib = np.einsum("eq,q,qa->ea", values_quad, _GQ_W * self.jac, _SHAPE)
        f = np.zeros(self.grid.n_nodes)
        np.add.at(f, self.node_idx.ravel(), contrib.ravel())
        return f

    def load(self, nodal: np.ndarray) -> np.ndarray:
        return self.load_from_quad(self.nodal_to_quad(nodal))


def _coefficient_to_quad(ws: _Workspace, coefficient) -> Optional[np.ndarray]:
    """Normalize a coefficient argument to quadrature-point values (or None)."""
    if coefficient is None:
        return None
    if isinstance(coefficient, SampledFunction):
        _check_on_nodes(ws.grid, coefficient)
        return ws.nodal_to_quad(coefficient.values)
    if np.isscalar(coefficient):
        if float(coefficient) == 1.0:
            return None
        return np.full((ws.grid.n_elements, 3), float(coefficient))
    arr = np.asarray(coefficient, dtype=np.float64)
    if arr.shape == (ws.grid.n_nodes,):
        return ws.nodal_to_quad(arr)
    if arr.shape == (ws.grid.n_elements, 3):
        return arr
    raise ValueError(f"coefficient shape {arr.shape} not understood")


def _check_on_nodes(grid: Grid1D, f: SampledFunction):
    nodes = grid.nodes()
    if len(f) != grid.n_nodes or np.max(np.abs(f.coords - nodes)) > 1e-12:
        raise ValueError("input function is not sampled at the grid nodes")


def assemble_fem_matrices(grid: Grid1D, coefficient=None):
    """Assemble the (mass, stiffness) pair; `coefficient` weights the stiffness.

    The coefficient may be None (unit), a scalar, a SampledFunction on the
    grid nodes, a nodal array, or quadrature-point values of shape
    (n_elements, 3).
    """
    ws = _Workspace(grid)
    wq = _coefficient_to_quad(ws, coefficient)
    return ws.mass(), ws.stiffness(wq)


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(new))), 1e-12)
    return float(np.max(np.abs(new - old))) / scale


def solve_reaction_diffusion(
    grid: Grid1D,
    scheme: TimeScheme,
    inputs: ReactionDiffusionInputs,
    bc: BoundarySpec = BoundarySpec(),
    forcing=None,
) -> FieldSolution:
    """Backward-Euler solve of du/dt = D u'' + u0(x) - k(x) u, zero IC.

    `forcing`, if given, is a callable ``f(x, t) -> values`` evaluated at
    quadrature points and added to the static ``u0`` load at each step.
    """
    _check_on_nodes(grid, inputs.u0)
    _check_on_nodes(grid, inputs.k)
    ws = _Workspace(grid)
    dt = scheme.dt

    mass = ws.mass()
    stiff = ws.stiffness()
    reaction = ws.mass(ws.nodal_to_quad(inputs.k.values))
    system = BandedSymmetric.combine(
        [(1.0, mass), (dt * inputs.diffusivity, stiff), (dt, reaction)]
    )
    solver = DirichletSolver(system, bc)
    f_static = ws.load(inputs.u0.values)

    n = grid.n_nodes
    out = np.zeros((scheme.n_steps, n))
    u = np.zeros(n)
    u[0], u[-1] = bc.left, bc.right
    out[0] = u
    times = scheme.times()
    for step in range(1, scheme.n_steps):
        f = f_static
        if forcing is not None:
            fq = np.asarray(forcing(ws.quad_x, times[step]), dtype=np.float64)
            f = f_static + ws.load_from_quad(fq.reshape(grid.n_elements, 3))
        rhs = mass.matvec(u) + dt * f
        u = solver.solve(rhs)
        out[step] = u
    return FieldSolution(out, "u")


class _NewmarkState:
    __slots__ = ("phi", "vel", "acc")

    def __init__(self, phi, vel, acc):
        self.phi = phi
        self.vel = vel
        self.acc = acc


def _gamma_at_quad(ws: _Workspace, t_nodal: np.ndarray, beta: float, step: int):
    t_quad = ws.nodal_to_quad(t_nodal)
    denom = 1.0 + beta * t_quad
    if np.min(denom) <= GAMMA_DENOM_FLOOR:
        raise SolverError(
            f"conductivity blow-up at step {step}: 1 + beta*T reached "
            f"{np.min(denom):.3e}"
        )
    return 1.0 / denom


def _advance_potential(
    ws, mass, gamma_quad, state, f_rho, dt, bc, time_order, forcing_load
):
    """One candidate potential step with the supplied frozen conductivity."""
    k_gamma = ws.stiffness(gamma_quad)
    rhs_load = f_rho + forcing_load
    if time_order == 1:
        system = BandedSymmetric.combine([(1.0, mass), (dt, k_gamma)])
        rhs = mass.matvec(state.phi) + dt * rhs_load
        phi_new = DirichletSolver(system, bc).solve(rhs)
        return _NewmarkState(phi_new, None, None)
    beta_n, gamma_n = NEWMARK_BETA, NEWMARK_GAMMA
    phi_pred = state.phi + dt * state.vel + dt * dt * (0.5 - beta_n) * state.acc
    system = BandedSymmetric.combine([(1.0, mass), (beta_n * dt * dt, k_gamma)])
    rhs = rhs_load - k_gamma.matvec(phi_pred)
    acc_new = DirichletSolver(system, BoundarySpec(0.0, 0.0)).solve(rhs)
    phi_new = phi_pred + beta_n * dt * dt * acc_new
    vel_new = state.vel + dt * ((1.0 - gamma_n) * state.acc + gamma_n * acc_new)
    return _NewmarkState(phi_new, vel_new, acc_new)


def solve_thermo_electrical(
    grid: Grid1D,
    scheme: TimeScheme,
    inputs: ThermoElectricalInputs,
    bc: BoundarySpec = BoundarySpec(),
    forcing_T=None,
    forcing_phi=None,
    potential_time_order: int = 2,
    with_stats: bool = False,
):
    """Solve the coupled (or frozen-coefficient uncoupled) system.

    Returns ``(T, phi)`` FieldSolutions, plus a dict of per-step Picard
    iteration counts when ``with_stats`` is true.
    """
    if potential_time_order not in (1, 2):
        raise ValueError("potential_time_order must be 1 or 2")
    if len(inputs.q_ext) != scheme.n_steps or len(inputs.rho_e) != scheme.n_steps:
        raise ValueError("q_ext and rho_e must have exactly n_steps values")

    ws = _Workspace(grid)
    dt = scheme.dt
    n = grid.n_nodes
    times = scheme.times()
    mass = ws.mass()
    stiff = ws.stiffness()

    # temperature system matrix is constant: factor once
    t_system = BandedSymmetric.combine([(1.0, mass), (dt * inputs.k_thermal, stiff)])
    t_solver = DirichletSolver(t_system, bc)
    unit_load = ws.load(np.ones(n))

    def forcing_load(fn, t):
        if fn is None:
            return 0.0
        fq = np.asarray(fn(ws.quad_x, t), dtype=np.float64)
        return ws.load_from_quad(fq.reshape(grid.n_elements, 3))

    temp = np.zeros(n)
    temp[0], temp[-1] = bc.left, bc.right
    phi = np.zeros(n)
    phi[0], phi[-1] = bc.left, bc.right

    out_T = np.zeros((scheme.n_steps, n))
    out_phi = np.zeros((scheme.n_steps, n))
    out_T[0] = temp
    out_phi[0] = phi

    if inputs.coupling == "uncoupled":
        ref_T, ref_phi = inputs.reference_fields
        ref_T = np.asarray(ref_T, dtype=np.float64)
        ref_phi = np.asarray(ref_phi, dtype=np.float64)
        if ref_T.shape != (scheme.n_steps, n) or ref_phi.shape != (scheme.n_steps, n):
            raise ValueError("reference fields must be (n_steps, n_nodes)")

        # potential pass: conductivity frozen at gamma(T_ref); reads rho_e only
        state = _init_newmark(ws, mass, inputs, phi, ref_T[0], unit_load)
        for step in range(1, scheme.n_steps):
            gamma_q = _gamma_at_quad(ws, ref_T[step], inputs.beta, step)
            f_rho = inputs.rho_e.values[step] * unit_load
            state = _advance_potential(
                ws, mass, gamma_q, state, f_rho, dt, bc,
                potential_time_order, forcing_load(forcing_phi, times[step]),
            )
            out_phi[step] = state.phi

        # temperature pass: Joule heating frozen at Q_e(phi_ref, T_ref)
        for step in range(1, scheme.n_steps):
            gamma_q = _gamma_at_quad(ws, ref_T[step], inputs.beta, step)
            qe_quad = gamma_q * ws.grad_at_quad(ref_phi[step]) ** 2
            f_t = (
                inputs.q_ext.values[step] * unit_load
                + ws.load_from_quad(qe_quad)
                + forcing_load(forcing_T, times[step])
            )
            temp = t_solver.solve(mass.matvec(out_T[step - 1]) + dt * f_t)
            out_T[step] = temp

        result = (FieldSolution(out_T, "T"), FieldSolution(out_phi, "phi"))
        if with_stats:
            return result + ({"picard_iterations": []},)
        return result

    # coupled mode
    state = _init_newmark(ws, mass, inputs, phi, temp, unit_load)
    iteration_counts = []
    for step in range(1, scheme.n_steps):
        f_rho = inputs.rho_e.values[step] * unit_load
        f_phi_extra = forcing_load(forcing_phi, times[step])
        f_t_base = inputs.q_ext.values[step] * unit_load + forcing_load(
            forcing_T, times[step]
        )
        temp_it, phi_it = temp, phi
        converged = False
        for iteration in range(PICARD_MAX_ITER):
            gamma_q = _gamma_at_quad(ws, temp_it, inputs.beta, step)
            cand = _advance_potential(
                ws, mass, gamma_q, state, f_rho, dt, bc,
                potential_time_order, f_phi_extra,
            )
            qe_quad = gamma_q * ws.grad_at_quad(cand.phi) ** 2
            f_t = f_t_base + ws.load_from_quad(qe_quad)
            temp_new = t_solver.solve(mass.matvec(temp) + dt * f_t)
            delta = max(
                _relative_change(temp_new, temp_it),
                _relative_change(cand.phi, phi_it),
            )
            temp_it, phi_it = temp_new, cand.phi
            if delta < PICARD_TOL:
                converged = True
                iteration_counts.append(iteration + 1)
                break
        if not converged:
            raise SolverError(
                f"Picard iteration did not converge at step {step} "
                f"({PICARD_MAX_ITER} iterations)"
            )
        temp, phi, state = temp_it, phi_it, cand
        out_T[step] = temp
        out_phi[step] = phi

    result = (FieldSolution(out_T, "T"), FieldSolution(out_phi, "phi"))
    if with_stats:
        return result + ({"picard_iterations": iteration_counts},)
    return result


def _init_newmark(ws, mass, inputs, phi0, temp0, unit_load):
    """Consistent initial acceleration for the potential equation."""
    gamma_q = _gamma_at_quad(ws, temp0, inputs.beta, 0)
    k_gamma = ws.stiffness(gamma_q)
    rhs = inputs.rho_e.values[0] * unit_load - k_gamma.matvec(phi0)
    acc0 = DirichletSolver(mass, BoundarySpec(0.0, 0.0)).solve(rhs)
    return _NewmarkState(phi0.copy(), np.zeros_like(phi0), acc0)


def compute_reference_fields(
    grid: Grid1D,
    scheme: TimeScheme,
    nominal_inputs: ThermoElectricalInputs,
    bc: BoundarySpec = BoundarySpec(),
    potential_time_order: int = 2,
):
    """Coupled solve of the nominal inputs, for use as frozen references."""
    if nominal_inputs.coupling != "coupled":
        raise ValueError("nominal inputs must use coupled mode")
    return solve_thermo_electrical(
        grid, scheme, nominal_inputs, bc, potential_time_order=potential_time_order
    )
