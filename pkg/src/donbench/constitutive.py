"""Pointwise viscoplastic strain-rate law for austenitic steel (Kozlowski form).

The flow rate is defined implicitly,

    rate = fc * (stress - f1 * strain * |rate|**(f2 - 1))**f3 * exp(-Q / T)

with temperature-dependent empirical coefficients f1..f3, a composition
coefficient fc(%C), and activation constant Q in kelvin.  A negative
overstress base is clamped to zero rate (no flow below the
hardening-adjusted threshold).  The implicit equation is solved by
bracketed bisection followed by secant polishing; for temperatures where
f2 < 1 the hardening term diverges as the rate approaches zero, so the
bracket is located by scanning a logarithmic grid from above.

This module is deliberately independent of the FEM stack: it evaluates the
material law alone.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConstitutiveError

Q_ACTIVATION_K = 44465.0
VALID_T_RANGE_K = (1273.0, 1773.0)

_RESIDUAL_TOL = 1e-14
_BRACKET_SCAN_POINTS = 512
_BRACKET_SPAN_DECADES = 24.0


@dataclass(frozen=True)
class KozlowskiCoefficients:
    q: float
    f1: float
    f2: float
    f3: float
    fc: float
    pct_c: float


@dataclass(frozen=True)
class ConstitutiveState:
    stress: float  # von Mises effective stress, MPa
    strain: float  # accumulated inelastic strain, dimensionless
    temperature_k: float
    pct_c: float

    def __post_init__(self):
        if self.temperature_k <= 0:
            raise ValueError("temperature must be positive kelvin")
        if self.strain < 0:
            raise ValueError("accumulated inelastic strain must be >= 0")


def coefficients(temperature_k: float, pct_c: float) -> KozlowskiCoefficients:
    """Empirical coefficients at the given temperature and carbon content."""
    lo, hi = VALID_T_RANGE_K
    if not lo <= temperature_k <= hi:
        warnings.warn(
            f"temperature {temperature_k:.1f} K outside the fitted range "
            f"[{lo:.0f}, {hi:.0f}] K",
            stacklevel=2,
        )
    return KozlowskiCoefficients(
        q=Q_ACTIVATION_K,
        f1=130.5 - 5.128e-3 * temperature_k,
        f2=-0.6289 + 1.114e-3 * temperature_k,
        f3=8.132 - 1.54e-3 * temperature_k,
        fc=46550.0 + 71400.0 * pct_c + 12000.0 * pct_c**2,
        pct_c=pct_c,
    )


def _hardening(rate: float, coeff: KozlowskiCoefficients, strain: float) -> float:
    if strain == 0.0:
        return 0.0
    power = coeff.f2 - 1.0
    if rate == 0.0:
        if power > 0.0:
            return 0.0
        if power == 0.0:
            return coeff.f1 * strain
        return np.inf
    return coeff.f1 * strain * rate**power


def flow_rhs(rate: float, coeff: KozlowskiCoefficients, stress: float,
             strain: float, boltzmann: float) -> float:
    """Right-hand side of the implicit law at a trial rate (clamped base)."""
    overstress = stress - _hardening(rate, coeff, strain)
    if overstress <= 0.0:
        return 0.0
    return coeff.fc * overstress**coeff.f3 * boltzmann


def inelastic_strain_rate(state: ConstitutiveState) -> float:
    """Solve the implicit law for the inelastic strain rate (1/s)."""
    coeff = coefficients(state.temperature_k, state.pct_c)
    if state.stress <= 0.0:
        return 0.0
    boltzmann = float(np.exp(-coeff.q / state.temperature_k))

    def residual(rate: float) -> float:
        return rate - flow_rhs(rate, coeff, state.stress, state.strain, boltzmann)

    # the unhardened rate bounds the hardened one from above in-range
    r_max = 10.0 * coeff.fc * max(state.stress, 1.0) ** coeff.f3 * boltzmann
    if r_max <= 0.0 or not np.isfinite(r_max):
        raise ConstitutiveError(
            f"cannot build a bracket for state {state} (r_max={r_max})"
        )

    grid = np.concatenate(
        [
            [0.0],
            np.geomspace(
                r_max * 10.0**-_BRACKET_SPAN_DECADES, r_max, _BRACKET_SCAN_POINTS
            ),
        ]
    )
    values = np.array([residual(r) for r in grid])
    if not np.all(np.isfinite(values[1:])):
        raise ConstitutiveError(f"non-finite residuals while bracketing {state}")
    # largest sign change: residual is positive at r_max, so scan from above
    crossings = np.nonzero((values[:-1] <= 0.0) & (values[1:] > 0.0))[0]
    if crossings.size == 0:
        # no positive root: stress sits below the hardening threshold
        return 0.0
    lo, hi = grid[crossings[-1]], grid[crossings[-1] + 1]

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if residual(mid) <= 0.0:
            lo = mid
        else:
            hi = mid

    # secant polish between the bracket endpoints
    root = lo if abs(residual(lo)) <= abs(residual(hi)) else hi
    for _ in range(8):
        f_lo, f_hi = residual(lo), residual(hi)
        if f_hi == f_lo:
            break
        cand = lo - f_lo * (hi - lo) / (f_hi - f_lo)
        if not lo <= cand <= hi:
            break
        if abs(residual(cand)) < abs(residual(root)):
            root = cand
        if residual(cand) <= 0.0:
            lo = cand
        else:
            hi = cand

    if abs(residual(root)) > _RESIDUAL_TOL * max(1.0, root):
        raise ConstitutiveError(
            f"implicit solve stalled at residual {residual(root):e} for {state}"
        )
    return float(root)


def closed_form_rate_no_hardening(stress: float, temperature_k: float,
                                  pct_c: float) -> float:
    """Explicit rate for zero accumulated strain (the hardening term vanishes)."""
    coeff = coefficients(temperature_k, pct_c)
    if stress <= 0.0:
        return 0.0
    return float(
        coeff.fc * stress**coeff.f3 * np.exp(-coeff.q / temperature_k)
    )
