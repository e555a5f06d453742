"""Random input-function synthesis.

Two generators produce the scalar functions that drive the PDE benchmarks:

* ``generate_grf`` draws stationary 1D Gaussian random fields with a
  squared-exponential covariance, realized by Cholesky factorization of the
  covariance matrix applied to a seeded standard-normal vector.
* ``generate_rbf_profile`` draws random knot values and interpolates them
  with a Gaussian radial-basis kernel, giving smooth profiles with an
  optional monotone trend.

Both are pure functions of their spec (including the seed), so repeated and
concurrent calls always reproduce the same bytes.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import GenerationError

_CHOLESKY_BASE_JITTER = 1e-10
_CHOLESKY_MAX_DOUBLINGS = 8


@dataclass(frozen=True)
class SampledFunction:
    """A scalar function of one variable recorded at fixed sensor locations."""

    values: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        coords = np.asarray(self.coords, dtype=np.float64)
        if values.ndim != 1 or coords.ndim != 1:
            raise ValueError("values and coords must be 1-D")
        if values.shape != coords.shape:
            raise ValueError("values and coords must have the same length")
        if coords.size >= 2 and not np.all(np.diff(coords) > 0):
            raise ValueError("coords must be strictly increasing")
        values.setflags(write=False)
        coords.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "coords", coords)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class GrfSpec:
    """Parameters of a stationary Gaussian random field on [0, domain_length].

    The covariance is squared-exponential,
    ``C(r) = variance * exp(-r**2 / (2 * correlation_length**2))``.
    """

    n_points: int
    seed: int
    domain_length: float = 1.0
    mean: float = 0.0
    variance: float = 1.0
    correlation_length: float = 0.1

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")
        if self.domain_length <= 0:
            raise ValueError("domain_length must be positive")
        if self.variance < 0:
            raise ValueError("variance must be >= 0")
        if self.correlation_length <= 0:
            raise ValueError("correlation_length must be positive")


@dataclass(frozen=True)
class RbfProfileSpec:
    """Parameters of a Gaussian-RBF interpolated random profile.

    ``n_knots`` values are drawn uniformly in ``knot_value_range`` at random
    (stratified) knot locations and interpolated with the kernel
    ``exp(-(r / width)**2)`` where ``width = rbf_width * domain_length``.
    """

    seed: int
    n_knots: int = 8
    knot_value_range: tuple = (0.0, 1.0)
    trend: str = "none"  # "increasing" | "decreasing" | "none"
    n_points: int = 101
    rbf_width: float = 0.25
    domain_length: float = 1.0

    def __post_init__(self):
        if self.n_knots < 2:
            raise ValueError("n_knots must be >= 2")
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")
        if self.rbf_width <= 0:
            raise ValueError("rbf_width must be positive")
        if self.trend not in ("increasing", "decreasing", "none"):
            raise ValueError(f"unknown trend {self.trend!r}")
        lo, hi = self.knot_value_range
        if not lo <= hi:
            raise ValueError("knot_value_range must be (low, high) with low <= high")


def generate_grf(spec: GrfSpec) -> SampledFunction:
    """Draw one Gaussian random field realization at equispaced sensors."""
    coords = np.linspace(0.0, spec.domain_length, spec.n_points)
    if spec.variance == 0.0:
        return SampledFunction(np.full(spec.n_points, spec.mean), coords)

    r = coords[:, None] - coords[None, :]
    cov = spec.variance * np.exp(-(r * r) / (2.0 * spec.correlation_length**2))
    factor = _cholesky_with_jitter(cov, spec.variance)
    z = rng.stream(spec.seed).standard_normal(spec.n_points)
    return SampledFunction(spec.mean + factor @ z, coords)


def _cholesky_with_jitter(cov: np.ndarray, variance: float) -> np.ndarray:
    # Squared-exponential covariance matrices are numerically rank-deficient
    # at fine resolution; regularize the diagonal, doubling on failure.
    jitter = _CHOLESKY_BASE_JITTER * variance
    eye = np.eye(cov.shape[0])
    for _ in range(_CHOLESKY_MAX_DOUBLINGS + 1):
        try:
            return np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise GenerationError(
        f"covariance factorization failed up to jitter {jitter / 2.0:g}; "
        "spec is ill-conditioned"
    )


def generate_rbf_profile(spec: RbfProfileSpec) -> SampledFunction:
    """Draw one Gaussian-RBF interpolated profile at equispaced outputs."""
    g = rng.stream(spec.seed)
    # Stratified knot locations keep the interpolation system well separated.
    offsets = g.uniform(size=spec.n_knots)
    knots_t = (np.arange(spec.n_knots) + offsets) / spec.n_knots * spec.domain_length
    lo, hi = spec.knot_value_range
    knots_v = g.uniform(lo, hi, size=spec.n_knots)
    if spec.trend == "increasing":
        knots_v = np.sort(knots_v)
    elif spec.trend == "decreasing":
        knots_v = np.sort(knots_v)[::-1]

    width = spec.rbf_width * spec.domain_length
    d = knots_t[:, None] - knots_t[None, :]
    kernel = np.exp(-((d / width) ** 2))
    try:
        weights = np.linalg.solve(kernel, knots_v)
    except np.linalg.LinAlgError as exc:
        raise GenerationError(f"singular RBF interpolation system: {exc}") from exc
    residual = np.max(np.abs(kernel @ weights - knots_v))
    if not np.isfinite(residual) or residual > 1e-8 * max(1.0, np.max(np.abs(knots_v))):
        raise GenerationError(
            f"RBF interpolation residual {residual:g} exceeds tolerance; "
            "system is numerically singular"
        )

    coords = np.linspace(0.0, spec.domain_length, spec.n_points)
    basis = np.exp(-(((coords[:, None] - knots_t[None, :]) / width) ** 2))
    return SampledFunction(basis @ weights, coords)


def knot_locations(spec: RbfProfileSpec) -> tuple:
    """Return (knot times, knot values) exactly as used by generate_rbf_profile."""
    g = rng.stream(spec.seed)
    offsets = g.uniform(size=spec.n_knots)
    knots_t = (np.arange(spec.n_knots) + offsets) / spec.n_knots * spec.domain_length
    lo, hi = spec.knot_value_range
    knots_v = g.uniform(lo, hi, size=spec.n_knots)
    if spec.trend == "increasing":
        knots_v = np.sort(knots_v)
    elif spec.trend == "decreasing":
        knots_v = np.sort(knots_v)[::-1]
    return knots_t, knots_v


def evaluate_rbf_profile(spec: RbfProfileSpec, at: np.ndarray) -> np.ndarray:
    """Evaluate the interpolant of `spec` at arbitrary locations."""
    knots_t, knots_v = knot_locations(spec)
    width = spec.rbf_width * spec.domain_length
    d = knots_t[:, None] - knots_t[None, :]
    kernel = np.exp(-((d / width) ** 2))
    weights = np.linalg.solve(kernel, knots_v)
    at = np.asarray(at, dtype=np.float64)
    basis = np.exp(-(((at[:, None] - knots_t[None, :]) / width) ** 2))
    return basis @ weights


def _generate_one(spec):
    if isinstance(spec, GrfSpec):
        return generate_grf(spec)
    if isinstance(spec, RbfProfileSpec):
        return generate_rbf_profile(spec)
    raise TypeError(f"unsupported spec type {type(spec).__name__}")


def batch_generate(specs, threads: int = 1) -> list:
    """Generate one SampledFunction per spec, preserving input order.

    Each element is bitwise-equal to the corresponding single call; worker
    scheduling cannot change values because every spec carries its own seed.
    The first failing index (lowest) is reported if any spec fails.
    """
    specs = list(specs)
    if not specs:
        return []
    if threads <= 1 or len(specs) == 1:
        results = []
        for i, spec in enumerate(specs):
            try:
                results.append(_generate_one(spec))
            except GenerationError as exc:
                raise GenerationError(f"spec {i}: {exc}") from exc
        return results

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_generate_one, spec) for spec in specs]
    results, failures = [], []
    for i, fut in enumerate(futures):
        exc = fut.exception()
        if exc is not None:
            failures.append((i, exc))
        else:
            results.append(fut.result())
    if failures:
        i, exc = min(failures, key=lambda pair: pair[0])
        raise GenerationError(f"spec {i}: {exc}") from exc
    return results
