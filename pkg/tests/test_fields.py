import numpy as np
import pytest

from donbench.errors import GenerationError
from donbench.fields import (
    GrfSpec,
    RbfProfileSpec,
    SampledFunction,
    batch_generate,
    evaluate_rbf_profile,
    generate_grf,
    generate_rbf_profile,
    knot_locations,
)

N_MC_SEEDS = 10_000


@pytest.fixture(scope="module")
def grf_ensemble_255():
    """10k realizations at the production sensor count."""
    spec = GrfSpec(n_points=255, seed=0, variance=1.0, mean=0.0,
                   correlation_length=0.1)
    fields = np.empty((N_MC_SEEDS, 255))
    for s in range(N_MC_SEEDS):
        fields[s] = generate_grf(GrfSpec(n_points=255, seed=s, variance=1.0,
                                         mean=0.0, correlation_length=0.1)).values
    return fields


@pytest.fixture(scope="module")
def grf_ensemble_251():
    """10k realizations on a grid where lag 0.1 is exactly 25 sensors."""
    fields = np.empty((N_MC_SEEDS, 251))
    for s in range(N_MC_SEEDS):
        fields[s] = generate_grf(GrfSpec(n_points=251, seed=s, variance=1.0,
                                         mean=0.0, correlation_length=0.1)).values
    return fields


def test_zero_variance_gives_constant_field():
    out = generate_grf(GrfSpec(n_points=5, seed=9, variance=0.0, mean=1.0))
    assert np.array_equal(out.values, np.ones(5))


def test_grf_determinism_bitwise():
    spec = GrfSpec(n_points=64, seed=1234)
    a = generate_grf(spec)
    b = generate_grf(spec)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.coords, b.coords)


def test_grf_seed_changes_values():
    a = generate_grf(GrfSpec(n_points=64, seed=1))
    b = generate_grf(GrfSpec(n_points=64, seed=2))
    assert not np.array_equal(a.values, b.values)


def test_grf_coords_equispaced_with_endpoints():
    out = generate_grf(GrfSpec(n_points=11, seed=0, domain_length=2.0))
    assert out.coords[0] == 0.0
    assert out.coords[-1] == 2.0
    assert np.allclose(np.diff(out.coords), 0.2)


def test_grf_monte_carlo_mean(grf_ensemble_255):
    # sample mean at a fixed sensor across 10k seeds estimates the field mean
    for sensor in (0, 127, 254):
        assert abs(grf_ensemble_255[:, sensor].mean()) < 0.05


def test_grf_monte_carlo_covariance_at_lag(grf_ensemble_251):
    # lag 0.1 is exactly 25 sensors on the 251-point grid
    x = grf_ensemble_251
    lag = 25
    pairs = x[:, :-lag] * x[:, lag:]
    empirical = pairs.mean()
    expected = np.exp(-0.5)  # variance * exp(-r^2 / (2 l^2)) at r = l = 0.1
    assert abs(empirical - expected) < 0.05


def test_grf_stationarity_variance_every_sensor(grf_ensemble_251):
    variances = grf_ensemble_251.var(axis=0)
    assert np.all(np.abs(variances - 1.0) < 0.10)


def test_grf_invalid_specs():
    with pytest.raises(ValueError):
        GrfSpec(n_points=1, seed=0)
    with pytest.raises(ValueError):
        GrfSpec(n_points=8, seed=0, variance=-1.0)
    with pytest.raises(ValueError):
        GrfSpec(n_points=8, seed=0, correlation_length=0.0)


def test_rbf_zero_knot_values_give_zero_profile():
    spec = RbfProfileSpec(seed=4, n_knots=2, knot_value_range=(0.0, 0.0))
    out = generate_rbf_profile(spec)
    assert np.max(np.abs(out.values)) < 1e-8


@pytest.mark.parametrize("seed", [0, 5, 17, 91])
def test_rbf_interpolant_reproduces_knots(seed):
    spec = RbfProfileSpec(seed=seed, n_knots=8, knot_value_range=(-3.0, 6.0))
    knots_t, knots_v = knot_locations(spec)
    values = evaluate_rbf_profile(spec, knots_t)
    scale = max(1.0, np.max(np.abs(knots_v)))
    assert np.max(np.abs(values - knots_v)) < 1e-8 * scale


@pytest.mark.parametrize("trend,comparator", [
    ("increasing", np.greater_equal),
    ("decreasing", np.less_equal),
])
def test_rbf_trend_sorting(trend, comparator):
    spec = RbfProfileSpec(seed=11, n_knots=8, trend=trend)
    _, knots_v = knot_locations(spec)
    assert np.all(comparator(np.diff(knots_v), 0.0) | (np.diff(knots_v) == 0.0))


def test_rbf_output_resolution_and_determinism():
    spec = RbfProfileSpec(seed=3, n_points=77)
    a = generate_rbf_profile(spec)
    b = generate_rbf_profile(spec)
    assert len(a) == 77
    assert np.array_equal(a.values, b.values)


def test_rbf_singular_system_raises():
    # an enormous kernel width makes all kernel entries ~1: singular system
    spec = RbfProfileSpec(seed=0, n_knots=8, rbf_width=1e8)
    with pytest.raises(GenerationError):
        generate_rbf_profile(spec)


def test_batch_matches_single_calls_bitwise():
    specs = [
        GrfSpec(n_points=32, seed=7),
        RbfProfileSpec(seed=8, n_points=32),
        GrfSpec(n_points=32, seed=9, mean=2.0, variance=0.25),
    ]
    batch = batch_generate(specs)
    singles = [generate_grf(specs[0]), generate_rbf_profile(specs[1]),
               generate_grf(specs[2])]
    for got, want in zip(batch, singles):
        assert np.array_equal(got.values, want.values)


def test_batch_empty():
    assert batch_generate([]) == []


def test_batch_thread_count_does_not_change_values():
    specs = [GrfSpec(n_points=24, seed=s) for s in range(20)]
    serial = batch_generate(specs, threads=1)
    parallel = batch_generate(specs, threads=4)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.values, b.values)


def test_batch_reports_first_failing_index():
    specs = [
        GrfSpec(n_points=16, seed=0),
        RbfProfileSpec(seed=1, rbf_width=1e8),  # singular
        RbfProfileSpec(seed=2, rbf_width=1e8),  # singular
    ]
    with pytest.raises(GenerationError, match="spec 1"):
        batch_generate(specs)
    with pytest.raises(GenerationError, match="spec 1"):
        batch_generate(specs, threads=3)


def test_distinct_seeds_give_distinct_fields():
    seen = set()
    for s in range(N_MC_SEEDS):
        out = generate_grf(GrfSpec(n_points=16, seed=s))
        seen.add(out.values.tobytes())
    assert len(seen) == N_MC_SEEDS


def test_sampled_function_validation():
    with pytest.raises(ValueError):
        SampledFunction(np.zeros(3), np.array([0.0, 0.0, 1.0]))  # not increasing
    with pytest.raises(ValueError):
        SampledFunction(np.zeros(3), np.zeros(4))  # length mismatch


def test_sampled_function_immutable():
    f = generate_grf(GrfSpec(n_points=8, seed=0))
    with pytest.raises(ValueError):
        f.values[0] = 99.0
