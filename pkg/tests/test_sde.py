"""Path simulation: moment laws, jump exactness, determinism, histograms."""

import math

import numpy as np
import pytest

from marcusfpe import (
    AlphaStable,
    CompoundPoisson,
    DiscreteDist,
    DivergenceError,
    GaussianInitial,
    Grid,
    LevyTriplet,
    ModelSpec,
    PathEnsemble,
    PointInitial,
    empirical_density,
    get_benchmark,
    simulate_ensemble,
    simulate_path,
    total_mass,
)

from conftest import constant_noise, example1_model, ou_model


def cp_delta_driver(rate: float, atom: float) -> LevyTriplet:
    return LevyTriplet(
        b=np.zeros(1),
        A=np.zeros((1, 1)),
        components=(CompoundPoisson(rate, DiscreteDist((atom,), (1.0,))),),
    )


# ---------------------------------------------------------------------------
# trivial and exact cases
# ---------------------------------------------------------------------------


def test_pure_driver_drift_with_zero_sigma():
    # sigma = 0 kills the driver drift contribution entirely
    model = ModelSpec(
        drift=lambda x: np.zeros_like(np.asarray(x, float)),
        noise=constant_noise([[0.0]]),
        driver=LevyTriplet(b=np.array([3.0]), A=np.zeros((1, 1))),
        x0=PointInitial([0.7]),
    )
    out = simulate_path(model, T=1.0, dt=0.1, eps=0.1, rng=np.random.default_rng(0))
    assert out == pytest.approx([0.7])


def test_pure_jump_scheme_exact_for_any_dt():
    # with f = 0, A = 0, b = 0 nothing happens between jumps, so every jump
    # doubles the state bit-exactly regardless of the step size
    model = example1_model(
        lambda x: np.zeros_like(x), cp_delta_driver(1.0, math.log(2.0)), PointInitial([1.0])
    )
    ens = simulate_ensemble(model, T=1.0, dt=0.37, eps=0.1, n_paths=4000, seed=5)
    logs = np.log2(ens.states[:, 0])
    assert np.array_equal(logs, np.round(logs))


def test_geometric_cp_mean():
    # each jump doubles X, so E X(T) = exp(lam T (2 - 1)) = e at T = 1
    model = example1_model(
        lambda x: np.zeros_like(x), cp_delta_driver(1.0, math.log(2.0)), PointInitial([1.0])
    )
    ens = simulate_ensemble(model, T=1.0, dt=0.05, eps=0.1, n_paths=200_000, seed=7)
    se = ens.states.std() / math.sqrt(ens.states.shape[0])
    assert ens.states.mean() == pytest.approx(math.e, abs=3 * se)


def test_ou_terminal_law():
    model = ou_model()
    model.x0 = PointInitial([1.0])
    T, n = 1.0, 50_000
    ens = simulate_ensemble(model, T=T, dt=2e-3, eps=0.1, n_paths=n, seed=42)
    mean_exact = math.exp(-T)
    var_exact = (1.0 - math.exp(-2 * T)) / 2.0
    se_mean = ens.states.std() / math.sqrt(n)
    x = ens.states[:, 0]
    centered = x - x.mean()
    se_var = math.sqrt(max(np.mean(centered**4) - x.var() ** 2, 0.0) / n)
    # allow the O(dt) Euler bias on top of the statistical band
    assert x.mean() == pytest.approx(mean_exact, abs=3 * se_mean + 1e-3)
    assert x.var() == pytest.approx(var_exact, abs=3 * se_var + 2e-3)


def test_ou_weak_convergence_in_dt():
    # the Euler mean of the linear SDE is x0 (1 - dt)^(T/dt): the deviation
    # from x0 e^{-T} halves with dt
    biases = [
        abs((1.0 - dt) ** round(1.0 / dt) - math.exp(-1.0)) for dt in (0.04, 0.02, 0.01)
    ]
    assert biases[1] / biases[0] == pytest.approx(0.5, abs=0.1)
    assert biases[2] / biases[1] == pytest.approx(0.5, abs=0.1)
    # and the simulated mean tracks the Euler-chain mean within noise
    model = ou_model()
    model.x0 = PointInitial([1.0])
    ens = simulate_ensemble(model, T=1.0, dt=0.04, eps=0.1, n_paths=100_000, seed=9)
    chain_mean = (1.0 - 0.04) ** 25
    se = ens.states.std() / math.sqrt(100_000)
    assert ens.states.mean() == pytest.approx(chain_mean, abs=3 * se)


def test_jump_via_numeric_flow_matches_closed_form():
    driver = cp_delta_driver(1.0, 0.4)
    with_cf = example1_model(lambda x: np.zeros_like(x), driver, PointInitial([1.3]))
    without = ModelSpec(
        drift=with_cf.drift,
        noise=with_cf.noise,
        driver=driver,
        x0=with_cf.x0,
        flow_steps=256,
    )
    a = simulate_ensemble(with_cf, T=1.0, dt=0.25, eps=0.1, n_paths=500, seed=3)
    b = simulate_ensemble(without, T=1.0, dt=0.25, eps=0.1, n_paths=500, seed=3)
    assert np.abs(a.states - b.states).max() <= 1e-8


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


def test_ensemble_deterministic_bitwise():
    model = example1_model(
        lambda x: np.zeros_like(x), cp_delta_driver(1.0, math.log(2.0)), PointInitial([1.0])
    )
    a = simulate_ensemble(model, T=1.0, dt=0.05, eps=0.1, n_paths=40_000, seed=123)
    b = simulate_ensemble(model, T=1.0, dt=0.05, eps=0.1, n_paths=40_000, seed=123)
    assert np.array_equal(a.states, b.states)
    c = simulate_ensemble(model, T=1.0, dt=0.05, eps=0.1, n_paths=40_000, seed=124)
    assert not np.array_equal(a.states, c.states)


def test_ensemble_divergence_policy():
    # explosive drift with a large step drives every path non-finite
    model = ModelSpec(
        drift=lambda x: np.asarray(x, float) ** 3,
        noise=constant_noise([[0.0]]),
        driver=LevyTriplet(b=np.zeros(1), A=np.zeros((1, 1))),
        x0=PointInitial([4.0]),
    )
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError, match="paths diverged"):
            simulate_ensemble(model, T=5.0, dt=0.5, eps=0.1, n_paths=256, seed=0)
        with pytest.raises(DivergenceError, match="diverged"):
            simulate_path(model, T=5.0, dt=0.5, eps=0.1, rng=np.random.default_rng(0))


def test_ensemble_validation():
    model = ou_model()
    with pytest.raises(ValueError, match="n_paths"):
        simulate_ensemble(model, T=1.0, dt=0.1, eps=0.1, n_paths=0, seed=0)
    with pytest.raises(ValueError, match="eps"):
        simulate_ensemble(model, T=1.0, dt=0.1, eps=0.0, n_paths=10, seed=0)


# ---------------------------------------------------------------------------
# empirical density
# ---------------------------------------------------------------------------


def _manual_ensemble(states: np.ndarray, T: float = 1.0) -> PathEnsemble:
    n = states.shape[0]
    return PathEnsemble(
        states=states,
        indices=np.arange(n),
        T=T,
        n_paths=n,
        dt=1e-2,
        eps=1e-2,
        seed=0,
    )


def test_density_single_point_mass():
    g = Grid(bounds=((0.0, 1.0),), cells=(10,))
    ens = _manual_ensemble(np.full((500, 1), 0.55))
    field = empirical_density(ens, g)
    assert field.values[5] == pytest.approx(1.0 / g.cell_volume)
    assert field.values.sum() == pytest.approx(field.values[5])


def test_density_gaussian_l1():
    rng = np.random.default_rng(2024)
    ens = _manual_ensemble(rng.standard_normal((1_000_000, 1)))
    g = Grid(bounds=((-5.0, 5.0),), cells=(200,))
    field = empirical_density(ens, g)
    x = g.axis_centers(0)
    exact = np.exp(-0.5 * x**2) / math.sqrt(2 * math.pi)
    l1 = np.abs(field.values - exact).sum() * g.cell_volume
    assert l1 <= 0.01


def test_density_empty_overlap_warns():
    g = Grid(bounds=((10.0, 11.0),), cells=(8,))
    ens = _manual_ensemble(np.zeros((100, 1)))
    with pytest.warns(UserWarning, match="covers only"):
        field = empirical_density(ens, g)
    assert np.array_equal(field.values, np.zeros(8))


def test_density_normalized_by_requested_paths():
    g = Grid(bounds=((-1.0, 1.0),), cells=(8,))
    states = np.concatenate([np.full((50, 1), 0.1), np.full((50, 1), 5.0)])
    ens = _manual_ensemble(states)
    with pytest.warns(UserWarning):
        field = empirical_density(ens, g)
    assert total_mass(field) == pytest.approx(0.5)


def test_oscillator_jumps_multiply_velocity_only():
    bench = get_benchmark("example2")
    driver = LevyTriplet(
        b=np.zeros(2),
        A=np.zeros((2, 2)),
        components=(CompoundPoisson(1.0, DiscreteDist((0.5,), (1.0,)), coordinate=1),),
    )
    model = ModelSpec(
        drift=lambda x: np.zeros_like(np.asarray(x, float)),
        noise=bench.noise,
        driver=driver,
        x0=PointInitial([0.4, 1.0]),
        closed_inverse=bench.closed.htilde,
        closed_forward=bench.closed.hforward,
    )
    ens = simulate_ensemble(model, T=1.0, dt=0.5, eps=0.1, n_paths=2000, seed=8)
    # first coordinate never moves (f = 0, jumps hit the second coordinate)
    assert np.array_equal(ens.states[:, 0], np.full(2000, 0.4))
    logs = np.log(ens.states[:, 1]) / 0.5
    assert np.abs(logs - np.round(logs)).max() <= 1e-12
