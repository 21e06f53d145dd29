"""Closed-form maps and special functions of the built-in benchmark models."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marcusfpe import (
    BENCHMARKS,
    ConfigError,
    K,
    NoiseCoefficient,
    cosbar,
    example1_htilde,
    example2_htilde,
    example3_htilde,
    get_benchmark,
    marcus_forward,
    marcus_inverse,
    sinbar,
)

E = math.e


def coupled_oscillator_noise():
    """Noise matrix [[0, 0], [x1, x2]]: the variant whose flow at v1 = 1
    reproduces the (u1 K(-v2) + e^{-v2} u2) closed form for every v2."""

    def sigma(x):
        x = np.asarray(x, float)
        out = np.zeros((x.shape[0], 2, 2))
        out[:, 1, 0] = x[:, 0]
        out[:, 1, 1] = x[:, 1]
        return out

    def dsigma(x):
        m = np.asarray(x).shape[0]
        out = np.zeros((m, 2, 2, 2))
        out[:, 1, 0, 0] = 1.0
        out[:, 1, 1, 1] = 1.0
        return out

    return NoiseCoefficient(2, 2, sigma, dsigma)


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------


def test_K_at_zero_and_one():
    assert K(0.0) == -1.0
    assert K(1.0) == pytest.approx(1.0 - E, rel=1e-15)


def test_K_near_zero_cancellation_guard():
    assert abs(K(1e-8) + 1.0) <= 1e-7
    # continuity across the series cut
    lo, hi = 0.999e-5, 1.001e-5
    assert K(hi) - K(lo) == pytest.approx(-(hi - lo) / 2.0, rel=1e-3)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=-30.0, max_value=30.0).filter(lambda x: abs(x) > 1e-5))
def test_K_identity(x):
    assert x * K(x) == pytest.approx(1.0 - math.exp(x), rel=1e-12, abs=1e-300)


def test_cosbar_sinbar_at_zero():
    assert cosbar(0.0) == 1.0
    assert sinbar(0.0) == 1.0


def test_cosbar_sinbar_both_signs():
    assert cosbar(4.0) == pytest.approx(math.cosh(2.0), rel=1e-15)
    assert cosbar(-4.0) == pytest.approx(math.cos(2.0), rel=1e-15)
    assert sinbar(4.0) == pytest.approx(math.sinh(2.0) / 2.0, rel=1e-15)
    assert sinbar(-4.0) == pytest.approx(math.sin(2.0) / 2.0, rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-10.0, max_value=10.0))
def test_volume_preservation_identity(s):
    # cosbar(s)^2 - s sinbar(s)^2 = 1 for every s
    assert cosbar(s) ** 2 - s * sinbar(s) ** 2 == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# closed forms against frozen values
# ---------------------------------------------------------------------------


def test_example1_closed_values():
    pt, jac = example1_htilde(2.0, math.log(2.0))
    assert pt == pytest.approx(1.0) and jac == pytest.approx(0.5)
    pt, jac = example1_htilde(0.37, 0.0)
    assert pt == 0.37 and jac == 1.0
    pt, jac = example1_htilde(1.0, -1.0)
    assert pt == pytest.approx(E) and jac == pytest.approx(E)


def test_example2_closed_values():
    pt, jac = example2_htilde(np.array([0.0, 1.0]), math.log(2.0))
    assert pt == pytest.approx([0.0, 0.5]) and jac == pytest.approx(0.5)
    # at v2 = 0 the map shears by the full first coordinate (K(0) = -1)
    pt, jac = example2_htilde(np.array([1.5, 0.25]), 0.0)
    assert pt == pytest.approx([1.5, 0.25 - 1.5]) and jac == 1.0


def test_example2_large_v2_limit():
    # second component decays to u1 K(-v2) -> 0- like -1/v2
    pt, _ = example2_htilde(np.array([1.0, 0.0]), 30.0)
    assert -0.04 < pt[1] < 0.0
    pt, _ = example2_htilde(np.array([1.0, 0.0]), 300.0)
    assert -0.004 < pt[1] < 0.0


def test_example2_closed_matches_coupled_flow():
    # the printed closed form is the numeric flow of the coupled-noise
    # variant at unit first jump coordinate, including at v2 = 0
    noise = coupled_oscillator_noise()
    rng = np.random.default_rng(0)
    u = rng.uniform(-3, 3, size=(50, 2))
    v2 = np.append(rng.uniform(-2, 2, size=49), 0.0)
    v = np.stack([np.ones(50), v2], axis=-1)
    res = marcus_inverse(u, v, noise, steps=200)
    pt, jac = example2_htilde(u, v2)
    assert np.abs(res.point - pt).max() <= 1e-8
    assert np.abs(res.jac_det - jac).max() <= 1e-6


def test_example3_closed_values():
    pt, jac = example3_htilde(np.array([0.4, -0.8]), np.zeros(2))
    assert pt == pytest.approx([0.4, -0.8]) and jac == pytest.approx(1.0)
    pt, jac = example3_htilde(np.array([1.0, 0.0]), np.array([1.0, 1.0]))
    assert pt == pytest.approx([math.cosh(1.0), -math.sinh(1.0)], rel=1e-12)
    assert jac == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# registered maps against the numeric flow (the tie-breaking oracle)
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["example1", "example2", "example3"])
def test_registered_inverse_matches_flow(name):
    bench = get_benchmark(name)
    rng = np.random.default_rng(sum(map(ord, name)))
    u = rng.uniform(-3, 3, size=(100, bench.d))
    v = rng.uniform(-2, 2, size=(100, bench.n))
    res = marcus_inverse(u, v, bench.noise, steps=200)
    pt, jac = bench.closed.htilde(u, v)
    assert np.abs(res.point - pt).max() <= 1e-8
    assert np.abs(res.jac_det - jac).max() <= 1e-6


@pytest.mark.parametrize("name", ["example1", "example2", "example3"])
def test_registered_forward_matches_flow(name):
    bench = get_benchmark(name)
    rng = np.random.default_rng(7 + sum(map(ord, name)))
    u = rng.uniform(-3, 3, size=(60, bench.d))
    v = rng.uniform(-2, 2, size=(60, bench.n))
    fwd = marcus_forward(u, v, bench.noise, steps=200)
    assert np.abs(bench.closed.hforward(u, v) - fwd).max() <= 1e-8


@pytest.mark.parametrize("name", ["example1", "example2", "example3"])
def test_closed_round_trip(name):
    bench = get_benchmark(name)
    rng = np.random.default_rng(11)
    u = rng.uniform(-3, 3, size=(40, bench.d))
    v = rng.uniform(-2, 2, size=(40, bench.n))
    back, _ = bench.closed.htilde(bench.closed.hforward(u, v), v)
    assert np.abs(back - u).max() <= 1e-10


def test_unknown_benchmark_id():
    with pytest.raises(ConfigError, match="unknown model"):
        get_benchmark("example9")
