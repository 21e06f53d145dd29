"""Built-in benchmark models with closed-form Marcus maps.

Three families are registered for the CLI and the test oracles:

* ``example1`` -- scalar state, multiplicative noise sigma(x) = x; jumps act as
  x -> x e^v, so the inverse map is u e^{-v} with determinant e^{-v}.
* ``example2`` -- a stochastic oscillator (position, velocity) with noise
  matrix [[0, 0], [1, x2]]: an additive column for a Brownian coordinate and a
  multiplicative column for a jump coordinate.
* ``example3`` -- planar state with cross-coupled multiplicative noise
  diag-swapped as [[x2, 0], [0, x1]]; jump maps are hyperbolic/trigonometric
  rotations with unit Jacobian determinant.

All closed forms are exact solutions of the defining flow ODEs and are checked
against the numeric integrator in the test suite; the numeric flow is the
tie-breaking oracle whenever a printed formula is ambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .flow import NoiseCoefficient, _as_batch

__all__ = [
    "K",
    "cosbar",
    "sinbar",
    "example1_htilde",
    "example2_htilde",
    "example3_htilde",
    "ClosedFormMap",
    "BenchmarkModel",
    "get_benchmark",
    "BENCHMARKS",
]

_SERIES_CUT = 1e-5


def K(x):
    """(1 - e^x) / x, extended continuously by K(0) = -1.

    A three-term series is used for |x| < 1e-5 to avoid cancellation.
    """
    x = np.asarray(x, float)
    small = np.abs(x) < _SERIES_CUT
    xs = np.where(small, 0.0, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (1.0 - np.exp(xs)) / xs
    series = -(1.0 + x / 2.0 + x * x / 6.0)
    out = np.where(small, series, direct)
    return float(out) if out.ndim == 0 else out


def cosbar(x):
    """cosh(sqrt(x)) for x >= 0, cos(sqrt(-x)) for x < 0 (series near 0)."""
    x = np.asarray(x, float)
    small = np.abs(x) < _SERIES_CUT
    r = np.sqrt(np.abs(np.where(small, 0.0, x)))
    direct = np.where(x >= 0, np.cosh(r), np.cos(r))
    series = 1.0 + x / 2.0 + x * x / 24.0
    out = np.where(small, series, direct)
    return float(out) if out.ndim == 0 else out


def sinbar(x):
    """sinh(sqrt(x))/sqrt(x) for x > 0, 1 at 0, sin(sqrt(-x))/sqrt(-x) for x < 0."""
    x = np.asarray(x, float)
    small = np.abs(x) < _SERIES_CUT
    r = np.sqrt(np.abs(np.where(small, 1.0, x)))
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.where(x > 0, np.sinh(r) / r, np.sin(r) / r)
    series = 1.0 + x / 6.0 + x * x / 120.0
    out = np.where(small, series, direct)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Closed-form inverse maps
# ---------------------------------------------------------------------------


def example1_htilde(u, v):
    """Inverse jump map of sigma(x) = x: (u e^{-v}, e^{-v})."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    ev = np.exp(-v)
    return u * ev, ev


def example2_htilde(u, v2):
    """Oscillator inverse map with unit first jump coordinate.

    Returns ((u1, u1 K(-v2) + e^{-v2} u2), e^{-v2}), the time-1 solution of
    psi1' = 0, psi2' = -psi1 - v2 psi2 started at (u1, u2).  At v2 = 0 this is
    (u1, u2 - u1), consistent with the limiting value K(0) = -1.
    """
    u = np.asarray(u, float)
    v2 = np.asarray(v2, float)
    ev = np.exp(-v2)
    p1 = u[..., 0]
    p2 = u[..., 0] * K(-v2) + ev * u[..., 1]
    return np.stack([p1, p2], axis=-1), ev


def example3_htilde(u, v):
    """Cross-coupled inverse map built from cosbar/sinbar; unit determinant.

    For s = v1 v2 the map is linear: (u1 cosbar(s) - v1 u2 sinbar(s),
    -v2 u1 sinbar(s) + u2 cosbar(s)).  The determinant cosbar(s)^2 -
    s sinbar(s)^2 equals 1 identically but is evaluated from the formula.
    """
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    s = v[..., 0] * v[..., 1]
    c = cosbar(s)
    sb = sinbar(s)
    p1 = u[..., 0] * c - v[..., 0] * u[..., 1] * sb
    p2 = -v[..., 1] * u[..., 0] * sb + u[..., 1] * c
    jac = c * c - s * sb * sb
    return np.stack([p1, p2], axis=-1), jac


# ---------------------------------------------------------------------------
# Benchmark registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClosedFormMap:
    """Closed-form jump maps for one model: inverse with Jacobian, and forward.

    ``htilde(u, v) -> (point, jac_det)`` and ``hforward(u, v) -> point`` accept
    batches (m, d) / (m, n).  ``domain`` documents validity; all registered
    maps are global.
    """

    model_id: str
    htilde: Callable
    hforward: Callable
    domain: str = "all of R^d x R^n"


def _sigma_example1(x):
    x = np.asarray(x, float)
    return x[:, :, None]


def _dsigma_example1(x):
    m = np.asarray(x).shape[0]
    out = np.zeros((m, 1, 1, 1))
    out[:, 0, 0, 0] = 1.0
    return out


def _sigma_example2(x):
    x = np.asarray(x, float)
    m = x.shape[0]
    out = np.zeros((m, 2, 2))
    out[:, 1, 0] = 1.0
    out[:, 1, 1] = x[:, 1]
    return out


def _dsigma_example2(x):
    m = np.asarray(x).shape[0]
    out = np.zeros((m, 2, 2, 2))
    out[:, 1, 1, 1] = 1.0
    return out


def _sigma_example3(x):
    x = np.asarray(x, float)
    m = x.shape[0]
    out = np.zeros((m, 2, 2))
    out[:, 0, 0] = x[:, 1]
    out[:, 1, 1] = x[:, 0]
    return out


def _dsigma_example3(x):
    m = np.asarray(x).shape[0]
    out = np.zeros((m, 2, 2, 2))
    out[:, 0, 0, 1] = 1.0
    out[:, 1, 1, 0] = 1.0
    return out


def _ex1_inverse(u, v):
    ub, su = _as_batch(u, 1)
    vb, sv = _as_batch(v, 1)
    pt, jac = example1_htilde(ub, vb)
    jac = jac[:, 0]
    return (pt[0], float(jac[0])) if su and sv else (pt, jac)


def _ex1_forward(u, v):
    ub, su = _as_batch(u, 1)
    vb, sv = _as_batch(v, 1)
    pt = ub * np.exp(vb)
    return pt[0] if su and sv else pt


def _ex2_inverse(u, v):
    # time-1 solution of psi1' = 0, psi2' = -(v1 + v2 psi2)
    ub, su = _as_batch(u, 2)
    vb, sv = _as_batch(v, 2)
    ev = np.exp(-vb[:, 1])
    p2 = vb[:, 0] * K(-vb[:, 1]) + ev * ub[:, 1]
    pt = np.stack([ub[:, 0], p2], axis=-1)
    return (pt[0], float(ev[0])) if su and sv else (pt, ev)


def _ex2_forward(u, v):
    ub, su = _as_batch(u, 2)
    vb, sv = _as_batch(v, 2)
    p2 = np.exp(vb[:, 1]) * ub[:, 1] - vb[:, 0] * K(vb[:, 1])
    pt = np.stack([ub[:, 0], p2], axis=-1)
    return pt[0] if su and sv else pt


def _ex3_inverse(u, v):
    ub, su = _as_batch(u, 2)
    vb, sv = _as_batch(v, 2)
    pt, jac = example3_htilde(ub, vb)
    return (pt[0], float(jac[0])) if su and sv else (pt, jac)


def _ex3_forward(u, v):
    ub, su = _as_batch(u, 2)
    vb, sv = _as_batch(v, 2)
    pt, _ = example3_htilde(ub, -vb)
    return pt[0] if su and sv else pt


def _drift_example2(x):
    x = np.asarray(x, float)
    return np.stack([x[:, 1], -x[:, 0]], axis=-1)


def _drift_zero(x):
    return np.zeros_like(np.asarray(x, float))


@dataclass(frozen=True)
class BenchmarkModel:
    """Registered geometry: noise coefficient, default drift, closed-form maps."""

    model_id: str
    d: int
    n: int
    noise: NoiseCoefficient
    default_drift: Callable
    closed: ClosedFormMap
    description: str


BENCHMARKS: dict[str, BenchmarkModel] = {
    "example1": BenchmarkModel(
        "example1",
        1,
        1,
        NoiseCoefficient(1, 1, _sigma_example1, _dsigma_example1),
        _drift_zero,
        ClosedFormMap("example1", _ex1_inverse, _ex1_forward),
        "scalar multiplicative noise sigma(x) = x",
    ),
    "example2": BenchmarkModel(
        "example2",
        2,
        2,
        NoiseCoefficient(2, 2, _sigma_example2, _dsigma_example2),
        _drift_example2,
        ClosedFormMap("example2", _ex2_inverse, _ex2_forward),
        "oscillator with additive Brownian column and multiplicative jump column",
    ),
    "example3": BenchmarkModel(
        "example3",
        2,
        2,
        NoiseCoefficient(2, 2, _sigma_example3, _dsigma_example3),
        _drift_zero,
        ClosedFormMap("example3", _ex3_inverse, _ex3_forward),
        "cross-coupled multiplicative noise diag(x2, x1)",
    ),
}


def get_benchmark(model_id: str) -> BenchmarkModel:
    try:
        return BENCHMARKS[model_id]
    except KeyError:
        raise ConfigError(f"unknown model {model_id!r}", path="model") from None
