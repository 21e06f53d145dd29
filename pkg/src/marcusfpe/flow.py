"""Marcus flow maps: forward map H, inverse map, and its Jacobian determinant.

H(u, v) is the time-1 solution of dPhi/dr = sigma(Phi) v from u; the inverse
map runs the reversed field -sigma(Psi) v.  Both are integrated with fixed-step
classical RK4.  The Jacobian determinant of the inverse map with respect to u
is accumulated alongside the state through the Liouville identity
d(log det)/dr = div of the driving field, evaluated at the same RK stage
points, which keeps the determinant positive by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DivergenceError

__all__ = ["NoiseCoefficient", "FlowResult", "marcus_forward", "marcus_inverse", "check_inverse"]


@dataclass
class NoiseCoefficient:
    """State-dependent noise matrix sigma and its spatial derivatives.

    ``sigma(x)`` maps points of shape (m, d) to matrices of shape (m, d, n).
    ``dsigma(x)`` returns shape (m, d, n, d) with entry [., i, j, k] equal to
    d sigma_ij / d x_k; when omitted it is replaced by central finite
    differences with step 1e-6 * (1 + |x|) per coordinate.
    """

    d: int
    n: int
    sigma: Callable[[np.ndarray], np.ndarray]
    dsigma: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.dsigma is None:
            self.dsigma = self._fd_dsigma

    def _fd_dsigma(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        out = np.empty(x.shape[:-1] + (self.d, self.n, self.d))
        for k in range(self.d):
            h = 1e-6 * (1.0 + np.abs(x[..., k]))
            xp = x.copy()
            xm = x.copy()
            xp[..., k] += h
            xm[..., k] -= h
            out[..., k] = (self.sigma(xp) - self.sigma(xm)) / (2.0 * h)[..., None, None]
        return out


@dataclass
class FlowResult:
    """Inverse-map output: mapped point(s), Jacobian determinant(s), step count."""

    point: np.ndarray
    jac_det: np.ndarray | float
    steps_used: int


def _as_batch(x, width: int) -> tuple[np.ndarray, bool]:
    """Promote scalar/(w,)/(m,w) input to (m, w); report whether it was single."""
    arr = np.asarray(x, float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
        return arr, True
    if arr.ndim == 1:
        if arr.shape[0] != width:
            raise ValueError(f"expected length {width}, got {arr.shape[0]}")
        return arr[None, :], True
    if arr.shape[1] != width:
        raise ValueError(f"expected width {width}, got {arr.shape[1]}")
    return arr, False


def _rk4(
    u: np.ndarray,
    v: np.ndarray,
    model: NoiseCoefficient,
    steps: int,
    sign: float,
    with_logdet: bool,
    check: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate dx/dr = sign * sigma(x) v on [0, 1]; optionally the log-det."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    h = 1.0 / steps

    def field(x):
        return sign * np.einsum("pij,pj->pi", model.sigma(x), v)

    def div(x):
        # divergence of the driving field: sum_i d/dx_i (sign * sigma_ij v_j)
        ds = model.dsigma(x)
        return sign * np.einsum("piji,pj->p", ds, v)

    x = u.copy()
    logdet = np.zeros(x.shape[0]) if with_logdet else None
    for k in range(steps):
        k1 = field(x)
        x2 = x + 0.5 * h * k1
        k2 = field(x2)
        x3 = x + 0.5 * h * k2
        k3 = field(x3)
        x4 = x + h * k3
        k4 = field(x4)
        if with_logdet:
            logdet += (h / 6.0) * (div(x) + 2.0 * div(x2) + 2.0 * div(x3) + div(x4))
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if check and not np.all(np.isfinite(x)):
            raise DivergenceError(
                f"flow integration diverged at step {k + 1} of {steps}", where=k + 1
            )
    return x, logdet


def marcus_forward(
    u, v, model: NoiseCoefficient, steps: int = 50, check: bool = True
) -> np.ndarray:
    """Point reached from ``u`` after flowing one unit along sigma(.) v.

    Accepts a single point (shape (d,)) or a batch (m, d); ``v`` broadcasts
    accordingly.  Raises :class:`DivergenceError` if the state leaves the
    finite range during integration.
    """
    ub, single_u = _as_batch(u, model.d)
    vb, single_v = _as_batch(v, model.n)
    if single_v and not single_u:
        vb = np.broadcast_to(vb, (ub.shape[0], model.n))
    if single_u and not single_v:
        ub = np.broadcast_to(ub, (vb.shape[0], model.d)).copy()
    x, _ = _rk4(np.array(ub, float), vb, model, steps, +1.0, False, check)
    return x[0] if single_u and single_v else x


def marcus_inverse(
    u, v, model: NoiseCoefficient, steps: int = 50, check: bool = True
) -> FlowResult:
    """Inverse Marcus map and its Jacobian determinant with respect to ``u``."""
    ub, single_u = _as_batch(u, model.d)
    vb, single_v = _as_batch(v, model.n)
    if single_v and not single_u:
        vb = np.broadcast_to(vb, (ub.shape[0], model.n))
    if single_u and not single_v:
        ub = np.broadcast_to(ub, (vb.shape[0], model.d)).copy()
    x, logdet = _rk4(np.array(ub, float), vb, model, steps, -1.0, True, check)
    jac = np.exp(logdet)
    if single_u and single_v:
        return FlowResult(point=x[0], jac_det=float(jac[0]), steps_used=steps)
    return FlowResult(point=x, jac_det=jac, steps_used=steps)


def check_inverse(u, v, model: NoiseCoefficient, steps: int = 200):
    """Residual |inverse(forward(u, v), v) - u| of the round trip."""
    ub, single = _as_batch(u, model.d)
    fwd = marcus_forward(ub, v, model, steps)
    back = marcus_inverse(fwd, v, model, steps).point
    res = np.linalg.norm(back - ub, axis=-1)
    return float(res[0]) if single else res
