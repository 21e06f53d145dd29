"""Nonlocal Fokker-Planck operator for Marcus SDEs on regular 1D/2D grids.

The density evolves under three parts:

* minus the divergence of (drift + sigma b + Stratonovich correction) p,
* second derivatives of the Gaussian diffusion matrix D = sigma A sigma^T / 2
  applied to D p,
* a jump integral that gathers p at the inverse-mapped point weighted by the
  Jacobian determinant of the inverse map, subtracts p, and adds the
  small-jump compensator divergence for jump sizes below unit norm.

Spatial derivatives are second-order central differences with the density
treated as zero outside the domain (absorbing far field).  Off-grid gather
points use multilinear interpolation, zero outside.  Time stepping is explicit
midpoint RK2 under a stability bound combining diffusion, advection, jump
intensity, and a guard against the slow amplification of grid-frequency modes
by centered advection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import InstabilityError
from .flow import marcus_inverse
from .levy import CompoundPoisson
from .model import ModelSpec

__all__ = [
    "Grid",
    "DensityField",
    "JumpQuadrature",
    "effective_drift",
    "diffusion_matrix",
    "build_jump_quadrature",
    "apply_rhs",
    "step",
    "solve",
    "stability_dt",
    "total_mass",
]


# ---------------------------------------------------------------------------
# Grid and density field
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on a box, one or two dimensions."""

    bounds: tuple[tuple[float, float], ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        cells = tuple(int(c) for c in self.cells)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "cells", cells)
        if len(bounds) != len(cells):
            raise ValueError("bounds and cells must have one entry per axis")
        if len(bounds) not in (1, 2):
            raise ValueError(f"only 1D and 2D grids are supported, got {len(bounds)}D")
        for a, ((lo, hi), c) in enumerate(zip(bounds, cells)):
            if not hi > lo:
                raise ValueError(f"axis {a}: bounds must be ordered, got [{lo}, {hi}]")
            if c < 8:
                raise ValueError(f"axis {a}: need at least 8 cells, got {c}")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def dx(self) -> np.ndarray:
        return np.array(
            [(hi - lo) / c for (lo, hi), c in zip(self.bounds, self.cells)]
        )

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    def axis_centers(self, a: int) -> np.ndarray:
        lo, hi = self.bounds[a]
        c = self.cells[a]
        d = (hi - lo) / c
        return lo + d * (np.arange(c) + 0.5)

    def axis_edges(self, a: int) -> np.ndarray:
        lo, hi = self.bounds[a]
        return np.linspace(lo, hi, self.cells[a] + 1)

    def centers(self) -> np.ndarray:
        """All cell centers as an (N, d) array, row-major over the grid."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class DensityField:
    """Gridded density p(x, t): values at cell centers (probability per volume)."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )

    def copy(self) -> "DensityField":
        return DensityField(self.grid, self.values.copy(), self.time)

    @property
    def mass(self) -> float:
        return total_mass(self)


def total_mass(field: DensityField) -> float:
    """Integral of the field over its grid (cell sums times cell volume)."""
    return float(field.values.sum() * field.grid.cell_volume)


def l1_distance(a: DensityField, b: DensityField) -> float:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return float(np.abs(a.values - b.values).sum() * a.grid.cell_volume)


def linf_distance(a: DensityField, b: DensityField) -> float:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return float(np.abs(a.values - b.values).max())


# ---------------------------------------------------------------------------
# Local coefficients
# ---------------------------------------------------------------------------


def effective_drift(model: ModelSpec, x, b: np.ndarray | None = None) -> np.ndarray:
    """Drift vector f + sigma b + (1/2) (d sigma) sigma A, rows per point.

    ``b`` defaults to the declared driver drift; when assembling the full
    operator the solver passes the standard-convention variant
    b + compensator_drift instead (see ``levy``), whose extra piece cancels
    the indicator term of the jump integral.
    """
    pts = np.asarray(x, float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if b is None:
        b = model.driver.b
    sig = model.noise.sigma(pts)
    out = model.drift(pts) + sig @ b
    A = model.driver.A
    if np.any(A != 0.0):
        dsig = model.noise.dsigma(pts)
        out = out + 0.5 * np.einsum("pijm,pml,lj->pi", dsig, sig, A)
    return out[0] if single else out


def diffusion_matrix(model: ModelSpec, x) -> np.ndarray:
    """Gaussian diffusion D(x) = (1/2) sigma(x) A sigma(x)^T per point."""
    pts = np.asarray(x, float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    sig = model.noise.sigma(pts)
    out = 0.5 * np.einsum("pij,jl,pml->pim", sig, model.driver.A, sig)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Jump quadrature
# ---------------------------------------------------------------------------


@dataclass
class JumpQuadrature:
    """Discretized jump measure with cached inverse-map data per (cell, node).

    ``nodes`` (K, n) and ``weights`` (K,) carry the measure; for each node the
    inverse-mapped cell centers are stored as multilinear gather indices into
    the flattened field (index C points at an appended zero slot for off-grid
    targets) with weights already multiplied by the Jacobian determinant.
    ``comp_vec`` accumulates sum_k w_k y_k 1_{|y_k| < 1}, the coefficient of
    the compensator divergence.  Local drift/diffusion coefficients on the
    grid are cached here as well so the right-hand side is allocation-light.
    """

    grid: Grid
    nodes: np.ndarray
    weights: np.ndarray
    comp_vec: np.ndarray
    gather_idx: np.ndarray
    gather_w: np.ndarray
    nu_total: float
    drift_cells: np.ndarray = dc_field(repr=False, default=None)  # type: ignore
    diff_cells: np.ndarray = dc_field(repr=False, default=None)  # type: ignore
    comp_field: np.ndarray = dc_field(repr=False, default=None)  # type: ignore


def _component_nodes(comp, eps: float, R: float, nodes_per_decade: int):
    """Scalar nodes and nu-weights for one jump component."""
    if isinstance(comp, CompoundPoisson):
        y, rho_w = comp.sizes.quadrature()
        keep = rho_w != 0.0
        return y[keep], comp.rate * rho_w[keep]
    if not 0.0 < eps < 1.0 < R:
        raise ValueError(
            f"stable quadrature needs 0 < eps < 1 < R, got eps={eps!r}, R={R!r}"
        )
    n_cells = max(1, math.ceil(math.log10(R / eps) * nodes_per_decade))
    edges = np.geomspace(eps, R, n_cells + 1)
    mass = (edges[:-1] ** -comp.alpha - edges[1:] ** -comp.alpha) / comp.alpha
    mid = np.sqrt(edges[:-1] * edges[1:])
    y = np.concatenate([-mid[::-1], mid])
    w = np.concatenate([mass[::-1], mass])
    return y, w


def _gather_tables(grid: Grid, points: np.ndarray):
    """Multilinear interpolation tables for arbitrary points, zero off-grid.

    ``points`` has shape (..., d); returns integer indices (..., 2^d) into the
    flattened field extended by one zero slot, and matching weights.
    """
    d = grid.dim
    shape = points.shape[:-1]
    sentinel = grid.size
    idx_ax = []
    frac_ax = []
    for a in range(d):
        lo, _ = grid.bounds[a]
        t = (points[..., a] - lo) / grid.dx[a] - 0.5
        # non-finite or absurdly distant targets are off-grid by definition
        t = np.where(np.isfinite(t), np.clip(t, -2e9, 2e9), -2e9)
        i0 = np.floor(t).astype(np.int64)
        frac = t - i0
        idx_ax.append(i0)
        frac_ax.append(frac)

    corners = []
    weights = []
    for corner in range(2**d):
        idx_flat = np.zeros(shape, dtype=np.int64)
        w = np.ones(shape)
        valid = np.ones(shape, dtype=bool)
        for a in range(d):
            off = (corner >> a) & 1
            ia = idx_ax[a] + off
            wa = frac_ax[a] if off else 1.0 - frac_ax[a]
            valid &= (ia >= 0) & (ia < grid.cells[a])
            idx_flat = idx_flat * grid.cells[a] + np.clip(ia, 0, grid.cells[a] - 1)
            w = w * wa
        corners.append(np.where(valid, idx_flat, sentinel))
        weights.append(np.where(valid, w, 0.0))
    return np.stack(corners, axis=-1), np.stack(weights, axis=-1)


def build_jump_quadrature(
    model: ModelSpec,
    grid: Grid,
    eps: float = 1e-2,
    R: float = 100.0,
    nodes_per_decade: int = 32,
    max_cache_bytes: int = 1 << 30,
) -> JumpQuadrature:
    """Discretize the jump measure and cache inverse-map data on the grid.

    Stable components use log-spaced nodes on +-[eps, R] whose weights are the
    exact measure mass of each log cell; compound-Poisson components use their
    atom tables or Gauss-Legendre nodes on the support of the size law.  For
    every (cell, node) pair the inverse map and its Jacobian determinant are
    evaluated once (closed form when registered, numeric flow otherwise).
    """
    n = model.n
    ys: list[np.ndarray] = []
    ws: list[np.ndarray] = []
    for comp in model.driver.components:
        y_s, w_s = _component_nodes(comp, eps, R, nodes_per_decade)
        vec = np.zeros((y_s.shape[0], n))
        vec[:, comp.coordinate] = y_s
        ys.append(vec)
        ws.append(w_s)
    if ys:
        nodes = np.concatenate(ys, axis=0)
        weights = np.concatenate(ws, axis=0)
    else:
        nodes = np.zeros((0, n))
        weights = np.zeros(0)

    K_nodes = nodes.shape[0]
    C = grid.size
    est_bytes = K_nodes * C * (2**grid.dim * 16 + 8) + K_nodes * C * 8 * grid.dim
    if est_bytes > max_cache_bytes:
        raise ValueError(
            f"jump quadrature cache would need about {est_bytes} bytes, "
            f"exceeding the cap of {max_cache_bytes}; coarsen the grid or "
            "lower nodes_per_decade"
        )

    centers = grid.centers()
    if K_nodes:
        u_all = np.repeat(centers[None, :, :], K_nodes, axis=0).reshape(-1, model.d)
        v_all = np.repeat(nodes[:, None, :], C, axis=1).reshape(-1, n)
        if model.closed_inverse is not None:
            mapped, jac = model.closed_inverse(u_all, v_all)
        else:
            res = marcus_inverse(u_all, v_all, model.noise, steps=model.flow_steps)
            mapped, jac = res.point, res.jac_det
        mapped = mapped.reshape(K_nodes, C, model.d)
        jac = np.asarray(jac).reshape(K_nodes, C)
        gather_idx, gather_w = _gather_tables(grid, mapped)
        # an off-grid target has zero weights already; keep 0 * inf out of it
        gather_w = gather_w * np.where(np.isfinite(jac), jac, 0.0)[:, :, None]
    else:
        gather_idx = np.zeros((0, C, 2**grid.dim), dtype=np.int64)
        gather_w = np.zeros((0, C, 2**grid.dim))

    norms = np.linalg.norm(nodes, axis=1) if K_nodes else np.zeros(0)
    comp_vec = (
        (weights[:, None] * nodes * (norms < 1.0)[:, None]).sum(axis=0)
        if K_nodes
        else np.zeros(n)
    )

    quad = JumpQuadrature(
        grid=grid,
        nodes=nodes,
        weights=weights,
        comp_vec=comp_vec,
        gather_idx=gather_idx,
        gather_w=gather_w,
        nu_total=float(weights.sum()),
    )
    # the declared driver drift is uncompensated; the operator form pairs the
    # standard-convention drift with the indicator term of the jump integral
    b_std = model.driver.b + model.driver.compensator_drift()
    quad.drift_cells = effective_drift(model, centers, b=b_std).reshape(
        grid.shape + (model.d,)
    )
    quad.diff_cells = diffusion_matrix(model, centers).reshape(
        grid.shape + (model.d, model.d)
    )
    sig = model.noise.sigma(centers)
    quad.comp_field = (sig @ comp_vec).reshape(grid.shape + (model.d,))
    return quad


# ---------------------------------------------------------------------------
# Centered stencils with zero far field
# ---------------------------------------------------------------------------


def _ddx(G: np.ndarray, dx: float, axis: int) -> np.ndarray:
    pad = [(0, 0)] * G.ndim
    pad[axis] = (1, 1)
    Ge = np.pad(G, pad)
    lo = [slice(None)] * G.ndim
    hi = [slice(None)] * G.ndim
    lo[axis] = slice(0, -2)
    hi[axis] = slice(2, None)
    return (Ge[tuple(hi)] - Ge[tuple(lo)]) / (2.0 * dx)


def _d2dx2(G: np.ndarray, dx: float, axis: int) -> np.ndarray:
    pad = [(0, 0)] * G.ndim
    pad[axis] = (1, 1)
    Ge = np.pad(G, pad)
    lo = [slice(None)] * G.ndim
    hi = [slice(None)] * G.ndim
    mid = [slice(None)] * G.ndim
    lo[axis] = slice(0, -2)
    hi[axis] = slice(2, None)
    mid[axis] = slice(1, -1)
    return (Ge[tuple(hi)] - 2.0 * Ge[tuple(mid)] + Ge[tuple(lo)]) / (dx * dx)


def _d2dxdy(G: np.ndarray, dx0: float, dx1: float) -> np.ndarray:
    Ge = np.pad(G, ((1, 1), (1, 1)))
    return (Ge[2:, 2:] - Ge[2:, :-2] - Ge[:-2, 2:] + Ge[:-2, :-2]) / (4.0 * dx0 * dx1)


# ---------------------------------------------------------------------------
# Right-hand side and time stepping
# ---------------------------------------------------------------------------


def apply_rhs(model: ModelSpec, quad: JumpQuadrature, field: DensityField) -> np.ndarray:
    """dp/dt at cell centers for the current density."""
    grid = field.grid
    p = field.values
    dx = grid.dx
    d = grid.dim

    out = np.zeros_like(p)
    # advection: -div(a p)
    for a in range(d):
        out -= _ddx(quad.drift_cells[..., a] * p, dx[a], a)
    # diffusion: sum_im d2(D_im p)
    if np.any(quad.diff_cells != 0.0):
        for a in range(d):
            out += _d2dx2(quad.diff_cells[..., a, a] * p, dx[a], a)
        if d == 2 and np.any(quad.diff_cells[..., 0, 1] != 0.0):
            out += 2.0 * _d2dxdy(quad.diff_cells[..., 0, 1] * p, dx[0], dx[1])

    if quad.nodes.shape[0]:
        p_ext = np.append(p.ravel(), 0.0)
        gathered = (p_ext[quad.gather_idx] * quad.gather_w).sum(axis=-1)
        jump_flat = quad.weights @ gathered
        out += jump_flat.reshape(grid.shape) - quad.nu_total * p
        if np.any(quad.comp_vec != 0.0):
            for a in range(d):
                out += _ddx(quad.comp_field[..., a] * p, dx[a], a)
    return out


def step(
    model: ModelSpec, quad: JumpQuadrature, field: DensityField, dt: float
) -> DensityField:
    """One explicit midpoint (RK2) step of length dt."""
    k1 = apply_rhs(model, quad, field)
    mid = DensityField(field.grid, field.values + 0.5 * dt * k1, field.time + 0.5 * dt)
    k2 = apply_rhs(model, quad, mid)
    new = field.values + dt * k2
    old_max = float(np.abs(field.values).max())
    new_max = float(np.abs(new).max())
    if not np.isfinite(new_max) or (old_max > 0.0 and new_max > 10.0 * old_max):
        raise InstabilityError(
            f"density blow-up at t={field.time + dt:.6g}: sup |p| grew from "
            f"{old_max:.3e} to {new_max:.3e} in one step of dt={dt:.3e}"
        )
    return DensityField(field.grid, new, field.time + dt)


def stability_dt(model: ModelSpec, quad: JumpQuadrature, T: float) -> float:
    """Explicit-step bound covering diffusion, advection, jump intensity, and
    the slow RK2/central amplification of grid modes under pure advection."""
    grid = quad.grid
    dx_min = float(grid.dx.min())
    a_max = 0.0
    for a in range(grid.dim):
        a_ax = float(np.abs(quad.drift_cells[..., a]).max())
        a_max = max(a_max, a_ax)
    d_max = float(np.abs(quad.diff_cells).sum(axis=-1).max()) if quad.diff_cells.size else 0.0

    candidates = []
    if d_max > 0.0:
        candidates.append(dx_min**2 / (2.0 * d_max))
    if a_max > 0.0:
        adv = min(
            float(grid.dx[a]) / max(float(np.abs(quad.drift_cells[..., a]).max()), 1e-300)
            for a in range(grid.dim)
        )
        candidates.append(adv)
    if quad.nu_total > 0.0:
        candidates.append(1.0 / quad.nu_total)
    dt = 0.4 * min(candidates) if candidates else T
    if a_max > 0.0:
        # keep the accumulated growth exponent T a^4 dt^3 / (8 dx^4) below ~1
        growth = (8.0 * dx_min**4 / (T * a_max**4)) ** (1.0 / 3.0)
        dt = min(dt, growth)
    return min(dt, T)


def solve(
    model: ModelSpec,
    grid: Grid,
    p0: DensityField | np.ndarray,
    T: float,
    dt: float | None = None,
    eps: float = 1e-2,
    R: float = 100.0,
    nodes_per_decade: int = 32,
    quad: JumpQuadrature | None = None,
    snapshot_times: list[float] | None = None,
    on_snapshot=None,
    renormalize: bool = False,
    renorm_threshold: float = 1e-3,
    event_log: list | None = None,
    max_cache_bytes: int = 1 << 30,
) -> DensityField:
    """Advance the density from time 0 to T; returns the final field.

    ``snapshot_times`` are hit exactly (the step size is shortened per
    segment); each snapshot is passed to ``on_snapshot``.  When
    ``renormalize`` is set, a total-mass drift beyond ``renorm_threshold``
    rescales the field and logs an event; by default no rescaling happens, so
    legitimate probability outflow through the far field is preserved.
    Negative undershoot is clipped once at the end (extent logged).
    """
    if isinstance(p0, DensityField):
        field = DensityField(grid, p0.values.copy(), 0.0)
    else:
        field = DensityField(grid, np.array(p0, float), 0.0)
    if T == 0.0:
        return field
    if quad is None:
        quad = build_jump_quadrature(
            model, grid, eps=eps, R=R, nodes_per_decade=nodes_per_decade,
            max_cache_bytes=max_cache_bytes,
        )
    dt_target = stability_dt(model, quad, T) if dt is None else float(dt)
    mass0 = total_mass(field)

    times = sorted(t for t in (snapshot_times or []) if 0.0 < t <= T)
    if not times or times[-1] < T:
        times.append(T)
    t_prev = 0.0
    for t_stop in times:
        seg = t_stop - t_prev
        n_steps = max(1, math.ceil(seg / dt_target - 1e-12))
        h = seg / n_steps
        for _ in range(n_steps):
            field = step(model, quad, field, h)
            if renormalize:
                m = total_mass(field)
                if abs(m - mass0) > renorm_threshold:
                    if m <= 0.5 * mass0:
                        raise InstabilityError(
                            f"mass collapsed to {m:.3e} of {mass0:.3e} by "
                            f"t={field.time:.6g}; renormalization refused"
                        )
                    field.values *= mass0 / m
                    if event_log is not None:
                        event_log.append(
                            {"event": "renormalized", "time": field.time, "mass": m}
                        )
        field.time = t_stop  # suppress roundoff accumulation in the time stamp
        if on_snapshot is not None and t_stop < T:
            on_snapshot(field.copy())
        t_prev = t_stop

    min_val = float(field.values.min())
    if min_val < 0.0:
        if event_log is not None:
            event_log.append(
                {"event": "negative_clip", "time": field.time, "min_value": min_val}
            )
        field.values = np.clip(field.values, 0.0, None)
    return field
