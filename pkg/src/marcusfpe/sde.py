"""Jump-adapted Euler simulation of Marcus SDE paths.

Between jumps the state follows the Ito-form continuous dynamics: drift f,
the driver drift through sigma, the Stratonovich correction, and the Gaussian
part through sigma tau.  Finite-activity jumps are applied exactly at their
sampled times through the forward Marcus map (closed form when the model
registers one, numeric flow otherwise), so the only discretization error is
the Euler step of the continuous part.

The driver drift convention is uncompensated (see ``levy``): sampled jumps
are raw and the declared b enters the continuous part as is.  The density
solver consumes the same triplet through its compensator bookkeeping, so both
sides target the same process.

Paths are simulated in fixed-size chunks, each with an RNG stream spawned
deterministically from (seed, chunk index), so ensembles are reproducible
bit-for-bit for a given path count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .flow import marcus_forward
from .fpe import DensityField, Grid, effective_drift
from .levy import AlphaStable, CompoundPoisson, stable_tail_mass, _sample_stable_tail
from .model import ModelSpec

__all__ = ["PathEnsemble", "simulate_path", "simulate_ensemble", "empirical_density"]

CHUNK_SIZE = 16384


@dataclass
class PathEnsemble:
    """Terminal states of a simulated ensemble plus its RNG provenance."""

    states: np.ndarray
    indices: np.ndarray
    T: float
    n_paths: int
    dt: float
    eps: float
    seed: int
    n_diverged: int = 0

    def __post_init__(self):
        if self.n_paths <= 0:
            raise ValueError("n_paths must be positive")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("ensemble states must be finite")


def _sample_events(
    model: ModelSpec, T: float, eps: float, rmax: float, rng: np.random.Generator, m: int
):
    """Per-path jump events, padded with +inf times and sorted along time."""
    times_parts = []
    sizes_parts = []
    coords_parts = []
    for comp in model.driver.components:
        if isinstance(comp, CompoundPoisson):
            rate = comp.rate
        else:
            rate = stable_tail_mass(comp.alpha, eps, rmax)
        counts = rng.poisson(rate * T, size=m)
        kmax = int(counts.max()) if m else 0
        if kmax == 0:
            continue
        t = rng.uniform(0.0, T, size=(m, kmax))
        if isinstance(comp, CompoundPoisson):
            s = comp.sizes.sample(rng, m * kmax).reshape(m, kmax)
        else:
            s = _sample_stable_tail(comp.alpha, eps, rmax, rng, m * kmax).reshape(m, kmax)
        pad = np.arange(kmax)[None, :] >= counts[:, None]
        t[pad] = np.inf
        times_parts.append(t)
        sizes_parts.append(s)
        coords_parts.append(np.full(kmax, comp.coordinate, dtype=np.int64))
    if not times_parts:
        empty = np.full((m, 1), np.inf)
        return empty, np.zeros((m, 1)), np.zeros((m, 1), dtype=np.int64)
    times = np.concatenate(times_parts, axis=1)
    sizes = np.concatenate(sizes_parts, axis=1)
    coords = np.broadcast_to(
        np.concatenate(coords_parts)[None, :], times.shape
    )
    order = np.argsort(times, axis=1, kind="stable")
    times = np.take_along_axis(times, order, axis=1)
    sizes = np.take_along_axis(sizes, order, axis=1)
    coords = np.take_along_axis(coords, order, axis=1)
    # extra inf column so the per-path pointer can run one past the end
    times = np.concatenate([times, np.full((m, 1), np.inf)], axis=1)
    sizes = np.concatenate([sizes, np.zeros((m, 1))], axis=1)
    coords = np.concatenate([coords, np.zeros((m, 1), dtype=np.int64)], axis=1)
    return times, sizes, coords


def _apply_jumps(model: ModelSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if model.closed_forward is not None:
        return model.closed_forward(x, y)
    return marcus_forward(x, y, model.noise, steps=model.flow_steps, check=False)


def _simulate_chunk(
    model: ModelSpec,
    T: float,
    dt: float,
    eps: float,
    rmax: float,
    rng: np.random.Generator,
    m: int,
    gaussian_small_jumps: bool,
):
    """Simulate m paths; returns (states, first divergence time per path)."""
    d, n = model.d, model.n
    b_eff = model.driver.b
    tau = model.driver.tau
    use_gauss = bool(np.any(tau != 0.0))
    ar_comps = (
        [c for c in model.driver.components if isinstance(c, AlphaStable)]
        if gaussian_small_jumps
        else []
    )
    ar_std = np.array(
        [math.sqrt(2.0 * eps ** (2.0 - c.alpha) / (2.0 - c.alpha)) for c in ar_comps]
    )

    x = model.x0.sample(rng, m)
    times, sizes, coords = _sample_events(model, T, eps, rmax, rng, m)
    rows = np.arange(m)
    ptr = np.zeros(m, dtype=np.int64)
    div_time = np.full(m, np.inf)

    def advance(idx, delta):
        """Euler step of the continuous part over per-path horizons delta."""
        xi = x[idx]
        drift = effective_drift(model, xi, b=b_eff)
        incr = drift * delta[:, None]
        if use_gauss:
            z = rng.standard_normal((idx.shape[0], n))
            dB = np.sqrt(delta)[:, None] * (z @ tau.T)
            incr = incr + np.einsum("pij,pj->pi", model.noise.sigma(xi), dB)
        for k, comp in enumerate(ar_comps):
            z = rng.standard_normal(idx.shape[0])
            dl = ar_std[k] * np.sqrt(delta) * z
            incr = incr + model.noise.sigma(xi)[:, :, comp.coordinate] * dl[:, None]
        x[idx] = xi + incr

    n_windows = max(1, math.ceil(T / dt - 1e-12))
    h = T / n_windows
    t_sub = np.zeros(m)
    for w in range(n_windows):
        t_end = T if w == n_windows - 1 else (w + 1) * h
        while True:
            nxt = times[rows, ptr]
            act = nxt < t_end
            if not act.any():
                break
            idx = np.nonzero(act)[0]
            advance(idx, nxt[idx] - t_sub[idx])
            y = np.zeros((idx.shape[0], n))
            y[np.arange(idx.shape[0]), coords[idx, ptr[idx]]] = sizes[idx, ptr[idx]]
            x[idx] = _apply_jumps(model, x[idx], y)
            t_sub[idx] = nxt[idx]
            ptr[idx] += 1
        lag = t_end - t_sub
        pos = lag > 0
        if pos.any():
            advance(np.nonzero(pos)[0], lag[pos])
        t_sub[:] = t_end
        bad = ~np.isfinite(x).all(axis=1) & np.isinf(div_time)
        if bad.any():
            div_time[bad] = t_end
    return x, div_time


def simulate_path(
    model: ModelSpec,
    T: float,
    dt: float,
    eps: float,
    rng: np.random.Generator,
    rmax: float = math.inf,
    gaussian_small_jumps: bool = False,
) -> np.ndarray:
    """Terminal state of a single path driven by ``rng``."""
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must be in (0, 1], got {eps!r}")
    x, div_time = _simulate_chunk(model, T, dt, eps, rmax, rng, 1, gaussian_small_jumps)
    if np.isfinite(div_time[0]):
        raise DivergenceError(
            f"path diverged by t={div_time[0]:.6g}", where=float(div_time[0])
        )
    return x[0]


def simulate_ensemble(
    model: ModelSpec,
    T: float,
    dt: float,
    eps: float,
    n_paths: int,
    seed: int,
    rmax: float = math.inf,
    gaussian_small_jumps: bool = False,
    max_diverged_fraction: float = 1e-3,
) -> PathEnsemble:
    """Simulate ``n_paths`` independent paths with chunked RNG streams.

    Diverged paths are dropped from the ensemble (their indices are skipped);
    more than ``max_diverged_fraction`` of them is an error because dropped
    paths bias densities.
    """
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must be in (0, 1], got {eps!r}")
    if n_paths <= 0:
        raise ValueError("n_paths must be positive")
    n_chunks = math.ceil(n_paths / CHUNK_SIZE)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    states = np.empty((n_paths, model.d))
    div_times = np.empty(n_paths)
    done = 0
    for c in range(n_chunks):
        m = min(CHUNK_SIZE, n_paths - done)
        rng = np.random.default_rng(streams[c])
        xs, dv = _simulate_chunk(model, T, dt, eps, rmax, rng, m, gaussian_small_jumps)
        states[done : done + m] = xs
        div_times[done : done + m] = dv
        done += m
    ok = ~np.isfinite(div_times)
    n_div = int(n_paths - ok.sum())
    if n_div > max_diverged_fraction * n_paths:
        raise DivergenceError(
            f"{n_div} of {n_paths} paths diverged "
            f"(> {max_diverged_fraction:.2%}); first at t="
            f"{np.nanmin(np.where(np.isfinite(div_times), div_times, np.nan)):.6g}"
        )
    return PathEnsemble(
        states=states[ok],
        indices=np.nonzero(ok)[0],
        T=T,
        n_paths=n_paths,
        dt=dt,
        eps=eps,
        seed=seed,
        n_diverged=n_div,
    )


def empirical_density(ensemble: PathEnsemble, grid: Grid) -> DensityField:
    """Histogram density of the ensemble on a grid, normalized by path count.

    Bin counts are divided by n_paths times the cell volume, so mass carried
    by paths outside the grid is reported as missing rather than renormalized
    away.  A coverage below 99% of the samples triggers a warning.
    """
    edges = [grid.axis_edges(a) for a in range(grid.dim)]
    counts, _ = np.histogramdd(ensemble.states, bins=edges)
    covered = counts.sum() / ensemble.n_paths
    if covered < 0.99:
        warnings.warn(
            f"grid covers only {covered:.2%} of ensemble samples", stacklevel=2
        )
    values = counts / (ensemble.n_paths * grid.cell_volume)
    return DensityField(grid, values, time=ensemble.T)
