"""Artifact writers: CSV outputs, metadata sidecars, manifest, and figures.

All delimited output uses shortest round-trip float formatting, so reruns
with the same seed are byte-identical.  Figures are rendered with the Agg
backend next to the data they visualize.
"""

from __future__ import annotations

import json
import platform
import time
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .fpe import DensityField, total_mass  # noqa: E402
from .sde import PathEnsemble  # noqa: E402

__all__ = [
    "fmt",
    "write_ensemble_csv",
    "write_moments_csv",
    "write_density_csv",
    "write_distance_report",
    "write_residuals_csv",
    "Manifest",
    "fig_density",
    "fig_compare",
    "fig_ensemble",
    "fig_residuals",
]


def fmt(x) -> str:
    """Shortest exact decimal form of a float."""
    return repr(float(x))


def write_ensemble_csv(path: Path, ensemble: PathEnsemble):
    d = ensemble.states.shape[1]
    header = "path_index," + ",".join(f"x{i + 1}" for i in range(d))
    lines = [header]
    for idx, row in zip(ensemble.indices, ensemble.states):
        lines.append(f"{idx}," + ",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_moments_csv(path: Path, ensemble: PathEnsemble):
    d = ensemble.states.shape[1]
    lines = ["coordinate,mean,variance,min,max"]
    for i in range(d):
        col = ensemble.states[:, i]
        lines.append(
            f"x{i + 1},{fmt(col.mean())},{fmt(col.var())},{fmt(col.min())},{fmt(col.max())}"
        )
    path.write_text("\n".join(lines) + "\n")


def write_density_csv(path: Path, field: DensityField):
    """Row-major density table plus a plain-text metadata sidecar."""
    grid = field.grid
    axes = [grid.axis_centers(a) for a in range(grid.dim)]
    header = ",".join(f"x{a + 1}" for a in range(grid.dim)) + ",p"
    lines = [header]
    if grid.dim == 1:
        for x, p in zip(axes[0], field.values):
            lines.append(f"{fmt(x)},{fmt(p)}")
    else:
        for i, x1 in enumerate(axes[0]):
            for j, x2 in enumerate(axes[1]):
                lines.append(f"{fmt(x1)},{fmt(x2)},{fmt(field.values[i, j])}")
    path.write_text("\n".join(lines) + "\n")

    meta = [f"dimension: {grid.dim}"]
    for a in range(grid.dim):
        lo, hi = grid.bounds[a]
        meta.append(f"axis{a + 1}: lo={fmt(lo)} hi={fmt(hi)} cells={grid.cells[a]}")
    meta.append(f"time: {fmt(field.time)}")
    meta.append(f"mass: {fmt(total_mass(field))}")
    path.with_suffix(".meta.txt").write_text("\n".join(meta) + "\n")


def write_distance_report(path: Path, rows: dict):
    lines = ["metric,value"]
    for key, val in rows.items():
        lines.append(f"{key},{fmt(val)}")
    path.write_text("\n".join(lines) + "\n")


def write_residuals_csv(path: Path, u: np.ndarray, v: np.ndarray, res: np.ndarray):
    d = u.shape[1]
    n = v.shape[1]
    header = (
        ",".join(f"u{i + 1}" for i in range(d))
        + ","
        + ",".join(f"v{j + 1}" for j in range(n))
        + ",residual"
    )
    lines = [header]
    for uu, vv, rr in zip(u, v, res):
        lines.append(
            ",".join(fmt(x) for x in uu) + "," + ",".join(fmt(x) for x in vv) + f",{fmt(rr)}"
        )
    path.write_text("\n".join(lines) + "\n")


class Manifest:
    """Run manifest written on every exit path, success or failure."""

    def __init__(self, outdir: Path, config_echo: dict, seed: int):
        self.path = outdir / "manifest.json"
        self.t0 = time.time()
        self.data = {
            "config": config_echo,
            "seed": seed,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "matplotlib": matplotlib.__version__,
                "marcusfpe": _package_version(),
            },
            "status": "running",
            "artifacts": [],
            "events": [],
        }

    def add_artifact(self, path: Path):
        self.data["artifacts"].append(path.name)

    def add_event(self, event):
        self.data["events"].append(event)

    def finish(self, status: str, error: str | None = None):
        self.data["status"] = status
        if error is not None:
            self.data["error"] = error
        self.data["wall_time_s"] = round(time.time() - self.t0, 3)
        self.path.write_text(json.dumps(self.data, indent=2, default=str) + "\n")


def _package_version() -> str:
    from . import __version__

    return __version__


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------


def _save(fig, path: Path):
    fig.savefig(path, dpi=130)
    plt.close(fig)


def fig_density(path: Path, field: DensityField, initial: DensityField | None = None):
    grid = field.grid
    if grid.dim == 1:
        fig, ax = plt.subplots(figsize=(7, 4))
        x = grid.axis_centers(0)
        if initial is not None:
            ax.plot(x, initial.values, "--", color="0.6", label="t=0")
        ax.plot(x, field.values, color="C0", label=f"t={field.time:g}")
        ax.set_xlabel("x")
        ax.set_ylabel("p(x, t)")
        ax.legend(frameon=False)
    else:
        fig, ax = plt.subplots(figsize=(6, 5))
        im = ax.imshow(
            field.values.T,
            origin="lower",
            extent=(*grid.bounds[0], *grid.bounds[1]),
            aspect="auto",
            cmap="viridis",
        )
        fig.colorbar(im, ax=ax, label=f"p(x, t={field.time:g})")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    fig.tight_layout()
    _save(fig, path)


def fig_compare(path: Path, fpe: DensityField, mc: DensityField, l1: float):
    grid = fpe.grid
    if grid.dim == 1:
        fig, ax = plt.subplots(figsize=(7, 4))
        x = grid.axis_centers(0)
        ax.plot(x, mc.values, drawstyle="steps-mid", color="0.65", label="Monte Carlo")
        ax.plot(x, fpe.values, color="C3", lw=1.5, label="Fokker-Planck")
        ax.set_xlabel("x")
        ax.set_ylabel(f"p(x, t={fpe.time:g})")
        ax.set_title(f"L1 distance {l1:.4f}")
        ax.legend(frameon=False)
    else:
        fig, axes = plt.subplots(1, 3, figsize=(13, 4))
        vmax = max(fpe.values.max(), mc.values.max())
        for ax, (fld, name) in zip(
            axes, [(fpe, "Fokker-Planck"), (mc, "Monte Carlo")]
        ):
            im = ax.imshow(
                fld.values.T,
                origin="lower",
                extent=(*grid.bounds[0], *grid.bounds[1]),
                aspect="auto",
                vmin=0.0,
                vmax=vmax,
                cmap="viridis",
            )
            ax.set_title(name)
            ax.set_xlabel("x1")
            ax.set_ylabel("x2")
        im = axes[2].imshow(
            (fpe.values - mc.values).T,
            origin="lower",
            extent=(*grid.bounds[0], *grid.bounds[1]),
            aspect="auto",
            cmap="RdBu_r",
        )
        axes[2].set_title(f"difference (L1 {l1:.4f})")
        fig.colorbar(im, ax=axes[2])
    fig.tight_layout()
    _save(fig, path)


def fig_ensemble(path: Path, ensemble: PathEnsemble, bins: int = 80):
    d = ensemble.states.shape[1]
    if d == 1:
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.hist(ensemble.states[:, 0], bins=bins, density=True, color="C0", alpha=0.8)
        ax.set_xlabel("x")
        ax.set_ylabel("density")
    else:
        fig, ax = plt.subplots(figsize=(6, 5))
        h = ax.hist2d(
            ensemble.states[:, 0], ensemble.states[:, 1], bins=bins, density=True,
            cmap="viridis",
        )
        fig.colorbar(h[3], ax=ax, label="density")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    ax.set_title(f"terminal states, T={ensemble.T:g}, n={ensemble.n_paths}")
    fig.tight_layout()
    _save(fig, path)


def fig_residuals(path: Path, res: np.ndarray):
    fig, ax = plt.subplots(figsize=(6, 4))
    res = np.maximum(np.asarray(res), 1e-300)
    ax.hist(np.log10(res), bins=40, color="C2", alpha=0.85)
    ax.set_xlabel("log10 round-trip residual")
    ax.set_ylabel("count")
    fig.tight_layout()
    _save(fig, path)
