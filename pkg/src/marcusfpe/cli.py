"""Batch command-line interface.

Usage:
    marcusfpe <flow-check|simulate|solve|compare> --config PATH
              [--output DIR] [--seed N] [--no-figures]

Every run writes a manifest (config echo, seed, versions, wall time) into the
output directory, even on failure.  Exit codes: 0 on success, 1 on numeric
failure, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import fpe
from .config import RunConfig, parse_config
from .errors import ConfigError, DivergenceError, InstabilityError
from .flow import check_inverse
from .fpe import DensityField, l1_distance, linf_distance, total_mass
from .model import GaussianInitial
from .sde import empirical_density, simulate_ensemble
from . import reporting as rep

__all__ = ["main", "run"]


def _density_initial(cfg: RunConfig) -> DensityField:
    x0 = cfg.model.x0
    if not isinstance(x0, GaussianInitial):
        raise ConfigError("solve needs a density initial condition", path="initial")
    values = x0.density(cfg.grid.centers()).reshape(cfg.grid.shape)
    return DensityField(cfg.grid, values, 0.0)


def _mc_dt(cfg: RunConfig) -> float:
    if cfg.mc_dt is not None:
        return cfg.mc_dt
    if cfg.dt is not None:
        return cfg.dt
    return cfg.T / 200.0 if cfg.T else 5e-3


def _task_flow_check(cfg: RunConfig, outdir: Path, manifest: rep.Manifest, figures: bool):
    rng = np.random.default_rng(cfg.seed)
    noise = cfg.noise
    u = rng.uniform(-cfg.u_box, cfg.u_box, size=(cfg.flow_samples, noise.d))
    v = rng.uniform(-cfg.v_box, cfg.v_box, size=(cfg.flow_samples, noise.n))
    res = np.atleast_1d(check_inverse(u, v, noise, steps=max(cfg.steps, 200)))
    path = outdir / "flow_check.csv"
    rep.write_residuals_csv(path, u, v, res)
    manifest.add_artifact(path)
    manifest.add_event(
        {
            "event": "flow_check",
            "samples": int(cfg.flow_samples),
            "max_residual": float(res.max()),
            "mean_residual": float(res.mean()),
        }
    )
    if figures:
        fig = outdir / "flow_check.png"
        rep.fig_residuals(fig, res)
        manifest.add_artifact(fig)
    print(f"flow-check: {cfg.flow_samples} samples, max residual {res.max():.3e}")
    return 0


def _simulate(cfg: RunConfig):
    return simulate_ensemble(
        cfg.model,
        T=cfg.T,
        dt=_mc_dt(cfg),
        eps=cfg.eps,
        n_paths=cfg.n_paths,
        seed=cfg.seed,
        rmax=cfg.R,
    )


def _task_simulate(cfg: RunConfig, outdir: Path, manifest: rep.Manifest, figures: bool):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ens = _simulate(cfg)
    for w in caught:
        manifest.add_event({"event": "warning", "message": str(w.message)})
    path = outdir / "ensemble.csv"
    rep.write_ensemble_csv(path, ens)
    manifest.add_artifact(path)
    mpath = outdir / "moments.csv"
    rep.write_moments_csv(mpath, ens)
    manifest.add_artifact(mpath)
    if ens.n_diverged:
        manifest.add_event({"event": "diverged_paths", "count": ens.n_diverged})
    if figures:
        fig = outdir / "ensemble.png"
        rep.fig_ensemble(fig, ens)
        manifest.add_artifact(fig)
    print(f"simulate: {ens.n_paths} paths to T={cfg.T}, {ens.n_diverged} diverged")
    return 0


def _solve(cfg: RunConfig, manifest: rep.Manifest, outdir: Path, figures: bool):
    p0 = _density_initial(cfg)
    events: list = []
    snapshots: list[DensityField] = []
    final = fpe.solve(
        cfg.model,
        cfg.grid,
        p0,
        T=cfg.T,
        dt=cfg.dt,
        eps=cfg.eps,
        R=cfg.R,
        nodes_per_decade=cfg.nodes_per_decade,
        snapshot_times=cfg.output_times,
        on_snapshot=snapshots.append,
        renormalize=cfg.renormalize,
        event_log=events,
    )
    for ev in events:
        manifest.add_event(ev)
    for field in snapshots + [final]:
        path = outdir / f"density_t{field.time:.6f}.csv"
        rep.write_density_csv(path, field)
        manifest.add_artifact(path)
        manifest.add_artifact(path.with_suffix(".meta.txt"))
    if figures:
        fig = outdir / "solve.png"
        rep.fig_density(fig, final, initial=p0)
        manifest.add_artifact(fig)
    return p0, final


def _task_solve(cfg: RunConfig, outdir: Path, manifest: rep.Manifest, figures: bool):
    _, final = _solve(cfg, manifest, outdir, figures)
    print(f"solve: t={final.time:g}, mass {total_mass(final):.6f}")
    return 0


def _task_compare(cfg: RunConfig, outdir: Path, manifest: rep.Manifest, figures: bool):
    p0, final = _solve(cfg, manifest, outdir, figures)
    fpe_path = outdir / "fpe_density.csv"
    rep.write_density_csv(fpe_path, final)
    manifest.add_artifact(fpe_path)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ens = _simulate(cfg)
        mc = empirical_density(ens, cfg.grid)
    for w in caught:
        manifest.add_event({"event": "warning", "message": str(w.message)})
    mc_path = outdir / "mc_density.csv"
    rep.write_density_csv(mc_path, mc)
    manifest.add_artifact(mc_path)
    epath = outdir / "ensemble.csv"
    rep.write_ensemble_csv(epath, ens)
    manifest.add_artifact(epath)

    l1 = l1_distance(final, mc)
    linf = linf_distance(final, mc)
    report = outdir / "distance_report.csv"
    rep.write_distance_report(
        report,
        {
            "l1_distance": l1,
            "linf_distance": linf,
            "fpe_mass": total_mass(final),
            "mc_mass": total_mass(mc),
            "n_paths": ens.n_paths,
            "n_diverged": ens.n_diverged,
        },
    )
    manifest.add_artifact(report)
    if figures:
        fig = outdir / "compare.png"
        rep.fig_compare(fig, final, mc, l1)
        manifest.add_artifact(fig)
    print(f"compare: L1 {l1:.4f}, Linf {linf:.4f}")
    return 0


_TASKS = {
    "flow-check": _task_flow_check,
    "simulate": _task_simulate,
    "solve": _task_solve,
    "compare": _task_compare,
}


def run(
    task: str, config_text: str, outdir: Path, seed: int | None = None, figures: bool = True
) -> int:
    """Execute one task; always leaves a manifest in ``outdir``."""
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = None
    try:
        cfg = parse_config(config_text)
        if cfg.task != task:
            raise ConfigError(
                f"config declares task {cfg.task!r} but {task!r} was requested",
                path="task",
            )
        if seed is not None:
            # sampling provenance only; model assembly does not consume the seed
            cfg.seed = seed
            cfg.raw["seed"] = seed
        manifest = rep.Manifest(outdir, cfg.raw, cfg.seed)
        code = _TASKS[task](cfg, outdir, manifest, figures)
        manifest.finish("ok" if code == 0 else "failed")
        return code
    except ConfigError as exc:
        if manifest is None:
            manifest = rep.Manifest(outdir, {"error": "unparsed"}, seed or 0)
        manifest.finish("config-error", error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, InstabilityError, FloatingPointError, ValueError) as exc:
        if manifest is None:
            manifest = rep.Manifest(outdir, {"error": "unparsed"}, seed or 0)
        manifest.finish("numeric-error", error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="marcusfpe",
        description=(
            "Fokker-Planck equations for Marcus SDEs driven by Levy processes: "
            "flow checks, path simulation, density solves, and comparisons."
        ),
    )
    sub = parser.add_subparsers(dest="task", required=True)
    for name, help_text in [
        ("flow-check", "round-trip residuals of the jump maps"),
        ("simulate", "jump-adapted Monte Carlo ensemble"),
        ("solve", "advance the nonlocal Fokker-Planck equation"),
        ("compare", "solve and simulate, then report density distances"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path, help="JSON run config")
        p.add_argument("--output", type=Path, default=Path("./out"), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--no-figures", action="store_true", help="skip PNG rendering, data only"
        )
    args = parser.parse_args(argv)
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    return run(args.task, text, args.output, seed=args.seed, figures=not args.no_figures)


if __name__ == "__main__":
    sys.exit(main())
