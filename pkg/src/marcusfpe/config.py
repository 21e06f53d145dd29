"""Run configuration: JSON parsing, validation, and model assembly.

A config is a single JSON object.  Unknown keys anywhere are rejected with
the offending path; task-specific requirements are checked at parse time so
a run fails before any computation starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigError
from .examples import get_benchmark
from .flow import NoiseCoefficient
from .fpe import Grid
from .levy import (
    AlphaStable,
    CompoundPoisson,
    DiscreteDist,
    LevyTriplet,
    NormalDist,
    UniformDist,
    product_triplet,
)
from .model import GaussianInitial, ModelSpec, PointInitial

__all__ = ["RunConfig", "parse_config"]

TASKS = ("flow-check", "simulate", "solve", "compare")

_DEFAULTS = {
    "eps": 1e-2,
    "R": 100.0,
    "steps": 50,
    "nodes_per_decade": 32,
    "seed": 0,
}


@dataclass
class RunConfig:
    """Validated run description consumed by the CLI tasks."""

    task: str
    model_id: str
    model: ModelSpec | None
    noise: NoiseCoefficient
    drift: Any
    grid: Grid | None
    T: float | None
    dt: float | None
    eps: float
    R: float
    steps: int
    nodes_per_decade: int
    n_paths: int | None
    seed: int
    output_times: list[float] = field(default_factory=list)
    renormalize: bool = False
    flow_samples: int = 100
    u_box: float = 3.0
    v_box: float = 2.0
    mc_dt: float | None = None
    raw: dict = field(default_factory=dict)


def _require_keys(obj: dict, allowed: set[str], path: str):
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}", path=path or "config root")


def _get(obj: dict, key: str, kind, path: str, required: bool = False, default=None):
    if key not in obj:
        if required:
            raise ConfigError(f"missing required key {key!r}", path=path)
        return default
    val = obj[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return int(val)
    if not isinstance(val, kind) or (kind is not bool and isinstance(val, bool)):
        raise ConfigError(
            f"expected {kind.__name__}, got {type(val).__name__}", path=f"{path}.{key}"
        )
    return val


def _parse_rho(obj: dict, path: str):
    if not isinstance(obj, dict):
        raise ConfigError("jump size law must be an object", path=path)
    family = _get(obj, "family", str, path, required=True)
    if family == "normal":
        _require_keys(obj, {"family", "mu", "s"}, path)
        return NormalDist(
            mu=_get(obj, "mu", float, path, default=0.0),
            s=_get(obj, "s", float, path, required=True),
        )
    if family == "uniform":
        _require_keys(obj, {"family", "a", "b"}, path)
        return UniformDist(
            a=_get(obj, "a", float, path, required=True),
            b=_get(obj, "b", float, path, required=True),
        )
    if family == "discrete":
        _require_keys(obj, {"family", "values", "probs"}, path)
        values = obj.get("values")
        probs = obj.get("probs")
        if not isinstance(values, list) or not isinstance(probs, list):
            raise ConfigError("discrete law needs 'values' and 'probs' lists", path=path)
        return DiscreteDist(tuple(float(v) for v in values), tuple(float(p) for p in probs))
    raise ConfigError(f"unknown jump size family {family!r}", path=f"{path}.family")


def _parse_jump(obj: dict, path: str):
    if not isinstance(obj, dict):
        raise ConfigError("jump component must be an object", path=path)
    kind = _get(obj, "type", str, path, required=True)
    if kind in ("compound_poisson", "cp"):
        _require_keys(obj, {"type", "lambda", "rho"}, path)
        rate = _get(obj, "lambda", float, path, required=True)
        rho = obj.get("rho")
        if rho is None:
            raise ConfigError("missing required key 'rho'", path=path)
        return CompoundPoisson(rate=rate, sizes=_parse_rho(rho, f"{path}.rho"))
    if kind in ("alpha_stable", "stable"):
        _require_keys(obj, {"type", "alpha"}, path)
        alpha = _get(obj, "alpha", float, path, required=True)
        if not 0.0 < alpha < 2.0:
            raise ConfigError(
                f"alpha must be in (0, 2), got {alpha!r}", path=f"{path}.alpha"
            )
        return AlphaStable(alpha=alpha)
    raise ConfigError(f"unknown jump type {kind!r}", path=f"{path}.type")


def _parse_driver(obj: dict, n: int, path: str = "driver") -> LevyTriplet:
    if not isinstance(obj, dict):
        raise ConfigError("driver must be an object", path=path)
    _require_keys(obj, {"coords"}, path)
    coords = obj.get("coords")
    if not isinstance(coords, list) or not coords:
        raise ConfigError("driver.coords must be a nonempty list", path=path)
    if len(coords) != n:
        raise ConfigError(
            f"driver declares {len(coords)} coordinates but the model has n={n}",
            path=f"{path}.coords",
        )
    scalars = []
    extra = []
    for i, block in enumerate(coords):
        p = f"{path}.coords[{i}]"
        if not isinstance(block, dict):
            raise ConfigError("coordinate block must be an object", path=p)
        _require_keys(block, {"b", "a", "jumps"}, p)
        b_i = _get(block, "b", float, p, default=0.0)
        a_i = _get(block, "a", float, p, default=0.0)
        if a_i < 0:
            raise ConfigError(f"a must be >= 0, got {a_i!r}", path=f"{p}.a")
        jumps = block.get("jumps", [])
        if not isinstance(jumps, list):
            raise ConfigError("jumps must be a list", path=f"{p}.jumps")
        comps = [_parse_jump(j, f"{p}.jumps[{k}]") for k, j in enumerate(jumps)]
        scalars.append((b_i, a_i, comps[0] if comps else None))
        for comp in comps[1:]:
            extra.append((i, comp))
    trip = product_triplet(scalars)
    if extra:
        more = tuple(
            CompoundPoisson(c.rate, c.sizes, coordinate=i)
            if isinstance(c, CompoundPoisson)
            else AlphaStable(c.alpha, coordinate=i)
            for i, c in extra
        )
        trip = LevyTriplet(
            b=trip.b, A=trip.A, components=trip.components + more, tau=trip.tau
        )
    return trip


def _parse_drift(obj, d: int, path: str = "drift"):
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise ConfigError("drift must be an object", path=path)
    family = _get(obj, "family", str, path, required=True)
    if family == "zero":
        _require_keys(obj, {"family"}, path)
        return lambda x: np.zeros_like(np.asarray(x, float))
    if family in ("linear", "affine"):
        _require_keys(obj, {"family", "matrix", "offset"}, path)
        mat = obj.get("matrix")
        if not isinstance(mat, list):
            raise ConfigError("missing required key 'matrix'", path=path)
        M = np.asarray(mat, float)
        if M.shape != (d, d):
            raise ConfigError(f"matrix must be {d}x{d}, got {M.shape}", path=f"{path}.matrix")
        off = np.asarray(obj.get("offset", [0.0] * d), float)
        if off.shape != (d,):
            raise ConfigError(f"offset must have length {d}", path=f"{path}.offset")
        if family == "linear" and "offset" in obj:
            raise ConfigError("linear drift takes no offset; use family 'affine'", path=path)
        return lambda x: np.asarray(x, float) @ M.T + off
    if family == "cubic":
        # scalar double-well style drift a x + b x^3, per coordinate
        _require_keys(obj, {"family", "a", "b"}, path)
        a = _get(obj, "a", float, path, default=0.0)
        b = _get(obj, "b", float, path, default=0.0)
        return lambda x: a * np.asarray(x, float) + b * np.asarray(x, float) ** 3
    raise ConfigError(f"unknown drift family {family!r}", path=f"{path}.family")


def _parse_sigma(obj, path: str = "sigma") -> NoiseCoefficient:
    if not isinstance(obj, dict):
        raise ConfigError("sigma must be an object", path=path)
    family = _get(obj, "family", str, path, required=True)
    if family == "constant":
        _require_keys(obj, {"family", "matrix"}, path)
        mat = obj.get("matrix")
        if not isinstance(mat, list):
            raise ConfigError("missing required key 'matrix'", path=path)
        M = np.asarray(mat, float)
        if M.ndim != 2:
            raise ConfigError("matrix must be two-dimensional", path=f"{path}.matrix")
        d, n = M.shape

        def sigma(x, M=M):
            return np.broadcast_to(M, (np.asarray(x).shape[0],) + M.shape).copy()

        def dsigma(x, d=d, n=n):
            return np.zeros((np.asarray(x).shape[0], d, n, d))

        return NoiseCoefficient(d, n, sigma, dsigma)
    if family == "scalar_linear":
        _require_keys(obj, {"family", "scale"}, path)
        c = _get(obj, "scale", float, path, default=1.0)

        def sigma(x, c=c):
            return c * np.asarray(x, float)[:, :, None]

        def dsigma(x, c=c):
            out = np.zeros((np.asarray(x).shape[0], 1, 1, 1))
            out[:, 0, 0, 0] = c
            return out

        return NoiseCoefficient(1, 1, sigma, dsigma)
    raise ConfigError(f"unknown sigma family {family!r}", path=f"{path}.family")


def _parse_initial(obj, d: int, path: str = "initial"):
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise ConfigError("initial must be an object", path=path)
    family = _get(obj, "family", str, path, required=True)
    if family == "point":
        _require_keys(obj, {"family", "x"}, path)
        x = obj.get("x")
        if not isinstance(x, list) or len(x) != d:
            raise ConfigError(f"x must be a list of length {d}", path=f"{path}.x")
        return PointInitial(np.asarray(x, float))
    if family == "normal":
        _require_keys(obj, {"family", "mean", "std"}, path)
        mean = obj.get("mean")
        std = obj.get("std")
        if not isinstance(mean, list) or len(mean) != d:
            raise ConfigError(f"mean must be a list of length {d}", path=f"{path}.mean")
        if not isinstance(std, list) or len(std) != d:
            raise ConfigError(f"std must be a list of length {d}", path=f"{path}.std")
        return GaussianInitial(np.asarray(mean, float), np.asarray(std, float))
    raise ConfigError(f"unknown initial family {family!r}", path=f"{path}.family")


def _parse_grid(obj, path: str = "grid") -> Grid:
    if not isinstance(obj, dict):
        raise ConfigError("grid must be an object", path=path)
    _require_keys(obj, {"bounds", "cells"}, path)
    bounds = obj.get("bounds")
    cells = obj.get("cells")
    if not isinstance(bounds, list) or not all(
        isinstance(b, list) and len(b) == 2 for b in bounds
    ):
        raise ConfigError("bounds must be a list of [lo, hi] pairs", path=f"{path}.bounds")
    if not isinstance(cells, list) or len(cells) != len(bounds):
        raise ConfigError("cells must list one count per axis", path=f"{path}.cells")
    try:
        return Grid(
            bounds=tuple((float(lo), float(hi)) for lo, hi in bounds),
            cells=tuple(int(c) for c in cells),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), path=path) from None


_TOP_KEYS = {
    "task",
    "model",
    "drift",
    "sigma",
    "driver",
    "initial",
    "grid",
    "T",
    "dt",
    "mc_dt",
    "eps",
    "R",
    "steps",
    "nodes_per_decade",
    "n_paths",
    "seed",
    "output_times",
    "renormalize",
    "flow_samples",
    "u_box",
    "v_box",
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Defaults are filled for eps (1e-2), R (100), steps (50),
    nodes_per_decade (32), and seed (0).  Raises :class:`ConfigError` with a
    key path on any unknown key, type mismatch, or missing task requirement.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    _require_keys(obj, _TOP_KEYS, "")

    task = _get(obj, "task", str, "", required=True)
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}", path="task")

    model_field = obj.get("model")
    drift = None
    if isinstance(model_field, str):
        bench = get_benchmark(model_field)
        noise = bench.noise
        drift = bench.default_drift
        closed_inv, closed_fwd = bench.closed.htilde, bench.closed.hforward
        model_id = model_field
        d, n = bench.d, bench.n
    elif isinstance(model_field, dict):
        _require_keys(model_field, {"d", "n"}, "model")
        d = _get(model_field, "d", int, "model", required=True)
        n = _get(model_field, "n", int, "model", required=True)
        if "sigma" not in obj:
            raise ConfigError("inline models need a top-level 'sigma'", path="model")
        noise = _parse_sigma(obj.get("sigma"))
        if noise.d != d or noise.n != n:
            raise ConfigError(
                f"sigma family has (d={noise.d}, n={noise.n}) but model declares "
                f"(d={d}, n={n})",
                path="sigma",
            )
        closed_inv = closed_fwd = None
        model_id = "inline"
    elif model_field is None:
        raise ConfigError("missing required key 'model'", path="")
    else:
        raise ConfigError("model must be a builtin id or an object", path="model")
    if "sigma" in obj and isinstance(model_field, str):
        raise ConfigError("builtin models fix sigma; drop the 'sigma' block", path="sigma")

    drift_override = _parse_drift(obj.get("drift"), d)
    if drift_override is not None:
        drift = drift_override
    if drift is None:
        raise ConfigError("inline models need a 'drift' block", path="drift")

    eps = _get(obj, "eps", float, "", default=_DEFAULTS["eps"])
    if not 0.0 < eps <= 1.0:
        raise ConfigError(f"eps must be in (0, 1], got {eps!r}", path="eps")
    R = _get(obj, "R", float, "", default=_DEFAULTS["R"])
    steps = _get(obj, "steps", int, "", default=_DEFAULTS["steps"])
    if steps < 1:
        raise ConfigError("steps must be >= 1", path="steps")
    nodes_per_decade = _get(obj, "nodes_per_decade", int, "", default=_DEFAULTS["nodes_per_decade"])
    seed = _get(obj, "seed", int, "", default=_DEFAULTS["seed"])
    T = _get(obj, "T", float, "")
    dt = _get(obj, "dt", float, "")
    mc_dt = _get(obj, "mc_dt", float, "")
    n_paths = _get(obj, "n_paths", int, "")
    renormalize = _get(obj, "renormalize", bool, "", default=False)
    flow_samples = _get(obj, "flow_samples", int, "", default=100)
    u_box = _get(obj, "u_box", float, "", default=3.0)
    v_box = _get(obj, "v_box", float, "", default=2.0)

    output_times = obj.get("output_times", [])
    if not isinstance(output_times, list) or not all(
        isinstance(t, (int, float)) and not isinstance(t, bool) for t in output_times
    ):
        raise ConfigError("output_times must be a list of numbers", path="output_times")
    output_times = [float(t) for t in output_times]

    grid = _parse_grid(obj["grid"]) if "grid" in obj else None
    initial = _parse_initial(obj.get("initial"), d)

    driver = None
    if "driver" in obj:
        driver = _parse_driver(obj["driver"], n)

    # task requirements
    needs_dynamics = task in ("simulate", "solve", "compare")
    if needs_dynamics:
        if driver is None:
            raise ConfigError(f"driver required for {task}", path="driver")
        if initial is None:
            raise ConfigError(f"initial required for {task}", path="initial")
        if T is None or T < 0:
            raise ConfigError(f"T >= 0 required for {task}", path="T")
    if task in ("solve", "compare"):
        if grid is None:
            raise ConfigError(f"grid required for {task}", path="grid")
        if grid.dim != d:
            raise ConfigError(
                f"grid dimension {grid.dim} != model dimension {d}", path="grid"
            )
        if isinstance(initial, PointInitial):
            raise ConfigError(
                "solve needs a density initial condition (family 'normal')",
                path="initial",
            )
    if task in ("simulate", "compare") and n_paths is None:
        raise ConfigError(f"n_paths required for {task}", path="n_paths")

    model = None
    if needs_dynamics:
        model = ModelSpec(
            drift=drift,
            noise=noise,
            driver=driver,
            x0=initial if initial is not None else PointInitial(np.zeros(d)),
            closed_inverse=closed_inv,
            closed_forward=closed_fwd,
            flow_steps=steps,
            model_id=model_id,
        )

    return RunConfig(
        task=task,
        model_id=model_id,
        model=model,
        noise=noise,
        drift=drift,
        grid=grid,
        T=T,
        dt=dt,
        eps=eps,
        R=R,
        steps=steps,
        nodes_per_decade=nodes_per_decade,
        n_paths=n_paths,
        seed=seed,
        output_times=output_times,
        renormalize=renormalize,
        flow_samples=flow_samples,
        u_box=u_box,
        v_box=v_box,
        mc_dt=mc_dt,
        raw=obj,
    )
