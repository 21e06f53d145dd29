"""Config parsing and CLI task behavior, including artifacts and exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from marcusfpe import ConfigError
from marcusfpe.cli import main, run
from marcusfpe.config import parse_config


def minimal_solve_config(**overrides):
    cfg = {
        "task": "solve",
        "model": "example1",
        "drift": {"family": "cubic", "a": 1.0, "b": -1.0},
        "driver": {
            "coords": [
                {
                    "b": 0.0,
                    "a": 0.0,
                    "jumps": [
                        {
                            "type": "compound_poisson",
                            "lambda": 1.0,
                            "rho": {"family": "discrete", "values": [0.69], "probs": [1.0]},
                        }
                    ],
                }
            ]
        },
        "initial": {"family": "normal", "mean": [0.3], "std": [0.2]},
        "grid": {"bounds": [[-4.0, 4.0]], "cells": [64]},
        "T": 0.25,
        "seed": 5,
    }
    cfg.update(overrides)
    return cfg


# ---------------------------------------------------------------------------
# parse_config
# ---------------------------------------------------------------------------


def test_parse_fills_defaults():
    cfg = parse_config(json.dumps(minimal_solve_config()))
    assert cfg.eps == 1e-2
    assert cfg.R == 100.0
    assert cfg.steps == 50
    assert cfg.nodes_per_decade == 32
    assert cfg.model is not None and cfg.model.d == 1


def test_parse_rejects_bad_alpha():
    bad = minimal_solve_config()
    bad["driver"]["coords"][0]["jumps"] = [{"type": "alpha_stable", "alpha": 2.5}]
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(json.dumps(bad))


def test_parse_compare_requires_n_paths():
    bad = minimal_solve_config(task="compare")
    with pytest.raises(ConfigError, match="n_paths required for compare"):
        parse_config(json.dumps(bad))


def test_parse_rejects_unknown_keys_with_path():
    bad = minimal_solve_config()
    bad["driver"]["coords"][0]["jmups"] = []
    with pytest.raises(ConfigError, match=r"coords\[0\].*jmups"):
        parse_config(json.dumps(bad))
    bad2 = minimal_solve_config(bogus=1)
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(json.dumps(bad2))


def test_parse_reports_json_line():
    with pytest.raises(ConfigError, match="line"):
        parse_config('{"task": "solve",\n  broken\n}')


def test_parse_unknown_model_id():
    with pytest.raises(ConfigError, match="unknown model"):
        parse_config(json.dumps(minimal_solve_config(model="example7")))


def test_parse_inline_model_needs_sigma():
    cfg = {
        "task": "flow-check",
        "model": {"d": 1, "n": 1},
    }
    with pytest.raises(ConfigError, match="sigma"):
        parse_config(json.dumps(cfg))


def test_parse_dimension_mismatch():
    bad = minimal_solve_config()
    bad["grid"] = {"bounds": [[-4.0, 4.0], [-4.0, 4.0]], "cells": [16, 16]}
    with pytest.raises(ConfigError, match="dimension"):
        parse_config(json.dumps(bad))


def test_parse_driver_coordinate_count():
    bad = minimal_solve_config()
    bad["driver"]["coords"].append({"b": 0.0, "a": 0.0, "jumps": []})
    with pytest.raises(ConfigError, match="coordinates"):
        parse_config(json.dumps(bad))


def test_parse_multiple_jumps_per_coordinate():
    cfg = minimal_solve_config()
    cfg["driver"]["coords"][0]["jumps"] = [
        {"type": "alpha_stable", "alpha": 1.4},
        {
            "type": "compound_poisson",
            "lambda": 0.5,
            "rho": {"family": "uniform", "a": -0.2, "b": 0.7},
        },
    ]
    parsed = parse_config(json.dumps(cfg))
    comps = parsed.model.driver.components
    assert len(comps) == 2
    assert {c.coordinate for c in comps} == {0}


# ---------------------------------------------------------------------------
# CLI runs
# ---------------------------------------------------------------------------


def test_cli_solve_writes_artifacts(tmp_path):
    cfile = tmp_path / "cfg.json"
    cfile.write_text(json.dumps(minimal_solve_config()))
    out = tmp_path / "out"
    code = main(["solve", "--config", str(cfile), "--output", str(out)])
    assert code == 0
    assert (out / "density_t0.250000.csv").exists()
    assert (out / "density_t0.250000.meta.txt").exists()
    assert (out / "solve.png").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["seed"] == 5
    assert "wall_time_s" in manifest


def test_cli_solve_T_zero_keeps_initial(tmp_path):
    cfile = tmp_path / "cfg.json"
    cfile.write_text(json.dumps(minimal_solve_config(T=0.0)))
    out = tmp_path / "out"
    assert main(["solve", "--config", str(cfile), "--output", str(out), "--no-figures"]) == 0
    rows = (out / "density_t0.000000.csv").read_text().strip().splitlines()[1:]
    x, p = np.array([[float(v) for v in r.split(",")] for r in rows]).T
    expected = np.exp(-0.5 * ((x - 0.3) / 0.2) ** 2) / (0.2 * np.sqrt(2 * np.pi))
    assert np.abs(p - expected).max() <= 1e-12


def test_cli_unknown_model_exits_2(tmp_path):
    cfile = tmp_path / "cfg.json"
    cfile.write_text(json.dumps(minimal_solve_config(model="nope")))
    out = tmp_path / "out"
    code = main(["solve", "--config", str(cfile), "--output", str(out)])
    assert code == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "config-error"
    assert "unknown model" in manifest["error"]


def test_cli_task_mismatch_exits_2(tmp_path):
    cfile = tmp_path / "cfg.json"
    cfile.write_text(json.dumps(minimal_solve_config()))
    code = main(["simulate", "--config", str(cfile), "--output", str(tmp_path / "o")])
    assert code == 2


def test_cli_simulate_and_moments(tmp_path):
    cfg = minimal_solve_config(task="simulate", n_paths=500)
    del cfg["grid"]
    cfile = tmp_path / "cfg.json"
    cfile.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfile), "--output", str(out)]) == 0
    lines = (out / "ensemble.csv").read_text().strip().splitlines()
    assert lines[0] == "path_index,x1"
    assert len(lines) == 501
    moments = (out / "moments.csv").read_text().splitlines()
    assert moments[0] == "coordinate,mean,variance,min,max"
    assert (out / "ensemble.png").exists()


def test_cli_flow_check(tmp_path):
    cfg = {"task": "flow-check", "model": "example3", "flow_samples": 40, "seed": 1}
    cfile = tmp_path / "cfg.json"
    cfile.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["flow-check", "--config", str(cfile), "--output", str(out)]) == 0
    rows = (out / "flow_check.csv").read_text().strip().splitlines()
    assert rows[0] == "u1,u2,v1,v2,residual"
    res = np.array([float(r.split(",")[-1]) for r in rows[1:]])
    assert res.max() <= 1e-8
    manifest = json.loads((out / "manifest.json").read_text())
    assert any(e.get("event") == "flow_check" for e in manifest["events"])


def test_cli_compare_outputs_and_seed_override(tmp_path):
    cfg = minimal_solve_config(task="compare", n_paths=2000)
    cfile = tmp_path / "cfg.json"
    cfile.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    code = main(
        ["compare", "--config", str(cfile), "--output", str(out), "--seed", "99"]
    )
    assert code == 0
    report = dict(
        line.split(",")
        for line in (out / "distance_report.csv").read_text().strip().splitlines()[1:]
    )
    assert set(report) >= {"l1_distance", "linf_distance", "fpe_mass", "mc_mass"}
    assert float(report["l1_distance"]) < 0.5
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 99
    assert (out / "compare.png").exists()
    assert (out / "fpe_density.csv").exists()
    assert (out / "mc_density.csv").exists()
    assert (out / "ensemble.csv").exists()
