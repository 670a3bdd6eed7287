import json
import subprocess
import sys

import numpy as np
import pytest

from chaoskit import __version__
from chaoskit.bsde import AffineGenerator, qv_terminal
from chaoskit.cli import MAX_LEVEL, main
from chaoskit.dyadic import restricted_group, shift_group
from chaoskit.kernel import ChaosVector, GridKernel, is_cuboid_constant, symmetrize
from chaoskit.levy import LevyModel

MODEL = LevyModel(1.0, ((1.0, 2.0),))


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main(list(argv) + ["--out", str(out)])
    report = json.loads((out / f"{argv[0]}.json").read_text())
    return code, report


def strip_timing(report):
    report = dict(report)
    report.pop("timing")
    results = dict(report["results"])
    results.pop("timing", None)
    report["results"] = results
    return report


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("CHAOSKIT_SEED", raising=False)


def test_suite_passes(tmp_path, capsys):
    code, report = run(tmp_path, "suite")
    assert code == 0 and report["pass"]
    assert [c["number"] for c in report["results"]["criteria"]] == list(range(1, 11))
    assert capsys.readouterr().err.count("[PASS]") == 10


def test_report_envelope(tmp_path):
    code, report = run(tmp_path, "simulate", "--samples", "1000")
    assert code == 0
    assert report["schema"] == "chaoskit/1"
    assert report["version"] == __version__
    assert len(report["config_hash"]) == 16 and report["seed"] == 0


def test_malformed_model_exits_2(tmp_path, capsys):
    bad = tmp_path / "model.json"
    bad.write_text("{not json")
    code, report = run(tmp_path, "simulate", "--model", str(bad))
    assert code == 2 and not report["pass"]
    assert "malformed model" in capsys.readouterr().err
    code, _ = run(tmp_path, "simulate", "--model", write(tmp_path / "m.json", {"sigma": 0.0}))
    assert code == 2


def test_verify_diagram_report(tmp_path):
    code, report = run(tmp_path, "verify-diagram", "--paths", "100", "--level", "4")
    assert code == 0
    res = report["results"]
    assert len(res["per_path_residual"]) == 100 and res["max_residual"] <= 1e-12


def test_determinism(tmp_path):
    a = run(tmp_path / "a", "isometry", "--samples", "20000", "--seed", "7", "--level", "2")[1]
    b = run(tmp_path / "b", "isometry", "--samples", "20000", "--seed", "7", "--level", "2")[1]
    assert strip_timing(a) == strip_timing(b)
    c = run(tmp_path / "c", "isometry", "--samples", "20000", "--seed", "8", "--level", "2")[1]
    assert a["config_hash"] != c["config_hash"]


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = write(tmp_path / "cfg.json", {"seed": 3, "samples": 100})
    assert run(tmp_path, "simulate", "--config", cfg)[1]["seed"] == 3
    monkeypatch.setenv("CHAOSKIT_SEED", "5")
    assert run(tmp_path, "simulate", "--config", cfg)[1]["seed"] == 5
    assert run(tmp_path, "simulate", "--config", cfg, "--seed", "9")[1]["seed"] == 9
    monkeypatch.setenv("CHAOSKIT_SEED", "abc")
    assert run(tmp_path, "simulate", "--config", cfg)[0] == 2


def test_desk_scale_guards(tmp_path):
    level = str(MAX_LEVEL + 1)
    assert run(tmp_path, "simulate", "--level", level, "--samples", "10")[0] == 2
    assert run(tmp_path, "simulate", "--samples", "20000000")[0] == 2
    assert run(tmp_path, "simulate", "--level", level, "--samples", "10", "--force")[0] == 0


def test_dump_paths(tmp_path):
    code, report = run(tmp_path, "simulate", "--samples", "3", "--level", "2", "--dump-paths")
    assert code == 0 and report["results"]["paths_dumped"]
    lines = (tmp_path / "out" / "paths.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 * 4


def test_extract_exponential(tmp_path):
    model = write(tmp_path / "m.json", {"sigma": 0.0, "atoms": [{"x": 1.0, "lambda": 1.0}]})
    code, report = run(tmp_path, "extract", "--model", model, "--level", "2", "--nmax", "2", "--samples", "50000")
    assert code == 0 and report["results"]["max_z"] <= 4.0


def test_extract_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cv = ChaosVector(2, 2, 0.5, (symmetrize(GridKernel(2, 2, rng.normal(size=8))),))
    code, report = run(
        tmp_path, "extract", "--terminal", write(tmp_path / "F.json", cv.to_json()), "--samples", "50000"
    )
    assert code == 0


def test_project_and_reduce(tmp_path):
    rng = np.random.default_rng(1)
    f = GridKernel(2, 2, rng.normal(size=(8, 8)))
    kern = write(tmp_path / "f.json", f.to_json())
    group = write(tmp_path / "g.json", restricted_group([[0, 1]], 2, 2).to_json())
    code, report = run(tmp_path, "project", "--kernel", kern, "--group", group, "--model", write(tmp_path / "m.json", MODEL.to_json()))
    assert code == 0
    part = write(tmp_path / "p.json", [[0, 1], [2, 3]])
    code, report = run(tmp_path, "reduce", "--kernel", kern, "--partition", part, "--model", write(tmp_path / "m.json", MODEL.to_json()))
    assert code == 0 and report["results"]["residual"] > 0
    out = GridKernel.from_json(report["results"]["kernel"])
    assert is_cuboid_constant(out, [[0, 1], [2, 3]])
    assert run(tmp_path, "project", "--kernel", kern)[0] == 2


def test_check_ergodic(tmp_path):
    code, report = run(tmp_path, "check-ergodic", "--set", "0", "--set-level", "0", "--dmax", "3")
    assert code == 0 and report["results"]["passed"]
    shifts = write(tmp_path / "s.json", shift_group(3).to_json())
    code, report = run(tmp_path, "check-ergodic", "--set", "0", "--set-level", "0", "--dmax", "3", "--group", shifts)
    assert code == 1 and not report["results"]["passed"]
    assert run(tmp_path, "check-ergodic", "--set", "x", "--dmax", "3")[0] == 2


def test_ns_transform(tmp_path):
    f = GridKernel(1, 2, np.ones(4))
    model = write(tmp_path / "m.json", MODEL.to_json())
    code, report = run(tmp_path, "ns-transform", "--kernel", write(tmp_path / "f.json", f.to_json()), "--model", model)
    assert code == 0 and report["results"]["parseval_residual"] <= 1e-10
    assert set(report["results"]["transform"]["kernels"]) == {"0", "1"}


def test_bsde(tmp_path):
    blocks = [[0, 1], [2, 3]]
    F = qv_terminal(blocks, 2, MODEL)
    gen = AffineGenerator.constant(2, a=0.5, c=1.0)
    args = [
        "--terminal", write(tmp_path / "F.json", F.to_json()),
        "--generator", write(tmp_path / "gen.json", gen.to_json()),
        "--model", write(tmp_path / "m.json", MODEL.to_json()),
        "--iters", "40",
    ]
    code, report = run(tmp_path, "bsde", *args, "--partition", write(tmp_path / "p.json", blocks))
    assert code == 0 and report["results"]["converged"]
    assert report["results"]["propagation"]["passed"]
    assert len(report["results"]["Y"]) == 5
    # a terminal value that is not cuboid-constant fails the propagation check
    rng = np.random.default_rng(2)
    bad = ChaosVector(2, 2, 0.0, (GridKernel(2, 2, rng.normal(size=8)),))
    args[1] = write(tmp_path / "bad.json", bad.to_json())
    assert run(tmp_path, "bsde", *args, "--partition", write(tmp_path / "p.json", blocks))[0] == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "chaoskit", "simulate", "--samples", "10", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads((tmp_path / "simulate.json").read_text())["pass"]
