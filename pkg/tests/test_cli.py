import csv
import json
import sys
from pathlib import Path

import pytest

from whisker.cli import main

HERE = Path(__file__).parent


def _cfg(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _last(path):
    return json.loads(Path(path).read_text().splitlines()[-1])


MODEL_T = "[model]\nfamily = T\n[torus]\nomega = golden\ngrid = 32\n"
MODEL_A = "[model]\nfamily = A\neps = 0.01\n[torus]\nomega = golden\ngrid = 128\n"


def test_solve_model_T(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", _cfg(tmp_path, MODEL_T), "--out", str(out), "--quiet"]) == 0
    assert _last(out / "report.jsonl")["residual"] < 1e-13
    for name in ("torus.fourier", "torus_G.fourier", "torus.json", "torus_samples.csv",
                 "torus_splitting_s.fourier", "torus_splitting_c.fourier", "torus_splitting_u.fourier"):
        assert (out / name).exists()


def test_grid_not_power_of_two(tmp_path, capsys):
    cfg = _cfg(tmp_path, "[model]\nfamily = A\n[torus]\ngrid = 100\n")
    assert main(["solve", cfg]) == 1
    err = capsys.readouterr().err
    assert "run.ini:4" in err and "power of two" in err
    assert main(["solve", _cfg(tmp_path, MODEL_T, "b.ini"), "--grid", "48"]) == 1


@pytest.mark.parametrize("text,needle", [
    ("[model]\nfamily = T\neps = abc\n", "eps"),
    ("[model]\nfamily = T\nbogus = 1\n", "bogus"),
    ("[nonsense]\nx = 1\n", "nonsense"),
    ("[model\nfamily = T\n", "malformed"),
    ("[model]\nfamily = T\n[solver]\nsolve_tol = -1\n", "positive"),
    ("[model]\nfamily = T\n[torus]\nomega = noble:x\n", "noble"),
])
def test_usage_errors(tmp_path, capsys, text, needle):
    assert main(["solve", _cfg(tmp_path, text)]) == 1
    assert needle in capsys.readouterr().err


def test_unknown_command_and_missing_file(tmp_path):
    assert main(["explode", _cfg(tmp_path, MODEL_T)]) == 1
    assert main(["solve", str(tmp_path / "missing.ini")]) == 1


def test_controlled_failure(tmp_path):
    cfg = _cfg(tmp_path, "[model]\nfamily = A\neps = 0.5\n[torus]\ngrid = 128\n")
    out = tmp_path / "out"
    assert main(["solve", cfg, "--out", str(out), "--quiet"]) == 2
    summary = _last(out / "report.jsonl")["summary"]
    assert summary["converged"] is False and summary["error"] == "ConvergenceError"


def test_continue_writes_tori_and_lipschitz(tmp_path):
    cfg = _cfg(tmp_path, "[model]\nfamily = A\n[torus]\ngrid = 128\n"
                         "[continue]\nparameter = eps\nvalues = 0.0, 0.0025, 0.005, 0.0075, 0.01\n")
    out = tmp_path / "out"
    assert main(["continue", cfg, "--out", str(out), "--quiet"]) == 0
    assert len(list(out.glob("torus_0??.fourier"))) == 5
    rows = list(csv.DictReader((out / "lipschitz.csv").open()))
    assert len(rows) == 4 and all(float(r["ratio"]) > 0 for r in rows)


def test_continue_worker_pool(tmp_path, monkeypatch):
    monkeypatch.setenv("WHISKER_THREADS", "2")
    cfg = _cfg(tmp_path, "[model]\nfamily = A\n[torus]\ngrid = 64\n"
                         "[continue]\nparameter = eps\nvalues = 0.0, 0.002, 0.004\npredictor = seed\n")
    out = tmp_path / "out"
    assert main(["continue", cfg, "--out", str(out), "--quiet"]) == 0
    assert len(list(out.glob("torus_0??.json"))) == 3


def test_verify_pass_and_corrupt(tmp_path):
    cfg = _cfg(tmp_path, MODEL_A)
    out = tmp_path / "out"
    assert main(["solve", cfg, "--out", str(out), "--quiet"]) == 0
    assert main(["verify", cfg, "--seed-torus", str(out / "torus"), "--out", str(tmp_path / "v"), "--quiet"]) == 0
    lines = (out / "torus.fourier").read_text().splitlines()
    k, *vals = lines[1 + 63 + 5].split()
    assert k == "5"
    vals[2] = repr(float(vals[2]) + 1e-3)
    lines[1 + 63 + 5] = " ".join([k] + vals)
    (out / "torus.fourier").write_text("\n".join(lines) + "\n")
    assert main(["verify", cfg, "--seed-torus", str(out / "torus"), "--out", str(tmp_path / "v2"), "--quiet"]) == 2
    rows = {r["check"]: r["passed"] for r in csv.DictReader((tmp_path / "v2" / "verify.csv").open())}
    assert rows["residual"] == "false" and rows["shadowing"] == "false"


def test_verify_nonzero_lambda(tmp_path):
    cfg = _cfg(tmp_path, MODEL_T)
    out = tmp_path / "out"
    main(["solve", cfg, "--out", str(out), "--quiet"])
    meta = json.loads((out / "torus.json").read_text())
    meta["lambda"] = [1e-5]
    (out / "torus.json").write_text(json.dumps(meta))
    assert main(["verify", cfg, "--seed-torus", str(out / "torus"), "--out", str(tmp_path / "v"), "--quiet"]) == 2
    rows = {r["check"]: r["passed"] for r in csv.DictReader((tmp_path / "v" / "verify.csv").open())}
    assert rows["vanishing"] == "false"


def test_report_and_refine(tmp_path):
    cfg = _cfg(tmp_path, MODEL_A)
    out = tmp_path / "out"
    main(["solve", cfg, "--out", str(out), "--quiet"])
    assert main(["report", cfg, "--seed-torus", str(out / "torus"), "--out", str(tmp_path / "r"), "--quiet"]) == 0
    cond = json.loads((tmp_path / "r" / "condition.json").read_text())
    assert cond["C"] > 0 and cond["mu1"] < 1
    assert main(["refine-bundle", cfg, "--seed-torus", str(out / "torus"), "--out", str(tmp_path / "r"), "--quiet"]) == 0
    info = _last(tmp_path / "r" / "bundle_report.jsonl")
    assert info["invariance_residual"] < 1e-9 and info["certified"]


def test_deterministic_outputs(tmp_path):
    cfg = _cfg(tmp_path, MODEL_A)
    for d in ("a", "b"):
        assert main(["solve", cfg, "--out", str(tmp_path / d), "--quiet"]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name


def test_plugin_system(tmp_path):
    seed = tmp_path / "seed"
    main(["solve", _cfg(tmp_path, MODEL_T, "t.ini"), "--out", str(seed), "--quiet"])
    cfg = _cfg(tmp_path, f"[model]\nplugin = {sys.executable} {HERE / 'plugin_model_T.py'}\ndim = 4\n"
                         f"[torus]\ngrid = 32\nfile = {seed / 'torus'}\n")
    out = tmp_path / "out"
    assert main(["solve", cfg, "--out", str(out), "--quiet"]) == 0
    assert _last(out / "report.jsonl")["residual"] < 1e-13
