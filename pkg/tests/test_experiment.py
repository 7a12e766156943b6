import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from stocg import experiment
from stocg.cli import main
from stocg.config import config_from_dict, load_config, validate
from stocg import problems

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data, sort_keys=False) if isinstance(data, dict) else data)
    return p


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _quad(**over):
    cfg = {"kind": "convex-quadratic", "seed": 4, "replicates": 3,
           "problem": {"n": 5, "sigma": 100, "seed": 1}, "T": 150,
           "solvers": [{"name": "sfw", "b": 1}, {"name": "minibatch-fw", "b": 10}, "fw"]}
    cfg.update(over)
    return cfg


# ---------------------------------------------------------------- validation


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.name)
def test_presets_validate(path):
    assert validate(load_config(path)) == []


def test_missing_ratings_file_named_with_line(tmp_path):
    text = ("kind: submodular-max\n"
            "problem:\n"
            "  objective: facility\n"
            "  ratings: nowhere/ratings.csv\n"
            "  k: 2\n"
            "T: 10\n"
            "solvers: [scg]\n")
    diags = validate(load_config(_write(tmp_path, text)))
    assert len(diags) == 1
    assert "nowhere/ratings.csv" in str(diags[0])
    assert diags[0].line == 4


def test_k_greater_than_n_rejected(tmp_path):
    cfg = {"kind": "submodular-max", "problem": {"objective": "facility",
                                                 "synthetic": {"users": 5, "items": 4}, "k": 6},
           "T": 10, "solvers": ["scg"]}
    diags = validate(load_config(_write(tmp_path, cfg)))
    assert any("k=6" in str(d) for d in diags)
    assert main(["validate", str(tmp_path / "cfg.yaml")]) == 2


@pytest.mark.parametrize("mutate, needle", [
    (lambda c: c.update(replicates=0), "replicates"),
    (lambda c: c["solvers"].append({"name": "sfw", "b": 1}), "duplicate solver tag"),
    (lambda c: c["solvers"][0].update(rho="rho-fast"), "rho-fast"),
    (lambda c: c["solvers"].append("sga"), "unknown solver"),
    (lambda c: c.update(kind="convex-cubic"), "unknown experiment kind"),
    (lambda c: c.pop("T"), "T"),
    (lambda c: c.update(report=[0, 10**6]), "report"),
    (lambda c: c["problem"].update(lower=200), "upper"),
    (lambda c: c.update(colour="red"), "unknown key"),
])
def test_validation_errors(tmp_path, mutate, needle):
    cfg = _quad()
    mutate(cfg)
    diags = validate(load_config(_write(tmp_path, cfg)))
    assert diags and any(needle in str(d) for d in diags)
    assert all(d.line is not None for d in diags)


def test_yaml_syntax_error_has_line(tmp_path, capsys):
    p = _write(tmp_path, "kind: convex-quadratic\nsolvers: [sfw\nT: 3\n")
    assert main(["validate", str(p)]) == 2
    err = capsys.readouterr().err
    assert "cfg.yaml:" in err and "YAML" in err


def test_validate_has_no_side_effects(tmp_path):
    p = _write(tmp_path, _quad(output=str(tmp_path / "never")))
    assert main(["validate", str(p)]) == 0
    assert not (tmp_path / "never").exists()


def test_run_invalid_config_exits_nonzero(tmp_path, capsys):
    p = _write(tmp_path, _quad(replicates=-1))
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "replicates" in capsys.readouterr().err


# ---------------------------------------------------------------- run


def test_run_artifacts_and_summary_means(tmp_path):
    out = tmp_path / "o"
    assert experiment.run(config_from_dict(_quad()), out=out, workers=1) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok" and man["versions"]["numpy"] == np.__version__
    assert man["config"]["seed"] == 4 and man["wall_clock_seconds"] >= 0
    snap = json.loads((out / "problem.json").read_text())
    p = problems.QuadraticProblem.from_dict(snap["problem"])
    for tag in ("sfw-b1", "minibatch-fw-b10", "fw"):
        traces = [_read_csv(out / "traces" / tag / f"rep{i}.csv") for i in range(3)]
        for tr in traces:
            assert list(tr[0].keys()) == ["t", "objective", "grad_error_sq", "samples_used"]
            assert len(tr) == 151
        side = json.loads((out / "traces" / tag / "rep0.json").read_text())
        assert side["config"]["kind"] == "convex-quadratic" and len(side["x_final"]) == 5
        # sidecar's final iterate reproduces the last objective
        assert p.objective(np.array(side["x_final"])) == pytest.approx(float(traces[0][-1]["objective"]), rel=1e-12)
        summ = _read_csv(out / "summary" / f"{tag}.csv")
        assert list(summ[0].keys()) == ["solver", "t", "mean_objective", "stderr", "mean_samples",
                                        "mean_suboptimality"]
        for row in summ:
            t = int(row["t"])
            vals = [float(tr[t]["objective"]) for tr in traces]
            mean = sum(vals) / 3
            sd = math.sqrt(sum((v - mean) ** 2 for v in vals) / 2)
            assert float(row["mean_objective"]) == pytest.approx(mean, rel=1e-12)
            assert float(row["stderr"]) == pytest.approx(sd / math.sqrt(3), rel=1e-9, abs=1e-9)
            assert float(row["mean_samples"]) == sum(int(tr[t]["samples_used"]) for tr in traces) / 3
            assert float(row["mean_suboptimality"]) == pytest.approx(mean - snap["fstar"], rel=1e-9)


def test_run_twice_byte_identical(tmp_path):
    cfg = _quad(replicates=1)
    for o in ("a", "b"):
        assert experiment.run(config_from_dict(cfg), out=tmp_path / o, workers=1) == 0
    for f in sorted((tmp_path / "a" / "traces").rglob("*.*")):
        g = tmp_path / "b" / f.relative_to(tmp_path / "a")
        assert f.read_bytes() == g.read_bytes(), f.name


def test_solver_order_and_pool_do_not_change_traces(tmp_path):
    a = _quad()
    b = _quad(solvers=list(reversed(a["solvers"])))
    assert experiment.run(config_from_dict(a), out=tmp_path / "a", workers=1) == 0
    assert experiment.run(config_from_dict(b), out=tmp_path / "b", workers=2) == 0
    for f in sorted((tmp_path / "a" / "traces").rglob("*.csv")):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_replicate_streams_are_distinct():
    x = experiment.replicate_rng(0, "sfw-b1", 0).random(4)
    assert not np.array_equal(x, experiment.replicate_rng(0, "sfw-b1", 1).random(4))
    assert not np.array_equal(x, experiment.replicate_rng(0, "sfw-b2", 0).random(4))
    np.testing.assert_array_equal(x, experiment.replicate_rng(0, "sfw-b1", 0).random(4))


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("STOCG_THREADS", "3")
    assert experiment.worker_count(10) == 3
    assert experiment.worker_count(2) == 2
    monkeypatch.setenv("STOCG_THREADS", "0")
    with pytest.raises(ValueError):
        experiment.worker_count(4)
    monkeypatch.delenv("STOCG_THREADS")
    assert experiment.worker_count(10**6) >= 1


def test_mid_run_failure_writes_partial_trace_and_failure_manifest(tmp_path, monkeypatch):
    real = problems.QuadraticOracle.sample
    calls = {"n": 0}

    def flaky(self, x, rng, batch=1):
        calls["n"] += 1
        if calls["n"] == 40:
            raise FloatingPointError("injected")
        return real(self, x, rng, batch)

    monkeypatch.setattr(problems.QuadraticOracle, "sample", flaky)
    out = tmp_path / "o"
    code = experiment.run(config_from_dict(_quad(replicates=1, solvers=[{"name": "sfw", "b": 1}])), out=out,
                          workers=1)
    assert code == 1
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "failed"
    assert man["failures"][0]["tag"] == "sfw-b1" and "injected" in man["failures"][0]["error"]
    rows = _read_csv(out / "traces" / "sfw-b1" / "rep0.csv")
    assert len(rows) == 40  # t = 0..39 recorded before the failing draw
    side = json.loads((out / "traces" / "sfw-b1" / "rep0.json").read_text())
    assert side["failed"] is True


def test_problem_snapshot_replay(tmp_path):
    out = tmp_path / "o"
    assert experiment.run(config_from_dict(_quad(replicates=1)), out=out, workers=1) == 0
    snap = json.loads((out / "problem.json").read_text())
    (tmp_path / "snap.json").write_text(json.dumps(snap["problem"]))
    cfg = _quad(replicates=1, problem={"file": "snap.json"})
    assert experiment.run(config_from_dict(cfg, base_dir=tmp_path), out=tmp_path / "o2", workers=1) == 0
    for f in sorted((out / "traces").rglob("*.csv")):
        assert f.read_bytes() == (tmp_path / "o2" / f.relative_to(out)).read_bytes()


def test_completion_budget_horizons(tmp_path):
    cfg = {"kind": "matrix-completion", "seed": 0, "replicates": 1,
           "problem": {"n": 8, "r": 2, "p_obs": 0.8, "seed": 0}, "budget": 2000,
           "solvers": [{"name": "sfw", "b": 100}, {"name": "minibatch-fw", "b": 50}, "growing-batch-fw"]}
    out = tmp_path / "o"
    assert experiment.run(config_from_dict(cfg), out=out, workers=1) == 0
    last = {tag: _read_csv(out / "traces" / tag / "rep0.csv")[-1]
            for tag in ("sfw-b100", "minibatch-fw-b50", "growing-batch-fw")}
    assert int(last["sfw-b100"]["t"]) == 20 and int(last["sfw-b100"]["samples_used"]) == 2000
    assert int(last["minibatch-fw-b50"]["t"]) == 40
    assert int(last["growing-batch-fw"]["t"]) == 17  # 17*18*35/6 = 1785 <= 2000 < 2109
    assert last["sfw-b100"]["grad_error_sq"] == ""


def test_submodular_example_ratios(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(CONFIGS / "facility.yaml"), "--out", str(out), "--workers", "1"]) == 0
    summ = {}
    for f in (out / "summary").glob("*.csv"):
        rows = _read_csv(f)
        summ[rows[-1]["solver"]] = float(rows[-1]["approx_ratio"])
    assert set(summ) >= {"scg-b1", "sga-b1", "fw-b1", "greedy-b1"}
    assert summ["scg-b1"] >= 1 - 1 / math.e - 0.05
    assert json.loads((out / "manifest.json").read_text())["opt"] > 0
    assert 1 - 1 / math.e <= summ["greedy-full"] <= 1 + 1e-12
    side = json.loads((out / "traces" / "scg-b1" / "rep0.json").read_text())
    assert side["extra"]["rounded_mean"] >= side["extra"]["multilinear_value"] - 3 * side["extra"]["rounded_stderr"]


def test_quadratic_preset_reproduces_ordering(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(CONFIGS / "quadratic_sigma100.yaml"), "--out", str(out), "--workers", "1"]) == 0
    sub = {tag: {int(r["t"]): float(r["mean_suboptimality"]) for r in _read_csv(out / "summary" / f"{tag}.csv")}
           for tag in ("fw", "sfw-b1", "minibatch-fw-b1", "minibatch-fw-b10", "minibatch-fw-b50")}
    T = 12800
    assert sub["fw"][T] <= sub["sfw-b1"][T] <= sub["minibatch-fw-b50"][T] <= sub["minibatch-fw-b10"][T] \
        <= sub["minibatch-fw-b1"][T]
    for t in sub["sfw-b1"]:
        assert sub["sfw-b1"][t] <= sub["minibatch-fw-b1"][t]


# ---------------------------------------------------------------- round / lmo-check / CLI


def test_round_integral_point(tmp_path, capsys):
    (tmp_path / "x.json").write_text("[1, 0, 1, 0]")
    p = _write(tmp_path, {"kind": "round", "x": "x.json", "k": 2, "trials": 1000})
    assert main(["round", str(p), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "round.json").read_text())
    assert rep["frequency"] == [1.0, 0.0, 1.0, 0.0]


def test_round_half_half(tmp_path):
    (tmp_path / "x.txt").write_text("0.5 0.5\n")
    p = _write(tmp_path, {"kind": "round", "x": "x.txt", "k": 1, "trials": 100000, "seed": 3})
    assert main(["round", str(p), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "round.json").read_text())
    band = 3 * math.sqrt(0.25 / 100000)
    assert all(abs(f - 0.5) <= band for f in rep["frequency"])
    assert rep["sizes"] == [0, 100000]


def test_round_preset_expectation(tmp_path):
    assert main(["round", str(CONFIGS / "round.yaml"), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "round.json").read_text())
    assert rep["rounded_mean"] >= rep["multilinear"] - 3 * rep["rounded_stderr"]


def test_round_rejects_over_budget(tmp_path, capsys):
    p = _write(tmp_path, {"kind": "round", "x": [0.9, 0.9, 0.9], "k": 1})
    assert main(["round", str(p)]) == 2
    assert "budget" in capsys.readouterr().err


def test_lmo_check_cli(capsys):
    assert main(["lmo-check", "--trials", "20", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    for name in ("box", "cardinality", "uniform-matroid", "partition-matroid", "nuclear-psd"):
        assert f"{name}" in out and "20/20 passed" in out


def test_subsample_flags_override(tmp_path):
    ratings = tmp_path / "r.csv"
    assert main(["gen-ratings", str(ratings), "--users", "30", "--items", "10", "--seed", "2"]) == 0
    cfg = {"kind": "submodular-max", "replicates": 1,
           "problem": {"objective": "facility", "ratings": "r.csv", "k": 2}, "T": 20, "solvers": ["greedy"]}
    p = _write(tmp_path, cfg)
    out = tmp_path / "o"
    assert main(["run", str(p), "--out", str(out), "--max-items", "6", "--max-users", "12"]) == 0
    snap = json.loads((out / "problem.json").read_text())
    assert snap["n"] == 6 and len(snap["R"]) == 12


def test_console_script_available():
    import shutil
    import subprocess
    exe = shutil.which("stocg")
    assert exe is not None
    res = subprocess.run([exe, "validate", str(CONFIGS / "cut.yaml")], capture_output=True, text=True)
    assert res.returncode == 0 and "ok" in res.stdout
