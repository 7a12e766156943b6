"""Config-driven experiment runner: seeded replicates, trace/summary CSVs and a manifest.

Layout of an output directory::

    manifest.json               config echo, versions, wall-clock, status
    problem.json                snapshot of the generated instance
    traces/<tag>/rep<i>.csv     t,objective,grad_error_sq,samples_used
    traces/<tag>/rep<i>.json    sidecar: config echo, seed entropy, final iterate
    summary/<tag>.csv           solver,t,mean_objective,stderr,mean_samples[,extra]

Replicate ``i`` of solver ``tag`` draws from
``SeedSequence([seed, crc32(tag), i])`` so reordering solvers in a config
does not change any trace.
"""
from __future__ import annotations

import csv
import io
import json
import os
import platform
import sys
import time
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import ConfigError, LoadedConfig, load_config, solver_tag, validate
from .linear_oracles import CardinalityPolytope, lmo_check
from .problems import (CompletionOracle, CompletionProblem, QuadraticOracle, QuadraticProblem, gen_completion,
                       make_quadratic, quadratic_opt)
from .ratings import load_ratings_csv, subsample, synthetic_ratings
from .schedules import Schedule
from .solvers import (discrete_greedy, fw_deterministic, growing_batch_fw, growing_batch_horizon, minibatch_fw,
                      nmscg, scg, sfw, sga)
from .submodular import (CutFunction, EmpiricalSetFunction, MultilinearOracle, brute_force_opt, multilinear_exact,
                         pipage_round_many, random_cut_graph)

TRACE_HEADER = ("t", "objective", "grad_error_sq", "samples_used")

DEFAULT_SCHEDULES = {
    "convex-quadratic": {"rho": "rho-theory", "gamma": "gamma-theory"},
    "matrix-completion": {"rho": "rho-exp", "gamma": "gamma-exp"},
    "submodular-max": {"rho": "rho-theory"},
}


def replicate_rng(master_seed: int, tag: str, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), zlib.crc32(tag.encode()), int(i)]))


def worker_count(jobs: int | None = None) -> int:
    env = os.environ.get("STOCG_THREADS")
    if env:
        try:
            w = int(env)
        except ValueError:
            raise ValueError(f"STOCG_THREADS must be a positive integer, got {env!r}") from None
        if w < 1:
            raise ValueError(f"STOCG_THREADS must be a positive integer, got {env!r}")
    else:
        w = os.cpu_count() or 1
    return max(1, min(w, jobs)) if jobs else w


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return "" if np.isnan(v) else repr(v)


# ------------------------------------------------------------ problems


def _ratings(prob: dict, cfg: LoadedConfig) -> np.ndarray:
    mu, mi = prob.get("max_users"), prob.get("max_items")
    sseed = int(prob.get("subsample_seed", 0))
    if "ratings" in prob:
        return load_ratings_csv(cfg.resolve(prob["ratings"]), mu, mi, seed=sseed)
    syn = prob["synthetic"]
    R = synthetic_ratings(int(syn["users"]), int(syn["items"]), float(syn.get("density", 0.3)),
                          int(syn.get("seed", 0)))
    return subsample(R, mu, mi, sseed)


def build_problem(cfg: LoadedConfig) -> dict:
    """Instantiate the configured problem as a JSON-friendly payload (also the snapshot)."""
    d = cfg.data
    kind = d["kind"]
    prob = d.get("problem") or {}
    seed = int(d.get("seed", 0))
    if kind == "convex-quadratic":
        if "file" in prob:
            p = QuadraticProblem.from_json(cfg.resolve(prob["file"]).read_text())
        else:
            p = make_quadratic(int(prob.get("n", 5)), float(prob.get("sigma", 100.0)),
                               float(prob.get("lower", 10.0)), float(prob.get("upper", 100.0)),
                               int(prob.get("seed", seed)), tuple(prob.get("eig_range", (100.0, 1000.0))))
        _, fstar = quadratic_opt(p)
        return {"kind": kind, "problem": p.to_dict(), "fstar": fstar}
    if kind == "matrix-completion":
        if "file" in prob:
            p = CompletionProblem.from_json(cfg.resolve(prob["file"]).read_text())
        else:
            p = gen_completion(int(prob["n"]), int(prob["r"]), float(prob["p_obs"]), int(prob.get("seed", seed)))
        return {"kind": kind, "problem": p.to_dict()}
    if kind == "submodular-max":
        k = int(prob["k"])
        if prob["objective"] == "cut":
            g = prob["graph"]
            if "edges" in g:
                edges = [tuple(e) for e in g["edges"]]
                n = int(g.get("n", 1 + max(max(e[0], e[1]) for e in edges)))
            else:
                n = int(g["n"])
                edges = random_cut_graph(n, float(g.get("p", 0.5)), int(g.get("seed", seed)))
            payload = {"kind": kind, "objective": "cut", "n": n, "edges": [list(e) for e in edges], "k": k}
        else:
            R = _ratings(prob, cfg)
            payload = {"kind": kind, "objective": prob["objective"], "n": int(R.shape[1]), "R": R.tolist(), "k": k}
        if k > payload["n"]:
            raise ConfigError([f"{cfg.source}: budget k={k} exceeds the number of items n={payload['n']}"])
        f = set_function(payload)
        if d.get("compute_opt", f.n <= 20):
            S, opt = brute_force_opt(f, k)
            payload["opt"] = opt
            payload["opt_set"] = sorted(S)
        return payload
    raise ValueError(f"kind {kind!r} has no problem instance")


def set_function(payload: dict):
    if payload["objective"] == "cut":
        return CutFunction(payload["edges"], payload["n"])
    return EmpiricalSetFunction(np.asarray(payload["R"], dtype=float), payload["objective"])


# ------------------------------------------------------------ jobs


def _sched(spec: dict, key: str, kind: str):
    return Schedule.parse(str(spec.get(key, DEFAULT_SCHEDULES[kind][key])))


def _horizon(spec: dict, job: dict) -> int:
    if "T" in spec:
        return int(spec["T"])
    budget = job.get("budget")
    if budget is not None and job["kind"] == "matrix-completion":
        if spec["name"] == "growing-batch-fw":
            return growing_batch_horizon(budget)
        if spec["name"] in ("sfw", "minibatch-fw"):
            return max(1, budget // int(spec.get("b", 1)))
    if job.get("T") is None:
        raise ValueError(f"solver {spec['name']} needs a horizon T")
    return int(job["T"])


def _run_convex(job, spec, rng):
    kind = job["kind"]
    if kind == "convex-quadratic":
        p = QuadraticProblem.from_dict(job["payload"]["problem"])
        oracle, region = QuadraticOracle(p), p.box
        x0 = job.get("x0", "lower")
        if isinstance(x0, str):
            x0 = {"lower": p.box.lower, "upper": p.box.upper,
                  "center": (p.box.lower + p.box.upper) / 2}[x0]
        x0 = np.array(x0, dtype=float)
    else:
        p = CompletionProblem.from_dict(job["payload"]["problem"])
        oracle, region = CompletionOracle(p), p.ball
        x0 = np.zeros((p.n, p.n))
    T = _horizon(spec, job)
    name = spec["name"]
    common = dict(keep_iterates=False)
    track = kind == "convex-quadratic"
    if name == "fw":
        return fw_deterministic(oracle, region, _sched(spec, "gamma", kind), T, x0, **common)
    if name == "sfw":
        return sfw(oracle, region, _sched(spec, "rho", kind), _sched(spec, "gamma", kind), T, x0,
                   int(spec.get("b", 1)), rng, track_error=track, **common)
    if name == "minibatch-fw":
        return minibatch_fw(oracle, region, _sched(spec, "gamma", kind), T, x0, int(spec.get("b", 1)), rng,
                            track_error=track, **common)
    if name == "growing-batch-fw":
        return growing_batch_fw(oracle, region, _sched(spec, "gamma", kind), T, x0, rng, track_error=track,
                                **common)
    raise ValueError(f"unknown solver {name}")


def _run_submodular(job, spec, rng):
    payload = job["payload"]
    f = set_function(payload)
    n, k = payload["n"], payload["k"]
    name = spec["name"]
    b = int(spec["b"]) if "b" in spec else None
    if name == "greedy":
        order = discrete_greedy(f, k, b, rng)
        S = np.zeros(n, dtype=bool)
        per = b if b is not None and getattr(f, "n_samples", None) and b < f.n_samples else \
            (getattr(f, "n_samples", None) or 1)
        rows = [(0, f.value(S), None, 0)]
        for step, i in enumerate(order, start=1):
            S[i] = True
            rows.append((step, f.value(S), None, step * per))
        return {"rows": rows, "x_final": S.astype(float).tolist(), "failed": False, "error": None,
                "algorithm": "greedy", "T": k, "batch": b, "schedules": {}, "objective_exact": True,
                "extra": {"selected": order}}
    oracle = MultilinearOracle(f)
    region = CardinalityPolytope(n, k)
    T = _horizon(spec, job)
    b = b or 1
    kw = dict(keep_iterates=False, track_error=False)
    if name == "scg":
        return scg(oracle, region, _sched(spec, "rho", "submodular-max"), T, rng, b, **kw)
    if name == "fw":
        return scg(oracle, region, Schedule.parse("const:1"), T, rng, b, **kw)
    if name == "nmscg":
        return nmscg(oracle, region, np.ones(n), _sched(spec, "rho", "submodular-max"), T, rng, b, **kw)
    if name == "sga":
        return sga(oracle, region, float(spec.get("c", 1.0)), T, b, rng, keep_iterates=False)
    raise ValueError(f"unknown solver {name}")


def _rows_of(run) -> list[tuple]:
    if isinstance(run, dict):
        return run["rows"]
    return [(int(run.t[i]), run.objective[i], run.grad_error_sq[i], int(run.samples_used[i]))
            for i in range(len(run))]


def run_job(job: dict) -> dict:
    """Execute one (solver, replicate) and write its trace and sidecar; returns the rows for the summary."""
    spec, tag, rep = job["spec"], job["tag"], job["replicate"]
    rng = replicate_rng(job["seed"], tag, rep)
    out = Path(job["out"]) / "traces" / tag
    out.mkdir(parents=True, exist_ok=True)
    try:
        if job["kind"] == "submodular-max":
            run = _run_submodular(job, spec, rng)
        else:
            run = _run_convex(job, spec, rng)
    except Exception as exc:  # noqa: BLE001 - recorded in the failure manifest
        run = {"rows": [], "x_final": None, "failed": True, "error": f"{type(exc).__name__}: {exc}",
               "algorithm": spec["name"], "T": None, "batch": spec.get("b"), "schedules": {},
               "objective_exact": None, "extra": {"traceback": traceback.format_exc()}}
    rows = _rows_of(run)
    every = int(job.get("trace_every", 1))
    last = rows[-1][0] if rows else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for r in rows:
        if r[0] % every == 0 or r[0] == last:
            w.writerow([r[0], _fmt(r[1]), _fmt(r[2]), r[3]])
    (out / f"rep{rep}.csv").write_text(buf.getvalue())

    if isinstance(run, dict):
        meta = {k: run[k] for k in ("algorithm", "T", "batch", "schedules", "objective_exact", "failed", "error")}
        x_final, extra = run["x_final"], dict(run["extra"])
    else:
        meta = {"algorithm": run.algorithm, "T": run.T, "batch": run.batch, "schedules": run.schedules,
                "objective_exact": run.objective_exact, "failed": run.failed, "error": run.error}
        x_final, extra = run.x_final.tolist(), dict(run.extra)
    if job["kind"] == "submodular-max" and x_final is not None and not meta["failed"]:
        extra.update(_submodular_extras(job, x_final, rng))
    sidecar = {"tag": tag, "replicate": rep, "seed_entropy": [job["seed"], zlib.crc32(tag.encode()), rep],
               "solver": spec, **meta, "x_final": x_final, "extra": extra, "config": job["config"]}
    (out / f"rep{rep}.json").write_text(json.dumps(sidecar, indent=1, sort_keys=True, default=str) + "\n")
    return {"tag": tag, "replicate": rep, "rows": [(r[0], float(r[1]), r[3]) for r in rows],
            "failed": bool(meta["failed"]), "error": meta["error"]}


def _submodular_extras(job, x_final, rng) -> dict:
    payload = job["payload"]
    f = set_function(payload)
    x = np.asarray(x_final, dtype=float)
    extra = {}
    if f.n <= 20:
        extra["multilinear_value"] = multilinear_exact(f, x)
    trials = int(job.get("round_trials", 0))
    if trials > 0 and x.sum() <= payload["k"] + 1e-9:
        B = pipage_round_many(x, payload["k"], rng, trials)
        vals = f.value_many(B) if f.n <= 20 else np.array([f.value(row) for row in B])
        extra["rounded_mean"] = float(vals.mean())
        extra["rounded_stderr"] = float(vals.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return extra


# ------------------------------------------------------------ summary


def summarize(results: list[dict], report=None) -> list[tuple]:
    """Per-``t`` mean objective, standard error over replicates and mean samples for one solver.

    Failed replicates are left out; only steps present in every remaining trace are reported.
    """
    ok = [r for r in results if not r["failed"] and r["rows"]]
    if not ok:
        return []
    by_t = [{t: (v, s) for t, v, s in r["rows"]} for r in ok]
    common = set(by_t[0])
    for m in by_t[1:]:
        common &= set(m)
    ts = sorted(common if report is None else common & set(report))
    out = []
    for t in ts:
        vals = np.array([m[t][0] for m in by_t])
        samples = np.array([m[t][1] for m in by_t], dtype=float)
        se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out.append((t, float(vals.mean()), se, float(samples.mean())))
    return out


def write_summary(path: Path, tag: str, rows, kind: str, payload: dict) -> None:
    header = ["solver", "t", "mean_objective", "stderr", "mean_samples"]
    extra = None
    if kind == "convex-quadratic":
        header.append("mean_suboptimality")
        extra = lambda m: m - payload["fstar"]  # noqa: E731
    elif kind == "submodular-max" and payload.get("opt"):
        header.append("approx_ratio")
        extra = lambda m: m / payload["opt"]  # noqa: E731
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for t, m, se, s in rows:
        line = [tag, t, _fmt(m), _fmt(se), _fmt(s)]
        if extra is not None:
            line.append(_fmt(extra(m)))
        w.writerow(line)
    path.write_text(buf.getvalue())


# ------------------------------------------------------------ entry points


def versions() -> dict:
    return {"stocg": __version__, "numpy": np.__version__, "python": platform.python_version(),
            "kernels": kernels.BACKEND}


def _write_manifest(out: Path, manifest: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")


def _output_dir(cfg: LoadedConfig, out) -> Path:
    if out is not None:
        return Path(out)
    if "output" in cfg.data:
        return Path(cfg.data["output"])
    return Path("out") / Path(cfg.source).stem


def run(config, out=None, workers: int | None = None, log=print) -> int:
    """Run an experiment config (path or :class:`LoadedConfig`). Returns a process exit status."""
    try:
        cfg = config if isinstance(config, LoadedConfig) else load_config(config)
    except ConfigError as exc:
        log(str(exc), file=sys.stderr)
        return 2
    diags = validate(cfg)
    if diags:
        for dgn in diags:
            log(str(dgn), file=sys.stderr)
        return 2
    kind = cfg.data["kind"]
    if kind == "lmo-check":
        return run_lmo_check(int(cfg.data.get("trials", 100)), int(cfg.data.get("seed", 0)), log=log)
    if kind == "round":
        return run_round(cfg, out, log=log)

    outdir = _output_dir(cfg, out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.data, "config_path": cfg.source, "versions": versions(), "status": "running"}
    t0 = time.perf_counter()
    try:
        payload = build_problem(cfg)
    except Exception as exc:  # noqa: BLE001
        manifest.update(status="failed", failures=[{"stage": "problem", "error": f"{type(exc).__name__}: {exc}"}],
                        wall_clock_seconds=time.perf_counter() - t0)
        _write_manifest(outdir, manifest)
        log(f"problem construction failed: {exc}", file=sys.stderr)
        return 1
    (outdir / "problem.json").write_text(json.dumps(payload, sort_keys=True) + "\n")

    d = cfg.data
    reps = int(d.get("replicates", 1))
    specs = [s if isinstance(s, dict) else {"name": s} for s in d["solvers"]]
    jobs = []
    for spec in specs:
        tag = solver_tag(spec)
        for i in range(reps):
            jobs.append({"kind": kind, "spec": spec, "tag": tag, "replicate": i, "seed": int(d.get("seed", 0)),
                         "T": d.get("T"), "budget": d.get("budget"), "x0": d.get("x0", "lower"),
                         "trace_every": d.get("trace_every", 1), "round_trials": d.get("round_trials", 0),
                         "payload": payload, "out": str(outdir), "config": d})
    nworkers = worker_count(len(jobs)) if workers is None else max(1, min(workers, len(jobs)))
    if nworkers == 1:
        results = [run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            results = list(pool.map(run_job, jobs))

    (outdir / "summary").mkdir(exist_ok=True)
    report = d.get("report")
    for spec in specs:
        tag = solver_tag(spec)
        rows = summarize([r for r in results if r["tag"] == tag], report)
        write_summary(outdir / "summary" / f"{tag}.csv", tag, rows, kind, payload)

    failures = [{"tag": r["tag"], "replicate": r["replicate"], "error": r["error"]} for r in results if r["failed"]]
    manifest.update(status="failed" if failures else "ok", failures=failures, workers=nworkers,
                    wall_clock_seconds=time.perf_counter() - t0,
                    traces={solver_tag(s): [f"traces/{solver_tag(s)}/rep{i}.csv" for i in range(reps)]
                            for s in specs},
                    summaries={solver_tag(s): f"summary/{solver_tag(s)}.csv" for s in specs})
    for key in ("fstar", "opt", "opt_set"):
        if key in payload:
            manifest[key] = payload[key]
    _write_manifest(outdir, manifest)
    for f in failures:
        log(f"{f['tag']} replicate {f['replicate']} failed: {f['error']}", file=sys.stderr)
    log(f"wrote {len(results)} traces to {outdir}")
    return 1 if failures else 0


def run_lmo_check(trials: int = 100, seed: int = 0, log=print) -> int:
    res = lmo_check(trials=trials, seed=seed)
    bad = 0
    for r in res:
        log(f"{r.name:<20} {r.passed}/{r.passed + r.failed} passed  (worst gap {r.worst_gap:.3g})")
        bad += r.failed
    return 1 if bad else 0


def _read_point(spec, cfg: LoadedConfig) -> np.ndarray:
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    text = cfg.resolve(spec).read_text().strip()
    if text.startswith("["):
        return np.asarray(json.loads(text), dtype=float)
    if text.startswith("{"):
        return np.asarray(json.loads(text)["x_final"], dtype=float)
    return np.asarray([float(t) for t in text.replace(",", " ").split()], dtype=float)


def run_round(config, out=None, log=print) -> int:
    """Pipage-round a fractional point many times; report inclusion frequencies and E[f] vs F."""
    cfg = config if isinstance(config, LoadedConfig) else load_config(config)
    diags = validate(cfg)
    if diags:
        for dgn in diags:
            log(str(dgn), file=sys.stderr)
        return 2
    d = cfg.data
    x = _read_point(d["x"], cfg)
    k = int(d["k"])
    trials = int(d.get("trials", 100_000))
    rng = np.random.default_rng(np.random.SeedSequence([int(d.get("seed", 0)), zlib.crc32(b"round")]))
    try:
        B = pipage_round_many(x, k, rng, trials)
    except ValueError as exc:
        log(f"{cfg.source}: {exc}", file=sys.stderr)
        return 2
    freq = B.mean(axis=0)
    se = np.sqrt(np.maximum(freq * (1 - freq), 0) / trials)
    report = {"x": x.tolist(), "k": k, "trials": trials, "frequency": freq.tolist(), "stderr": se.tolist(),
              "sizes": np.bincount(B.sum(axis=1), minlength=k + 1).tolist()}
    log(f"{'item':>4} {'x':>10} {'freq':>10} {'stderr':>10}")
    for i in range(x.shape[0]):
        log(f"{i:>4} {x[i]:>10.6f} {freq[i]:>10.6f} {se[i]:>10.6f}")
    if isinstance(d.get("problem"), dict):
        prob_cfg = LoadedConfig(dict(d, kind="submodular-max", problem=dict(d["problem"], k=k),
                                     compute_opt=False), cfg.lines, cfg.source, cfg.base_dir)
        f = set_function(build_problem(prob_cfg))
        if f.n != x.shape[0]:
            log(f"{cfg.source}: point has {x.shape[0]} coordinates but the objective has {f.n} items",
                file=sys.stderr)
            return 2
        vals = f.value_many(B) if f.n <= 20 else np.array([f.value(row) for row in B])
        report["rounded_mean"] = float(vals.mean())
        report["rounded_stderr"] = float(vals.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
        if f.n <= 20:
            report["multilinear"] = multilinear_exact(f, x)
        log(f"E[f(round(x))] = {report['rounded_mean']:.6g} +- {report['rounded_stderr']:.3g}"
            + (f"   F(x) = {report['multilinear']:.6g}" if "multilinear" in report else ""))
    if out is not None or "output" in d:
        outdir = _output_dir(cfg, out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "round.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    return 0
