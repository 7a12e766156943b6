"""Experiment configuration: YAML loading with source lines, and validation."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

from .schedules import Schedule

KINDS = ("convex-quadratic", "matrix-completion", "submodular-max", "lmo-check", "round")

SOLVERS = {
    "convex-quadratic": {"fw", "sfw", "minibatch-fw", "growing-batch-fw"},
    "matrix-completion": {"fw", "sfw", "minibatch-fw", "growing-batch-fw"},
    "submodular-max": {"scg", "nmscg", "sga", "fw", "greedy"},
}

OBJECTIVES = ("facility", "concave", "modular", "cut")


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    source: str
    line: int | None
    path: str
    message: str

    def __str__(self) -> str:
        loc = f"{self.source}:{self.line}" if self.line else self.source
        where = f" {self.path}:" if self.path else ""
        return f"{loc}:{where} {self.message}"


@dataclass
class LoadedConfig:
    data: dict
    lines: dict
    source: str
    base_dir: Path

    def line(self, *path) -> int | None:
        # fall back to the nearest enclosing node that has a line
        path = tuple(path)
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return self.lines.get((), 1)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else (self.base_dir / p)


def _index_lines(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            out[path + (key,)] = k.start_mark.line + 1
            _index_lines(v, path + (key,), out)
            out[path + (key,)] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _index_lines(v, path + (i,), out)
    return out


def load_config(path) -> LoadedConfig:
    path = Path(path)
    src = str(path)
    if not path.exists():
        raise ConfigError([Diagnostic(src, None, "", "config file not found")])
    text = path.read_text()
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError([Diagnostic(src, line, "", f"YAML syntax error: {getattr(exc, 'problem', exc)}")]) from None
    if not isinstance(data, dict):
        raise ConfigError([Diagnostic(src, 1, "", "config must be a mapping")])
    return LoadedConfig(data, _index_lines(node), src, path.parent)


def config_from_dict(data: dict, source: str = "<dict>", base_dir=".") -> LoadedConfig:
    return LoadedConfig(data, {}, source, Path(base_dir))


def _fmt_path(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


class _Checker:
    def __init__(self, cfg: LoadedConfig):
        self.cfg = cfg
        self.diags: list[Diagnostic] = []

    def err(self, path, msg):
        self.diags.append(Diagnostic(self.cfg.source, self.cfg.line(*path), _fmt_path(path), msg))

    def int_(self, d, key, path, minimum=None, required=False, default=None):
        if not isinstance(d, dict) or key not in d:
            if required:
                self.err(path, f"missing required key '{key}'")
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.err(path + (key,), f"expected an integer, got {v!r}")
            return default
        if minimum is not None and v < minimum:
            self.err(path + (key,), f"must be >= {minimum}, got {v}")
        return v

    def num(self, d, key, path, minimum=None, maximum=None, required=False, default=None, strict_min=False):
        if not isinstance(d, dict) or key not in d:
            if required:
                self.err(path, f"missing required key '{key}'")
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.err(path + (key,), f"expected a number, got {v!r}")
            return default
        if minimum is not None and (v <= minimum if strict_min else v < minimum):
            self.err(path + (key,), f"must be {'>' if strict_min else '>='} {minimum}, got {v}")
        if maximum is not None and v > maximum:
            self.err(path + (key,), f"must be <= {maximum}, got {v}")
        return v

    def schedule(self, d, key, path):
        if not isinstance(d, dict) or key not in d:
            return
        try:
            Schedule.parse(str(d[key]))
        except ValueError as exc:
            self.err(path + (key,), str(exc))

    def unknown_keys(self, d, allowed, path):
        if isinstance(d, dict):
            for k in d:
                if k not in allowed:
                    self.err(path + (k,), f"unknown key '{k}'")


TOP_KEYS = {"kind", "seed", "replicates", "output", "problem", "solvers", "T", "budget", "x0", "report",
            "trials", "x", "k", "compute_opt", "round_trials", "trace_every", "description"}


def validate(cfg: LoadedConfig) -> list[Diagnostic]:
    """Check schema, referenced files, feasibility of sizes and schedule names. No side effects."""
    c = _Checker(cfg)
    d = cfg.data
    c.unknown_keys(d, TOP_KEYS, ())
    kind = d.get("kind")
    if kind is None:
        c.err((), "missing required key 'kind'")
        return c.diags
    if kind not in KINDS:
        c.err(("kind",), f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
        return c.diags
    c.int_(d, "seed", (), minimum=0)
    c.int_(d, "replicates", (), minimum=1)
    c.int_(d, "trace_every", (), minimum=1)
    if "output" in d and not isinstance(d["output"], str):
        c.err(("output",), "output must be a path string")

    if kind == "lmo-check":
        c.int_(d, "trials", (), minimum=1)
        return c.diags
    if kind == "round":
        _validate_round(c, d)
        return c.diags

    prob = d.get("problem")
    if not isinstance(prob, dict):
        c.err(("problem",) if "problem" in d else (), "missing or malformed 'problem' mapping")
        prob = {}
    n_items = None
    if kind == "convex-quadratic":
        n_items = _validate_quadratic(c, prob)
    elif kind == "matrix-completion":
        _validate_completion(c, prob)
    else:
        n_items = _validate_submodular_problem(c, prob, ("problem",))

    horizon = c.int_(d, "T", (), minimum=1, required=(kind != "matrix-completion" or "budget" not in d))
    c.int_(d, "budget", (), minimum=1)
    if "report" in d:
        rep = d["report"]
        if not isinstance(rep, list) or not all(isinstance(t, int) and not isinstance(t, bool) and t >= 0 for t in rep):
            c.err(("report",), "report must be a list of non-negative step indices")
        elif horizon is not None and any(t > horizon for t in rep):
            c.err(("report",), f"report steps must not exceed T={horizon}")
    if kind == "convex-quadratic" and "x0" in d:
        x0 = d["x0"]
        if not (x0 in ("lower", "upper", "center") or (isinstance(x0, list) and len(x0) == (n_items or len(x0)))):
            c.err(("x0",), "x0 must be 'lower', 'upper', 'center' or a list of length n")
    if kind == "submodular-max":
        if "compute_opt" in d and not isinstance(d["compute_opt"], bool):
            c.err(("compute_opt",), "compute_opt must be true or false")
        c.int_(d, "round_trials", (), minimum=0)

    solvers = d.get("solvers")
    if not isinstance(solvers, list) or not solvers:
        c.err(("solvers",) if "solvers" in d else (), "need a non-empty 'solvers' list")
        return c.diags
    tags = {}
    for i, s in enumerate(solvers):
        path = ("solvers", i)
        if isinstance(s, str):
            s = {"name": s}
        if not isinstance(s, dict) or "name" not in s:
            c.err(path, "each solver needs a 'name'")
            continue
        name = s["name"]
        if name not in SOLVERS[kind]:
            c.err(path + ("name",), f"unknown solver {name!r} for {kind}; expected one of {', '.join(sorted(SOLVERS[kind]))}")
            continue
        c.unknown_keys(s, {"name", "b", "rho", "gamma", "c", "T", "tag"}, path)
        c.int_(s, "b", path, minimum=1)
        c.int_(s, "T", path, minimum=1)
        c.num(s, "c", path, minimum=0, strict_min=True)
        c.schedule(s, "rho", path)
        c.schedule(s, "gamma", path)
        tag = solver_tag(s)
        if tag in tags:
            c.err(path, f"duplicate solver tag {tag!r} (also solvers[{tags[tag]}]); set 'tag' to disambiguate")
        tags[tag] = i
    return c.diags


def _validate_quadratic(c, prob):
    path = ("problem",)
    if "file" in prob:
        if not c.cfg.resolve(prob["file"]).exists():
            c.err(path + ("file",), f"problem snapshot not found: {prob['file']}")
        return None
    c.unknown_keys(prob, {"n", "sigma", "lower", "upper", "seed", "eig_range"}, path)
    n = c.int_(prob, "n", path, minimum=1, default=5)
    c.num(prob, "sigma", path, minimum=0)
    lo = c.num(prob, "lower", path, default=10.0)
    hi = c.num(prob, "upper", path, default=100.0)
    if lo is not None and hi is not None and not lo < hi:
        c.err(path + ("upper",), f"upper ({hi}) must exceed lower ({lo})")
    c.int_(prob, "seed", path, minimum=0)
    er = prob.get("eig_range")
    if er is not None and not (isinstance(er, list) and len(er) == 2 and 0 < er[0] <= er[1]):
        c.err(path + ("eig_range",), "eig_range must be [low, high] with 0 < low <= high")
    return n


def _validate_completion(c, prob):
    path = ("problem",)
    if "file" in prob:
        if not c.cfg.resolve(prob["file"]).exists():
            c.err(path + ("file",), f"problem snapshot not found: {prob['file']}")
        return
    c.unknown_keys(prob, {"n", "r", "p_obs", "seed"}, path)
    n = c.int_(prob, "n", path, minimum=1, required=True)
    r = c.int_(prob, "r", path, minimum=1, required=True)
    if n is not None and r is not None and r > n:
        c.err(path + ("r",), f"rank r={r} exceeds n={n}")
    c.num(prob, "p_obs", path, minimum=0, maximum=1, strict_min=True, required=True)
    c.int_(prob, "seed", path, minimum=0)


def _validate_submodular_problem(c, prob, path):
    c.unknown_keys(prob, {"objective", "ratings", "synthetic", "max_users", "max_items", "subsample_seed", "k",
                          "graph"}, path)
    obj = prob.get("objective")
    if obj is None:
        c.err(path, "missing required key 'objective'")
    elif obj not in OBJECTIVES:
        c.err(path + ("objective",), f"unknown objective {obj!r}; expected one of {', '.join(OBJECTIVES)}")
    n = None
    if obj == "cut":
        g = prob.get("graph")
        if not isinstance(g, dict):
            c.err(path, "cut objective needs a 'graph' mapping (edges or random)")
        elif "edges" in g:
            edges = g["edges"]
            ok = isinstance(edges, list) and all(isinstance(e, list) and len(e) in (2, 3) for e in edges)
            if not ok:
                c.err(path + ("graph", "edges"), "edges must be a list of [a, b] or [a, b, w]")
            else:
                n = g.get("n", 1 + max((max(e[0], e[1]) for e in edges), default=-1))
        else:
            n = c.int_(g, "n", path + ("graph",), minimum=1, required=True)
            c.num(g, "p", path + ("graph",), minimum=0, maximum=1)
    elif obj in OBJECTIVES:
        if "ratings" in prob:
            if not c.cfg.resolve(prob["ratings"]).exists():
                c.err(path + ("ratings",), f"ratings file not found: {prob['ratings']}")
            n = prob.get("max_items")
        elif "synthetic" in prob:
            syn = prob["synthetic"]
            if not isinstance(syn, dict):
                c.err(path + ("synthetic",), "synthetic must be a mapping {users, items, density, seed}")
            else:
                c.int_(syn, "users", path + ("synthetic",), minimum=1, required=True)
                n = c.int_(syn, "items", path + ("synthetic",), minimum=1, required=True)
                c.num(syn, "density", path + ("synthetic",), minimum=0, maximum=1, strict_min=True)
        else:
            c.err(path, "need 'ratings' (CSV path) or 'synthetic' for ratings-based objectives")
        mi = c.int_(prob, "max_items", path, minimum=1)
        if mi is not None and n is not None:
            n = min(n, mi)
        c.int_(prob, "max_users", path, minimum=1)
    k = c.int_(prob, "k", path, minimum=0, required=True)
    if k is not None and n is not None and k > n:
        c.err(path + ("k",), f"budget k={k} exceeds the number of items n={n}")
    return n


def _validate_round(c, d):
    if "x" not in d:
        c.err((), "missing required key 'x' (path to the fractional point)")
    elif isinstance(d["x"], str):
        if not c.cfg.resolve(d["x"]).exists():
            c.err(("x",), f"point file not found: {d['x']}")
    elif not isinstance(d["x"], list):
        c.err(("x",), "x must be a file path or an inline list")
    c.int_(d, "k", (), minimum=0, required=True)
    c.int_(d, "trials", (), minimum=1)
    if isinstance(d.get("problem"), dict):
        _validate_submodular_problem(c, dict(d["problem"], k=d.get("k", 0)), ("problem",))


def solver_tag(s: dict) -> str:
    if isinstance(s, str):
        return s
    if s.get("tag"):
        return str(s["tag"])
    tag = s["name"]
    if "b" in s:
        tag += f"-b{s['b']}"
    return tag
