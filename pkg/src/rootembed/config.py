"""Run configuration: a sectioned plain-text format.

Example::

    [nu]
    atom 0 1

    [mu]
    atom -1 0.5
    atom 1 0.5

    [sigma]
    constant 1.0

    [problem]
    C = c_star

    [grid]
    dx = 0.02
    t_max = 2

    [sim]
    n_paths = 20000
    dt_sim = 2.5e-4

Lines starting with ``#`` are comments. ``[nu]`` and ``[mu]`` hold component
lines ``atom x w`` or ``uniform a b w``. ``[sigma]`` holds either one
``constant v`` line or ``x sigma`` node lines, plus an optional ``K = ...``.
All other sections are ``key = value``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .errors import InvalidConstant, InvalidMeasure, MissingField, ParseError
from .model import Atom, DiffusionSpec, ProbabilityMeasure, Uniform, c_star

KEYS = {
    "problem": {"C": str},
    "grid": {"dx": float, "nx": int, "t_max": float, "margin_factor": float},
    "sim": {"n_paths": int, "dt_sim": float, "t_cap": float, "seed": int, "checkpoints": "floats",
            "workers": int, "n_batches": int},
    "tol": {"ks": float, "w1": float, "min_tol": float, "max_exceedance": float,
            "max_censored": float, "path_tol": float, "slack": float},
    "optimality": {"payoff": str, "T": float, "alternative": str, "mpe_times": "floats"},
    "output": {"dir": str},
}
REQUIRED_SECTIONS = ("nu", "mu", "sigma")


@dataclass
class RunConfig:
    nu: ProbabilityMeasure
    mu: ProbabilityMeasure
    sigma: DiffusionSpec
    C: float
    c_star: float
    C_policy: str = "c_star"
    dx: float | None = 0.02
    nx: int | None = None
    t_max: float = 2.0
    margin_factor: float = 6.0
    n_paths: int = 20000
    dt_sim: float = 1e-3
    t_cap: float = 4.0
    seed: int = 0
    checkpoints: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    workers: int = 1
    n_batches: int = 16
    ks_tol: float = 0.02
    w1_tol: float | None = None
    min_tol: float = 0.05
    max_exceedance: float = 0.01
    max_censored: float = 0.01
    path_tol: float = 1e-2
    slack: float = 0.02
    payoff: str = "min"
    payoff_T: float = 1.0
    alternative: str = "none"
    mpe_times: tuple = ()
    out_dir: str | None = None
    source_sha256: str = ""
    extras: dict = field(default_factory=dict)

    def tolerances(self) -> dict:
        return {"ks": self.ks_tol, "w1": self.w1_tol, "min_tol": self.min_tol,
                "max_exceedance": self.max_exceedance, "max_censored": self.max_censored,
                "path_tol": self.path_tol, "slack": self.slack}


def _num(tok: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"line {lineno}: {tok!r} is not a number") from None
    if not math.isfinite(v):
        raise ParseError(f"line {lineno}: {tok!r} is not finite")
    return v


def _component(parts, lineno):
    kind = parts[0].lower()
    if kind == "atom" and len(parts) == 3:
        return Atom(_num(parts[1], lineno), _num(parts[2], lineno))
    if kind == "uniform" and len(parts) == 4:
        return Uniform(_num(parts[1], lineno), _num(parts[2], lineno), _num(parts[3], lineno))
    raise ParseError(f"line {lineno}: expected 'atom x w' or 'uniform a b w', got {' '.join(parts)!r}")


def parse_config(text: str) -> RunConfig:
    sections: dict[str, list] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"line {lineno}: malformed section header {raw.strip()!r}")
            current = line[1:-1].strip().lower()
            if current not in KEYS and current not in REQUIRED_SECTIONS:
                raise ParseError(f"line {lineno}: unknown section [{current}]")
            if current in sections:
                raise ParseError(f"line {lineno}: section [{current}] repeated")
            sections[current] = []
            continue
        if current is None:
            raise ParseError(f"line {lineno}: content before the first section")
        sections[current].append((lineno, line))

    for name in REQUIRED_SECTIONS:
        if name not in sections:
            raise MissingField(f"missing [{name}] section")

    measures = {}
    for name in ("nu", "mu"):
        comps = [_component(line.split(), n) for n, line in sections[name]]
        if not comps:
            raise MissingField(f"[{name}] has no components")
        try:
            measures[name] = ProbabilityMeasure(tuple(comps))
        except InvalidMeasure as exc:
            raise ParseError(f"[{name}]: {exc}") from None

    K = 2.0
    const = None
    nodes = []
    for n, line in sections["sigma"]:
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            if k != "K":
                raise ParseError(f"line {n}: unknown [sigma] key {k!r}")
            K = _num(v, n)
            continue
        parts = line.split()
        if parts[0].lower() == "constant" and len(parts) == 2:
            const = _num(parts[1], n)
        elif len(parts) == 2:
            nodes.append((_num(parts[0], n), _num(parts[1], n)))
        else:
            raise ParseError(f"line {n}: expected 'constant v' or 'x sigma', got {line!r}")
    if const is not None and nodes:
        raise ParseError("[sigma] mixes a constant with node lines")
    if const is None and not nodes:
        raise MissingField("[sigma] has no coefficient")
    sigma = DiffusionSpec.constant(const, K) if const is not None else \
        DiffusionSpec.table([x for x, _ in nodes], [s for _, s in nodes], K)

    kv: dict[str, dict] = {}
    for sec, spec in KEYS.items():
        vals = {}
        for n, line in sections.get(sec, []):
            if "=" not in line:
                raise ParseError(f"line {n}: expected 'key = value' in [{sec}]")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in spec:
                raise ParseError(f"line {n}: unknown key {k!r} in [{sec}]")
            typ = spec[k]
            if typ is str:
                vals[k] = v
            elif typ is int:
                f = _num(v, n)
                if f != int(f):
                    raise ParseError(f"line {n}: {k} must be an integer")
                vals[k] = int(f)
            elif typ == "floats":
                vals[k] = tuple(_num(t, n) for t in v.replace(",", " ").split())
            else:
                vals[k] = _num(v, n)
        kv[sec] = vals

    nu, mu = measures["nu"], measures["mu"]
    cs = c_star(nu, mu)
    policy = kv["problem"].get("C", "c_star")
    if policy == "c_star":
        C = cs
    else:
        try:
            C = float(policy)
        except ValueError:
            raise ParseError(f"C must be 'c_star' or a number, got {policy!r}") from None
        if C < cs - 1e-12:
            raise InvalidConstant(f"C={C} is below C*={cs}; the obstacle would exceed the "
                                  "initial potential")
        policy = "value"

    cfg = RunConfig(nu, mu, sigma, C, cs, policy)
    g, s, t, o = kv["grid"], kv["sim"], kv["tol"], kv["optimality"]
    if "nx" in g and "dx" in g:
        raise ParseError("[grid] sets both dx and nx")
    if "nx" in g:
        cfg.nx, cfg.dx = g["nx"], None
    cfg.dx = g.get("dx", cfg.dx)
    cfg.t_max = g.get("t_max", cfg.t_max)
    cfg.margin_factor = g.get("margin_factor", cfg.margin_factor)
    for k in ("n_paths", "dt_sim", "t_cap", "seed", "workers", "n_batches"):
        if k in s:
            setattr(cfg, k, s[k])
    cfg.checkpoints = s.get("checkpoints", tuple(v for v in cfg.checkpoints if v <= cfg.t_cap))
    if cfg.t_cap not in cfg.checkpoints:
        cfg.checkpoints = tuple(sorted(set(cfg.checkpoints) | {cfg.t_cap}))
    cfg.ks_tol = t.get("ks", cfg.ks_tol)
    cfg.w1_tol = t.get("w1", cfg.w1_tol)
    cfg.min_tol = t.get("min_tol", cfg.min_tol)
    cfg.max_exceedance = t.get("max_exceedance", cfg.max_exceedance)
    cfg.max_censored = t.get("max_censored", cfg.max_censored)
    cfg.path_tol = t.get("path_tol", cfg.path_tol)
    cfg.slack = t.get("slack", cfg.slack)
    cfg.payoff = o.get("payoff", cfg.payoff)
    cfg.payoff_T = o.get("T", cfg.payoff_T)
    cfg.alternative = o.get("alternative", cfg.alternative)
    cfg.mpe_times = o.get("mpe_times", tuple(v for v in cfg.checkpoints))
    cfg.out_dir = kv["output"].get("dir")

    if cfg.payoff not in ("min", "linear"):
        raise ParseError(f"payoff must be 'min' or 'linear', got {cfg.payoff!r}")
    if cfg.alternative not in ("none", "run-to-mean"):
        raise ParseError(f"alternative must be 'none' or 'run-to-mean', got {cfg.alternative!r}")
    for name, v in cfg.tolerances().items():
        if v is not None and not v > 0:
            raise ParseError(f"tolerance {name} must be positive")
    for name in ("t_max", "dt_sim", "t_cap"):
        if not getattr(cfg, name) > 0:
            raise ParseError(f"{name} must be positive")
    if cfg.n_paths < 1:
        raise ParseError("n_paths must be at least 1")
    cfg.source_sha256 = hashlib.sha256(text.encode()).hexdigest()
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
