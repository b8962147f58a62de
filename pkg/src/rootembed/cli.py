"""Command line entry point: ``rootembed {solve,simulate,verify,optimality,full}``.

Exit status: 0 when every check passes, 2 when a numerical check fails,
1 on invalid input or usage. The environment variable ``ROOTEMBED_SEED``
overrides the configured seed; ``--seed`` overrides both.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import traceback
import warnings
from pathlib import Path

import numpy as np

from . import backend
from .barrier import Barrier, extract_barrier, read_barrier, write_barrier
from .config import RunConfig, load_config
from .diagnostics import comparison_report, minimality_report, surface_estimate, verify_embedding
from .errors import (AllPathsCensored, HorizonExceeded, RootEmbedError, TooManyCensored,
                     TrivialBarrierWarning)
from .optimality import (build_payoff, correction_functions, m_surface, martingale_check,
                         mpe_compare, pathwise_check, problem_tag, trivial_embedding_sampler,
                         write_optimality_json)
from .simulator import HittingEnsemble, SimConfig, simulate_hitting, write_raw_csv, write_summary_json
from .solver import build_grid, export_snapshots_csv, export_surface_csv, solve_vi

SCHEMA_VERSION = 1
SEED_ENV = "ROOTEMBED_SEED"
SUBCOMMANDS = ("solve", "simulate", "verify", "optimality", "full")
EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rootembed", description="Root-type Skorokhod embeddings")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--out-dir", help="directory for output files (default: from config or .)")
    p.add_argument("--paths", type=int, help="override the number of simulated paths")
    p.add_argument("--seed", type=int, help=f"override the seed (takes precedence over ${SEED_ENV})")
    p.add_argument("--workers", type=int, help="threads for simulation (results do not depend on it)")
    p.add_argument("--barrier", help="read the barrier from this CSV instead of solving")
    p.add_argument("--raw", action="store_true", help="also write per-path raw.csv")
    return p


def _clean(v):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python ones."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else ("nan" if math.isnan(f) else ("inf" if f > 0 else "-inf"))
    return v


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


class Pipeline:
    """Stages share results through attributes; each stage runs at most once."""

    def __init__(self, cfg: RunConfig, out: Path, barrier_path: str | None = None,
                 raw: bool = False):
        self.cfg = cfg
        self.out = out
        self.barrier_path = barrier_path
        self.raw = raw
        self.surface = None
        self.barrier: Barrier | None = None
        self.ensemble: HittingEnsemble | None = None
        self.caveats: list[str] = []
        self.report: dict = {}
        self.passed = True

    # stages
    def solve(self, write: bool = True):
        if self.barrier is not None:
            return
        cfg = self.cfg
        if self.barrier_path:
            self.barrier = read_barrier(self.barrier_path)
            self.caveats.append(f"barrier read from {Path(self.barrier_path).name}")
            return
        grid = build_grid(cfg.nu, cfg.mu, cfg.sigma, cfg.t_max, nx=cfg.nx, dx=cfg.dx,
                          margin_factor=cfg.margin_factor)
        self.surface = solve_vi(cfg.nu, cfg.mu, cfg.C, cfg.sigma, grid)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", TrivialBarrierWarning)
            self.barrier = extract_barrier(self.surface)
        self.caveats += [str(w.message) for w in caught]
        self.report["grid"] = grid.describe()
        if write:
            write_barrier(self.barrier, self.out / "barrier.csv")
            xe = max(1, grid.nx // 400)
            te = max(1, len(self.surface.frame_steps) // 200)
            export_surface_csv(self.surface, self.out / "surface.csv", x_every=xe, t_every=te)
            export_snapshots_csv(self.surface, self.out / "snapshots.csv",
                                 [round(grid.t_max * k / 4, 12) for k in range(5)])

    def _sim_config(self, record_unstopped: bool) -> SimConfig:
        cfg = self.cfg
        return SimConfig(cfg.n_paths, cfg.dt_sim, cfg.t_cap, cfg.seed, tuple(cfg.checkpoints),
                         record_unstopped=record_unstopped, n_batches=cfg.n_batches,
                         workers=cfg.workers)

    def simulate(self, record_unstopped: bool = False):
        if self.ensemble is not None:
            return
        self.solve()
        cfg = self.cfg
        if self.barrier.n < 2 or not self.barrier.has_finite:
            self.caveats.append("barrier never stops; every path is censored")
        self.ensemble = simulate_hitting(cfg.nu, cfg.sigma, self.barrier,
                                         self._sim_config(record_unstopped),
                                         problem=problem_tag(cfg.nu, cfg.mu, "root"),
                                         allow_all_censored=True)
        e = self.ensemble
        if e.censored_fraction > 0.1:
            self.caveats.append("more than 10% of paths are censored; the censoring-robust "
                                "embedding check is weak at this t_cap")
        if e.censored.any():
            self.caveats.append(f"{e.censored_fraction:.4%} of paths reached t_cap={cfg.t_cap} "
                                "unstopped")
        write_summary_json(e, self.out / "summary.json")
        if self.raw:
            write_raw_csv(e, self.out / "raw.csv")

    def verify(self, record_unstopped: bool = False):
        self.simulate(record_unstopped)
        cfg, e = self.cfg, self.ensemble
        try:
            emb = verify_embedding(e, cfg.mu, cfg.ks_tol, cfg.w1_tol, dx=self.barrier.dx,
                                   max_censored=cfg.max_censored)
            self.report["embedding"] = emb.to_dict()
            ok = emb.passed
        except TooManyCensored as exc:
            self.report["embedding"] = {"passed": False, "error": str(exc)}
            ok = False
        mr = minimality_report(e, cfg.nu, cfg.mu, t_final=cfg.t_cap, min_tol=cfg.min_tol,
                               max_exceedance=cfg.max_exceedance)
        expected = "minimal" if cfg.C - cfg.c_star <= cfg.min_tol else "non-minimal"
        self.report["minimality"] = mr.to_dict()
        self.report["minimality"]["expected_verdict"] = expected
        self.report["c_l_estimate"] = mr.c_l_estimate
        self.report["inf_local_time"] = mr.inf_local_time_estimate
        self.report["verdict"] = mr.verdict
        if cfg.C > cfg.c_star:
            self.report["minimality"]["c_l_minus_C"] = mr.c_l_estimate - cfg.C
        self.passed &= ok and mr.verdict == expected

    def optimality(self):
        cfg = self.cfg
        self.simulate(record_unstopped=True)
        if self.surface is None:
            raise HorizonExceeded("optimality checks need a solved surface, not a barrier file")
        grid = self.surface.grid
        if cfg.payoff == "min":
            p = build_payoff("min", T=cfg.payoff_T)
        else:
            p = build_payoff("linear", cutoff=grid.t_max)
        M, pt = m_surface(self.barrier, cfg.sigma, p, grid)
        cf = correction_functions(M, cfg.sigma, pt, self.barrier, grid)
        del M
        pw = pathwise_check(cf, pt, cfg.path_tol)
        e = self.ensemble
        times = [t for t in cfg.checkpoints if t <= grid.t_max + 1e-12]
        mart = martingale_check(e, cf, times) if len(times) >= 2 else None
        ok = pw.passed and (mart is None or (mart.stopped_ok and mart.free_ok is not False))
        mpe = None
        extra = {"payoff": {"kind": pt.kind, "coeffs": list(pt.coeffs), "knots": list(pt.knots)},
                 "split_residual_G": cf.split_residual_G, "split_residual_H": cf.split_residual_H}
        if mart is None:
            extra["martingale_note"] = "fewer than two checkpoints inside the solve window"
        if cfg.alternative == "run-to-mean":
            alt = trivial_embedding_sampler(cfg.nu, cfg.mu, cfg.sigma, self._sim_config(False),
                                            dx=grid.dx, t_max=cfg.t_max)
            ts = [t for t in cfg.mpe_times if t <= cfg.t_cap + 1e-12]
            mpe = mpe_compare(e, alt, ts)
            xs = np.linspace(*_probe_window(cfg), 33)
            cks = [t for t in cfg.checkpoints]
            comp = comparison_report(surface_estimate(e, xs, cks), surface_estimate(alt, xs, cks),
                                     cfg.slack)
            extra["comparison"] = comp.to_dict()
            ok &= mpe.passed and comp.passed
        write_optimality_json(self.out / "optimality.json", pw, mart, mpe, _clean(extra))
        self.report["optimality_passed"] = bool(ok)
        self.passed &= ok

    def write_report(self, command: str):
        cfg = self.cfg
        doc = {"schema_version": SCHEMA_VERSION, "command": command,
               "config_sha256": cfg.source_sha256, "seed": cfg.seed,
               "n_paths": cfg.n_paths, "dt_sim": cfg.dt_sim, "t_cap": cfg.t_cap,
               "tolerances": cfg.tolerances(), "C": cfg.C, "c_star": cfg.c_star,
               "C_policy": cfg.C_policy, "backend": backend.active_name(),
               "caveats": self.caveats, "passed": bool(self.passed)}
        doc.update(self.report)
        _write_json(self.out / "report.json", doc)


def _probe_window(cfg: RunConfig):
    pts = np.concatenate([cfg.nu.breakpoints, cfg.mu.breakpoints])
    return float(pts.min()) - 2.0, float(pts.max()) + 2.0


def _provenance(exc: BaseException) -> str:
    mod = "rootembed"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("rootembed."):
            mod = name
    return mod


def run(command: str, cfg: RunConfig, out: Path, barrier_path: str | None = None,
        raw: bool = False) -> int:
    out.mkdir(parents=True, exist_ok=True)
    pipe = Pipeline(cfg, out, barrier_path, raw)
    try:
        if command == "solve":
            pipe.solve()
        elif command == "simulate":
            pipe.simulate()
        elif command == "verify":
            pipe.verify()
        elif command == "optimality":
            pipe.optimality()
        elif command == "full":
            pipe.solve()
            pipe.simulate(record_unstopped=True)
            pipe.verify()
            pipe.optimality()
        else:
            raise ValueError(f"unknown command {command!r}")
    except (AllPathsCensored, TooManyCensored) as exc:
        pipe.caveats.append(f"{_provenance(exc)}: {type(exc).__name__}: {exc}")
        pipe.passed = False
    pipe.write_report(command)
    return EXIT_OK if pipe.passed else EXIT_CHECK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        env_seed = os.environ.get(SEED_ENV)
        if env_seed is not None:
            try:
                cfg.seed = int(env_seed)
            except ValueError:
                raise ValueError(f"${SEED_ENV} must be an integer, got {env_seed!r}") from None
        if args.seed is not None:
            cfg.seed = args.seed
        if args.paths is not None:
            if args.paths < 1:
                raise ValueError("--paths must be at least 1")
            cfg.n_paths = args.paths
        if args.workers is not None:
            cfg.workers = max(1, args.workers)
        out = Path(args.out_dir or cfg.out_dir or ".")
        return run(args.command, cfg, out, args.barrier, args.raw)
    except (RootEmbedError, ValueError, OSError, KeyError) as exc:
        print(f"rootembed: {_provenance(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
