"""Command-line front end: eigen | sample | oracle-check | scaling-study | validate.

Configuration comes from an optional JSON file plus flag overrides (flags
win); unknown config fields are rejected.  A run is reproducible from its
config and seed alone: all data artifacts are written atomically, embed the
config hash, and are byte-identical across reruns.  Wall-clock timestamps
live only in the run_meta.json sidecar.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, analysis, increments, oracle, sampler, transfer
from .util import (
    ConfigError,
    NonConvergenceError,
    ResourceCapError,
    SoslabError,
    atomic_write_text,
    config_hash,
    fmt_float,
    json_dumps,
)

COMMANDS = ("eigen", "sample", "oracle-check", "scaling-study", "validate")
FORMATS = ("csv", "json", "svg")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_RESOURCE = 4


@dataclasses.dataclass
class RunConfig:
    command: str = "validate"
    dist: dict = dataclasses.field(default_factory=lambda: {"kind": "double_geometric", "kappa": 1.0})
    N: int | None = None
    N_list: list | None = None
    s_max: int | str = "auto"
    tol: float = transfer.DEFAULT_TOL
    max_iter: int | None = None
    paths: int | None = None
    seed: int = 101
    t_grid: list = dataclasses.field(default_factory=lambda: list(analysis.DEFAULT_T_GRID))
    threads: int = 1
    out_dir: str = "soslab-out"
    formats: list = dataclasses.field(default_factory=lambda: ["csv", "json", "svg"])

    def resolved_s_max(self) -> int | None:
        return None if self.s_max == "auto" else int(self.s_max)

    def hash(self) -> str:
        payload = {
            "command": self.command, "dist": self.dist, "N": self.N, "N_list": self.N_list,
            "s_max": self.s_max, "tol": self.tol, "max_iter": self.max_iter,
            "paths": self.paths, "seed": self.seed, "t_grid": self.t_grid,
        }
        return config_hash(payload)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Strictly-parsed config: file values first, then flag overrides."""
    known = {f.name for f in dataclasses.fields(RunConfig)}
    merged = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        merged.update(raw)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(**{k: v for k, v in merged.items() if k in known})
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {cfg.command!r}")
    bad = [f for f in cfg.formats if f not in FORMATS]
    if bad:
        raise ConfigError(f"unknown output formats: {bad}")
    if cfg.s_max != "auto":
        try:
            int(cfg.s_max)
        except (TypeError, ValueError):
            raise ConfigError(f"s_max must be an integer or 'auto', got {cfg.s_max!r}")
    if cfg.tol <= 0:
        raise ConfigError("tol must be positive")
    try:
        increments.from_spec(cfg.dist)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid dist spec {cfg.dist}: {exc}") from exc
    if any(t < 0 or t > 1 for t in cfg.t_grid):
        raise ConfigError("t_grid values must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Artifact helpers
# ---------------------------------------------------------------------------


def _write_csv(cfg: RunConfig, name: str, body: str) -> str:
    path = os.path.join(cfg.out_dir, name)
    atomic_write_text(path, f"# config_hash={cfg.hash()}\n{body}")
    return path

def _write_json(cfg: RunConfig, name: str, payload: dict) -> str:
    payload = {"config_hash": cfg.hash(), **payload}
    path = os.path.join(cfg.out_dir, name)
    atomic_write_text(path, json_dumps(payload))
    return path


def _write_run_meta(cfg: RunConfig) -> str:
    # The one artifact carrying wall-clock time; excluded from the
    # byte-determinism contract.
    meta = {
        "config_hash": cfg.hash(),
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "versions": {"soslab": __version__, "numpy": np.__version__},
    }
    path = os.path.join(cfg.out_dir, "run_meta.json")
    atomic_write_text(path, json_dumps(meta))
    return path


def _emit(line: str) -> None:
    print(line)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_eigen(cfg: RunConfig) -> int:
    n = cfg.N or 10_000
    dist = increments.from_spec(cfg.dist)
    kernel, pair = transfer.solve_eigenpair(
        n, dist, s_max=cfg.resolved_s_max(), tol=cfg.tol, max_iter=cfg.max_iter
    )
    csv_body, header = transfer.export_eigenpair(kernel, pair)
    written = []
    if "csv" in cfg.formats:
        written.append(_write_csv(cfg, "eigenpair.csv", csv_body))
    if "json" in cfg.formats:
        written.append(_write_json(cfg, "eigenpair.json", header))
    _emit(
        f"eigen N={n} S_max={kernel.s_max} lambda={pair.lam!r} "
        f"log_lambda={pair.log_lam!r} residual={pair.residual:.3e} iters={pair.iterations}"
    )
    for p in written:
        _emit(f"wrote {p}")
    return EXIT_OK


def cmd_sample(cfg: RunConfig) -> int:
    n = cfg.N or 10_000
    n_paths = cfg.paths or 4
    dist = increments.from_spec(cfg.dist)
    kernel, pair = transfer.solve_eigenpair(
        n, dist, s_max=cfg.resolved_s_max(), tol=cfg.tol, max_iter=cfg.max_iter
    )
    if n_paths * (n + 1) > 50_000_000:
        raise ResourceCapError(f"paths*(N+1) = {n_paths * (n + 1)} exceeds dump cap 5e7")
    table = sampler.TransitionTable(kernel, pair)
    t_grid = np.asarray(cfg.t_grid, dtype=float)
    path_lines = ["path,x,s"]
    traj_lines = ["path,t,S"]
    for i in range(n_paths):
        path = sampler.sample_stationary_path(table, cfg.seed, stream_id=i)
        for x, s in enumerate(path.heights):
            path_lines.append(f"{i},{x},{int(s)}")
        traj = sampler.rescale_path(path, t_grid)
        for t, v in zip(traj.t_grid, traj.values):
            traj_lines.append(f"{i},{fmt_float(t)},{fmt_float(v)}")
        _emit(f"sample path={i} stream={i} s0={int(path.heights[0])} sN={int(path.heights[-1])}")
    sidecar = {
        "N": n, "S_max": kernel.s_max, "seed": cfg.seed, "dist": dist.spec(),
        "lambda": pair.lam, "n_paths": n_paths, "block": sampler.block_length(n),
        "pre_normalization_defect": table.max_defect,
    }
    if "csv" in cfg.formats:
        _emit("wrote " + _write_csv(cfg, "paths.csv", "\n".join(path_lines) + "\n"))
        _emit("wrote " + _write_csv(cfg, "trajectory.csv", "\n".join(traj_lines) + "\n"))
    if "json" in cfg.formats:
        _emit("wrote " + _write_json(cfg, "sample.json", sidecar))
    return EXIT_OK


def cmd_oracle_check(cfg: RunConfig) -> int:
    dist = increments.from_spec(cfg.dist)
    n = cfg.N or 4
    s_max = cfg.resolved_s_max() or 4
    inst = oracle.TinyInstance(N=n, s_max=s_max, dist=dist)
    kernel, pair = transfer.solve_eigenpair(inst.N, dist, s_max=inst.s_max, tol=cfg.tol)
    enum = oracle.enumerate_gibbs(inst, kernel, pair)
    lam_pow = math.exp(inst.N * pair.log_lam)
    z_gap = abs(enum.z - lam_pow) / lam_pow
    _emit(f"oracle-check N={inst.N} S_max={inst.s_max} Z={enum.z!r} lambda^N={lam_pow!r} rel_gap={z_gap:.3e}")

    n_samples = cfg.paths or 1_000_000
    table = sampler.TransitionTable(kernel, pair)
    heights = sampler.sample_segments(table, n_samples, inst.N, cfg.seed)
    counts = np.bincount(oracle.encode_paths(heights, inst.s_max), minlength=inst.path_count)
    tv = oracle.tv_distance(enum.probs, counts, n_samples)
    floor = oracle.expected_tv_floor(enum.probs, n_samples)
    _emit(f"oracle-check tv={tv:.6f} expected_floor={floor:.6f} ratio={tv / floor:.3f}")

    small = transfer.build_kernel(50, dist, s_max=6)
    mine = transfer.principal_eigenpair(small)
    ref = oracle.dense_eigen_oracle(small)
    eig_gap = abs(mine.lam - ref.lam)
    _emit(f"oracle-check dense-eigen |dLambda|={eig_gap:.3e}")

    ou = oracle.validate_ou_reference(dist.sigma, seed=cfg.seed)
    _emit(f"oracle-check ou-validation passed={ou['passed']} ess={ou['effective_sample_size']:.0f}")

    payload = {
        "N": inst.N, "S_max": inst.s_max, "dist": dist.spec(), "seed": cfg.seed,
        "Z": enum.z, "log_Z": enum.log_z, "lambda_pow_N": lam_pow, "z_rel_gap": z_gap,
        "tv_distance": tv, "tv_floor": floor, "n_samples": n_samples,
        "marginals": {str(int(s)): float(p) for s, p in zip(kernel.states, enum.marginals[inst.N // 2])},
        "dense_eigen_gap": eig_gap,
        "ou_validation": ou,
    }
    if "json" in cfg.formats:
        _emit("wrote " + _write_json(cfg, "oracle_report.json", payload))
    ok = z_gap < 1e-8 and tv < 3.0 * floor and eig_gap < 1e-10 and ou["passed"]
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_scaling_study(cfg: RunConfig) -> int:
    dist = increments.from_spec(cfg.dist)
    n_list = cfg.N_list or list(analysis.DEFAULT_SWEEP)
    n_paths = cfg.paths or 10_000
    report = analysis.run_scaling_study(
        dist, n_list=n_list, n_paths=n_paths, seed=cfg.seed, t_grid=cfg.t_grid,
        tol=cfg.tol, progress=_emit,
    )
    _emit(
        f"scaling-study richardson(lambda^sqrtN)={report.richardson['extrapolated']!r} "
        f"limit={report.targets['lambda_power_limit']!r}"
    )
    if "csv" in cfg.formats:
        _emit("wrote " + _write_csv(cfg, "eigen_records.csv", analysis.eigen_csv(report)))
        _emit("wrote " + _write_csv(cfg, "path_stats.csv", analysis.path_stats_csv(report)))
    if "json" in cfg.formats:
        _emit("wrote " + _write_json(cfg, "report.json", analysis.report_payload(report)))
    if "svg" in cfg.formats:
        try:
            from . import figures

            for p in figures.render_report_figures(report, cfg.out_dir):
                _emit(f"wrote {p}")
        except Exception as exc:  # plot emission never gates exit status
            print(f"warning: figure rendering failed: {exc}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    """Fast end-to-end invariant suite across all modules."""
    dist = increments.from_spec(cfg.dist)
    failures = []

    def check(name, fn):
        try:
            fn()
            _emit(f"ok   {name}")
        except Exception as exc:
            failures.append(name)
            _emit(f"FAIL {name}: {exc}")

    def _increments():
        assert abs(sum(dist.probs) - 1.0) < 1e-12
        assert dist.pmf(3) == dist.pmf(-3)
        assert abs(dist.log_mgf(0.0)) < 1e-12
        off, probs = dist.n_step_table(20)
        assert abs(probs.sum() - 1.0) < 1e-10
        var20 = float(np.sum(probs * off.astype(float) ** 2))
        assert abs(var20 - 20 * dist.variance) < 1e-8 * 20 * dist.variance

    def _kernel():
        k = transfer.build_kernel(16, dist, s_max=8)
        assert k.entry(2, -1) == k.entry(-1, 2) == k.entry(-2, 1)
        dense = k.dense()
        v = np.linspace(1, 2, k.d)
        assert np.allclose(k.matvec(v), dense @ v, rtol=0, atol=1e-14)

    def _eigen_oracle():
        k = transfer.build_kernel(60, dist, s_max=7)
        mine = transfer.principal_eigenpair(k)
        ref = oracle.dense_eigen_oracle(k)
        assert abs(mine.lam - ref.lam) < 1e-10
        assert np.linalg.norm(mine.h - ref.h) < 1e-8

    def _chain():
        kernel, pair = transfer.solve_eigenpair(100, dist)
        table = sampler.TransitionTable(kernel, pair)
        assert table.max_defect < 1e-8
        h2 = pair.h**2
        i = kernel.s_max
        row_i = table.transition_row(0)
        row_j = table.transition_row(1)
        lhs = h2[i] * row_i[i + 1]
        rhs = h2[i + 1] * row_j[i]
        assert abs(lhs - rhs) <= 1e-12 * max(lhs, rhs)

    def _gibbs():
        inst = oracle.TinyInstance(N=3, s_max=3, dist=dist)
        kernel, pair = transfer.solve_eigenpair(inst.N, dist, s_max=inst.s_max)
        enum = oracle.enumerate_gibbs(inst, kernel, pair)
        lam_pow = math.exp(inst.N * pair.log_lam)
        assert abs(enum.z - lam_pow) / lam_pow < 1e-10
        mid = enum.marginals[1]
        assert np.abs(mid - pair.h**2).max() < 1e-8
        table = sampler.TransitionTable(kernel, pair)
        path = sampler.sample_stationary_path(table, cfg.seed, stream_id=0, n_steps=inst.N)
        a, b = sampler.path_log_weight(table, path.heights)
        assert abs(a - b) <= 1e-8 * inst.N

    def _rescale():
        heights = np.arange(0, 26)
        traj = sampler.rescale_heights(heights, 625, np.array([0.0, 0.5, 1.0]))
        assert traj.values[0] == 0.0
        assert abs(traj.values[-1] - 25 / 625**0.25) < 1e-14

    def _ou():
        rep = oracle.validate_ou_reference(dist.sigma, seed=cfg.seed, n_paths=120_000, n_steps=250, rel_tol=0.06)
        assert rep["passed"], rep

    check("increments.invariants", _increments)
    check("transfer.kernel-symmetry", _kernel)
    check("transfer.cross-eigen-oracle", _eigen_oracle)
    check("sampler.detailed-balance", _chain)
    check("oracle.gibbs-markov-identity", _gibbs)
    check("sampler.rescale-blocks", _rescale)
    check("oracle.ou-reference-validation", _ou)
    _emit(f"validate: {7 - len(failures)}/7 checks passed")
    return EXIT_OK if not failures else EXIT_FAILURE


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="soslab", description=__doc__)
    p.add_argument("positional_command", nargs="?", choices=COMMANDS, metavar="command")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--command", choices=COMMANDS, dest="command")
    p.add_argument("--N", type=int, dest="N")
    p.add_argument("--N-list", dest="N_list", help="comma-separated system sizes")
    p.add_argument("--dist", help="increment law kind (double_geometric | lazy_simple_walk)")
    p.add_argument("--kappa", type=float, help="double-geometric rate")
    p.add_argument("--S-max", dest="s_max", help="window half-width or 'auto'")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--formats", help="comma-separated subset of csv,json,svg")
    return p


def _overrides_from_args(args) -> dict:
    over = {
        "command": args.command or args.positional_command,
        "N": args.N,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "paths": args.paths,
        "seed": args.seed,
        "threads": args.threads,
        "out_dir": args.out_dir,
    }
    if args.N_list is not None:
        over["N_list"] = [int(x) for x in args.N_list.split(",") if x]
    if args.s_max is not None:
        over["s_max"] = args.s_max if args.s_max == "auto" else int(args.s_max)
    if args.formats is not None:
        over["formats"] = [x for x in args.formats.split(",") if x]
    if args.dist is not None or args.kappa is not None:
        spec = {"kind": args.dist or "double_geometric"}
        if args.kappa is not None:
            if spec["kind"] != "double_geometric":
                raise ConfigError("--kappa applies only to double_geometric")
            spec["kappa"] = args.kappa
        over["dist"] = spec
    return over


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config, _overrides_from_args(args))
    except ConfigError as exc:
        print(json.dumps({"error": {"type": "config", "message": str(exc), "exit_code": EXIT_CONFIG}}))
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse error
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    env_out = os.environ.get("SOS_LAB_OUT")
    if env_out:
        cfg.out_dir = env_out
    handlers = {
        "eigen": cmd_eigen,
        "sample": cmd_sample,
        "oracle-check": cmd_oracle_check,
        "scaling-study": cmd_scaling_study,
        "validate": cmd_validate,
    }
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        _write_run_meta(cfg)
        return handlers[cfg.command](cfg)
    except NonConvergenceError as exc:
        print(json.dumps({"error": {"type": "non_convergence", "message": str(exc), "exit_code": EXIT_NONCONVERGENCE}}))
        return EXIT_NONCONVERGENCE
    except ResourceCapError as exc:
        print(json.dumps({"error": {"type": "resource_cap", "message": str(exc), "exit_code": EXIT_RESOURCE}}))
        return EXIT_RESOURCE
    except SoslabError as exc:
        print(json.dumps({"error": {"type": "error", "message": str(exc), "exit_code": EXIT_FAILURE}}))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
