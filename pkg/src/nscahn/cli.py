"""Command-line drivers: hypothesis check, runs, eps sweeps, stationary solves, oracle.

Exit codes: 0 success, 1 domain failure (hypotheses, convergence, oracle
mismatch), 2 usage or parse error, 3 solver hard failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import initial as initial_mod
from .dynamics import HardFailure, SchemeParams, simulate, sweep_epsilon
from .linsolve import DENSE_MAX
from .mesh import FieldState, build_grid
from .oracle import DEFAULT_SIZES, ORACLE_TOL, oracle_suite
from .potentials import DomainError, PotentialConfig, check_hypotheses, separation_bounds
from .stationary import omega_limit_study, solve_stationary

log = logging.getLogger("nscahn")

FORMAT_VERSION = "nscahn-1"
CSV_COLUMNS = [
    "t", "dt", "E_total", "E_bulk_grad", "E_bulk_pot", "E_surf_grad", "E_surf_pot",
    "coupling", "lyapunov", "first_estimate_q", "grad_mu", "rho_rate",
    "min_rho", "max_rho", "min_mu", "newton_iters", "flags",
]
DEFAULT_EPS = "0.2,0.1,0.05,0.025,0"

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_HARD, EXIT_IO = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dim: str = "slab2d"
    n_x: int = 32
    n_y: int | None = 17
    potentials: PotentialConfig = field(default_factory=PotentialConfig)
    scheme: SchemeParams = field(default_factory=SchemeParams)
    initial: dict = field(default_factory=lambda: {"kind": "constant", "rho0": 0.0, "mu0": 0.0})
    t_end: float = 1.0
    output_dir: str = "out"
    record_every: int = 100

    def __post_init__(self):
        kind = self.initial.get("kind")
        if kind not in initial_mod.KINDS:
            raise ConfigError(f"initial.kind must be one of {initial_mod.KINDS}")
        if float(self.initial.get("mu0", 0.0)) < 0:
            raise ConfigError("initial mu0 must be nonnegative")
        if self.t_end < 0:
            raise ConfigError("t_end must be nonnegative")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")

    def to_dict(self) -> dict:
        return {
            "geometry": {"dim": self.dim, "n_x": self.n_x, "n_y": self.n_y},
            "potentials": self.potentials.to_dict(),
            "scheme": self.scheme.to_dict(),
            "initial": dict(self.initial),
            "t_end": self.t_end,
            "output_dir": self.output_dir,
            "record_every": self.record_every,
        }

    @classmethod
    def from_dict(cls, data: dict, relaxed: bool = False) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {"geometry", "potentials", "scheme", "initial", "t_end", "output_dir", "record_every"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            geo = data.get("geometry", {})
            pot = dict(data.get("potentials", {}))
            if relaxed:
                pot["relaxed"] = True
            return cls(
                dim=geo.get("dim", "slab2d"),
                n_x=int(geo.get("n_x", 32)),
                n_y=None if geo.get("n_y") is None else int(geo["n_y"]),
                potentials=PotentialConfig.from_dict(pot),
                scheme=SchemeParams.from_dict(data.get("scheme", {})),
                initial=dict(data.get("initial", {"kind": "constant", "rho0": 0.0, "mu0": 0.0})),
                t_end=float(data.get("t_end", 1.0)),
                output_dir=str(data.get("output_dir", "out")),
                record_every=int(data.get("record_every", 100)),
            )
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def grid(self):
        try:
            return build_grid(self.dim, self.n_x, self.n_y)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path, relaxed: bool = False) -> RunConfig:
    """Read a RunConfig from JSON; raises ConfigError on any parse or validation problem."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    return RunConfig.from_dict(data, relaxed=relaxed)


def output_dir(cfg: RunConfig) -> Path:
    out = Path(os.environ.get("NSCAHN_OUT_DIR") or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(x) -> str:
    return f"{x:.16e}"


def record_row(rec) -> list:
    return [
        _fmt(rec.t), _fmt(rec.dt_used), _fmt(rec.E_total), _fmt(rec.E_bulk_grad), _fmt(rec.E_bulk_pot),
        _fmt(rec.E_surf_grad), _fmt(rec.E_surf_pot), _fmt(rec.coupling_term), _fmt(rec.lyapunov),
        _fmt(rec.first_estimate_quantity), _fmt(rec.grad_mu_norm), _fmt(rec.rho_increment_rate),
        _fmt(rec.min_rho), _fmt(rec.max_rho), _fmt(rec.min_mu), str(rec.newton_iters),
        "|".join(sorted(rec.flags)) or "none",
    ]


def write_json(path: Path, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_snapshot(path: Path, state: FieldState, grid, cfg: RunConfig, step: int | None = None):
    """Nodal CSV (node, x, y, mu, rho) plus a JSON metadata sidecar."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "x", "y", "mu", "rho"])
        for i in range(grid.n_nodes):
            w.writerow([i, _fmt(grid.x[i]), _fmt(grid.y[i]), _fmt(state.mu[i]), _fmt(state.rho[i])])
    meta = {
        "format": FORMAT_VERSION,
        "config_sha256": cfg.config_hash(),
        "grid": grid.spec(),
        "t": state.t,
        "step": step,
        "initial_rng": "LCG state <- 6364136223846793005*state + 1442695040888963407 mod 2^64; "
                       "uniform = 2*(state >> 11)/2^53 - 1",
    }
    write_json(path.with_suffix(".json"), meta)


def read_snapshot(path, grid) -> FieldState:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    if data.size != grid.n_nodes:
        raise ConfigError(f"snapshot has {data.size} nodes, grid has {grid.n_nodes}")
    meta_path = Path(path).with_suffix(".json")
    t = 0.0
    if meta_path.exists():
        with open(meta_path) as fh:
            t = float(json.load(fh).get("t", 0.0))
    return FieldState(t, np.asarray(data["mu"], dtype=float), np.asarray(data["rho"], dtype=float))


class _RunWriter:
    """Streams diagnostics rows and periodic snapshots while a run is in progress."""

    def __init__(self, cfg: RunConfig, grid, out: Path, prefix: str = ""):
        self.cfg, self.grid, self.out, self.prefix = cfg, grid, out, prefix
        self.fh = open(out / f"{prefix}diagnostics.csv", "w", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(CSV_COLUMNS)
        self.last = None
        self.rows = 0

    def sink(self, rec):
        self.writer.writerow(record_row(rec))
        self.rows += 1

    def observer(self, k, state):
        self.last = (k, state)
        if k % self.cfg.record_every == 0:
            self.snapshot(k, state)

    def snapshot(self, k, state):
        write_snapshot(self.out / f"{self.prefix}snapshot_{k:07d}.csv", state, self.grid, self.cfg, k)

    def finish(self):
        if self.last is not None and self.last[0] % self.cfg.record_every != 0:
            self.snapshot(*self.last)
        self.fh.close()


def _initial(cfg: RunConfig, grid):
    try:
        return initial_mod.make_initial(cfg.initial, grid)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"initial data: {exc}") from exc


def cmd_check(args) -> int:
    cfg = load_config(args.config, relaxed=True)
    report = check_hypotheses(cfg.potentials)
    hyp = report.to_dict()
    # the full probe table is long; print the worst domination margin instead
    samples = hyp.pop("samples")
    hyp["worst_sample"] = min(samples, key=lambda d: d["margin"]) if samples else None
    payload = {"hypotheses": hyp}
    try:
        grid = cfg.grid()
        state = _initial(cfg, grid)
        bounds = separation_bounds(cfg.potentials, float(state.rho.min()), float(state.rho.max()))
        payload["separation_bounds"] = bounds.to_dict()
    except ValueError as exc:
        payload["separation_bounds"] = None
        payload["separation_error"] = str(exc)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK if report.all_ok else EXIT_DOMAIN


def _run_with_writer(cfg, grid, out, initial, prefix=""):
    writer = _RunWriter(cfg, grid, out, prefix)
    try:
        final = simulate(initial, cfg.t_end, cfg.scheme, cfg.potentials, grid,
                         sink=writer.sink, observer=writer.observer)
    finally:
        writer.finish()
    return final, writer


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    grid = cfg.grid()
    out = output_dir(cfg)
    initial = _initial(cfg, grid)
    try:
        _, writer = _run_with_writer(cfg, grid, out, initial)
    except HardFailure as exc:
        write_json(out / "failure.json", {"error": str(exc), "dump": exc.dump})
        log.error("hard failure: %s", exc)
        return EXIT_HARD
    print(json.dumps({"rows": writer.rows, "output_dir": str(out)}))
    return EXIT_OK


def parse_eps(text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --eps list: {text!r}") from exc
    if not vals:
        raise ConfigError("empty --eps list")
    return vals


def cmd_sweep_eps(args) -> int:
    cfg = load_config(args.config)
    eps = parse_eps(args.eps)
    grid = cfg.grid()
    out = output_dir(cfg)
    try:
        report = sweep_epsilon(_initial(cfg, grid), cfg.t_end, eps, cfg.scheme, cfg.potentials, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    except HardFailure as exc:
        write_json(out / "failure.json", {"error": str(exc), "dump": exc.dump})
        return EXIT_HARD
    payload = {"format": FORMAT_VERSION, "config_sha256": cfg.config_hash(), "t_end": cfg.t_end,
               **report.to_dict()}
    write_json(out / "sweep_eps.json", payload)
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def cmd_stationary(args) -> int:
    cfg = load_config(args.config)
    grid = cfg.grid()
    out = output_dir(cfg)
    if args.mu_s is None:
        # omega-limit mode: run the dynamics, then solve seeded from the endpoint
        writer = _RunWriter(cfg, grid, out, prefix="omega_")
        try:
            report = omega_limit_study(_initial(cfg, grid), cfg.t_end, cfg.scheme, cfg.potentials, grid,
                                       sink=writer.sink, observer=writer.observer)
        except HardFailure as exc:
            write_json(out / "failure.json", {"error": str(exc), "dump": exc.dump})
            return EXIT_HARD
        finally:
            writer.finish()
        result = report.stationary
        write_json(out / "omega_limit.json", {"format": FORMAT_VERSION, "config_sha256": cfg.config_hash(),
                                              **report.to_dict(), "stationary": result.to_dict()})
        summary = report.to_dict()
    else:
        guess = read_snapshot(args.seed_from, grid).rho if args.seed_from else _initial(cfg, grid).rho
        result = solve_stationary(float(args.mu_s), guess, cfg.potentials, grid)
        summary = result.to_dict()
    write_json(out / "stationary.json", {"format": FORMAT_VERSION, "config_sha256": cfg.config_hash(),
                                         **result.to_dict()})
    state = FieldState(0.0, np.full(grid.n_nodes, result.mu_s), result.rho_s)
    write_snapshot(out / "stationary_rho.csv", state, grid, cfg)
    print(json.dumps(summary))
    return EXIT_OK if result.converged else EXIT_DOMAIN


def cmd_oracle(args) -> int:
    if args.size is None:
        sizes = DEFAULT_SIZES
    else:
        if not 4 <= args.size <= DENSE_MAX:
            print(f"--size must lie in [4, {DENSE_MAX}]", file=sys.stderr)
            return EXIT_USAGE
        sizes = (args.size,)
    res = oracle_suite(sizes)
    print(json.dumps(res))
    return EXIT_OK if res["max_deviation"] <= ORACLE_TOL else EXIT_DOMAIN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nscahn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="check potential hypotheses and print separation bounds")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("run", help="integrate and write diagnostics CSV and snapshots")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-eps", help="vanishing-viscosity sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", default=DEFAULT_EPS, help=f"descending list ending in 0 (default {DEFAULT_EPS})")
    p.set_defaults(func=cmd_sweep_eps)

    p = sub.add_parser("stationary", help="stationary solve; omega-limit study when --mu-s is omitted")
    p.add_argument("--config", required=True)
    p.add_argument("--mu-s", type=float, default=None)
    p.add_argument("--seed-from", default=None, help="snapshot CSV whose rho seeds Newton")
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("oracle", help="compare one step against the dense brute-force oracle")
    p.add_argument("--size", type=int, default=None)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ValueError) as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
