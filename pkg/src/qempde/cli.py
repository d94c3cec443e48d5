"""Command-line front end.

Subcommands write their results under ``--out`` and return exit code 0 on
success, 1 on a configuration error and 2 when the run completed but some
cell was flagged.  A JSON config file may supply any flag; explicit flags
win over the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench
from .errors import ConfigurationError, QempdeError, TrainingAborted
from .mitigation import ZneConfig
from .noise import CHANNELS, NoiseConfig
from .pde import KINDS, collocation_array
from .qstate import set_validation
from .training import TrainConfig, train

log = logging.getLogger("qempde")

CONFIG_KEYS = {"out", "seed", "workers", "pde", "noise", "p", "epochs", "variant", "mitigation", "validate",
               "seeds", "lr"}
DEFAULTS = {"out": "results", "seed": None, "workers": 1, "pde": None, "noise": None, "p": None, "epochs": None,
            "variant": "unconstrained", "mitigation": "none", "validate": False, "seeds": None, "lr": None}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    command: str
    out: Path
    seed: int
    workers: int = 1
    pde: tuple[str, ...] = KINDS
    noise: tuple[str, ...] = CHANNELS
    p: tuple[float, ...] | None = None
    epochs: int | None = None
    variant: str = "unconstrained"
    mitigation: str = "none"
    validate: bool = False
    seeds: tuple[int, ...] | None = None
    lr: float | None = None

    def bench_config(self) -> bench.BenchConfig:
        cfg = bench.BenchConfig(workers=self.workers)
        if self.epochs is not None:
            cfg = dataclasses.replace(cfg, epochs=self.epochs)
        if self.lr is not None:
            cfg = dataclasses.replace(cfg, lr=self.lr)
        return cfg

    def seed_list(self) -> tuple[int, ...]:
        return self.seeds if self.seeds is not None else (self.seed, self.seed + 1, self.seed + 2)

    def digest(self) -> str:
        return bench.config_hash({k: v for k, v in dataclasses.asdict(self).items() if k not in ("out", "workers")})


def _split(value, cast):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    return tuple(cast(v) for v in str(value).split(",") if v.strip())


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with flag values")
    common.add_argument("--out", help="output directory (default: results)")
    common.add_argument("--seed", type=int, help="base seed (falls back to QEMPDE_SEED, then 0)")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--pde", help=f"comma-separated subset of {','.join(KINDS)}")
    common.add_argument("--noise", help=f"comma-separated subset of {','.join(CHANNELS)}")
    common.add_argument("--p", help="comma-separated noise strengths")
    common.add_argument("--epochs", type=int, help="training epochs")
    common.add_argument("--variant", choices=("unconstrained", "constrained"))
    common.add_argument("--mitigation", choices=("none", "zne"))
    common.add_argument("--validate", action="store_true", default=None, help="check density matrices are PSD")
    parser = argparse.ArgumentParser(prog="qempde", description="Noise and error mitigation study for variational PDE solvers.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="fidelity sweep and ZNE benchmark (tables 1 and 2)")
    sub.add_parser("pec-overhead", parents=[common], help="PEC sampling overhead table (table 3)")
    sub.add_parser("train", parents=[common], help="training trace for one problem")
    sub.add_parser("budget", parents=[common], help="error budget decomposition (table 5)")
    sub.add_parser("compare", parents=[common], help="constrained vs unconstrained fidelity (table 4)")
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file and flags; validate everything."""
    values = dict(DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a JSON object")
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if values["seed"] is None:
        env = os.environ.get("QEMPDE_SEED")
        try:
            values["seed"] = int(env) if env is not None else 0
        except ValueError:
            raise ConfigurationError(f"QEMPDE_SEED={env!r} is not an integer") from None
    try:
        pdes = _split(values["pde"], str) or KINDS
        noise = _split(values["noise"], str) or CHANNELS
        ps = _split(values["p"], float)
        seeds = _split(values["seeds"], int)
        cfg = RunConfig(args.command, Path(values["out"]), int(values["seed"]), int(values["workers"]), pdes, noise,
                        ps, None if values["epochs"] is None else int(values["epochs"]), str(values["variant"]),
                        str(values["mitigation"]), bool(values["validate"]), seeds,
                        None if values["lr"] is None else float(values["lr"]))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad config value: {exc}") from None
    if any(k not in KINDS for k in cfg.pde):
        raise ConfigurationError(f"unknown PDE in {cfg.pde}")
    if any(c not in CHANNELS for c in cfg.noise):
        raise ConfigurationError(f"unknown noise channel in {cfg.noise}")
    if cfg.p is not None and any(not 0 <= p <= 1 for p in cfg.p):
        raise ConfigurationError("noise strengths must lie in [0, 1]")
    if cfg.epochs is not None and cfg.epochs < 1:
        raise ConfigurationError("epochs must be >= 1")
    if cfg.workers < 1:
        raise ConfigurationError("workers must be >= 1")
    if cfg.variant not in ("unconstrained", "constrained"):
        raise ConfigurationError(f"unknown variant {cfg.variant!r}")
    if cfg.mitigation not in ("none", "zne"):
        raise ConfigurationError(f"unknown mitigation {cfg.mitigation!r}")
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"output directory not writable: {exc}") from None
    if not os.access(cfg.out, os.W_OK):
        raise ConfigurationError(f"output directory {cfg.out} is not writable")
    return cfg


def _positive_ps(cfg: RunConfig, default) -> tuple[float, ...]:
    ps = cfg.p or default
    if any(p <= 0 or p > 0.5 for p in ps):
        raise ConfigurationError("this command needs noise strengths in (0, 0.5]")
    return ps


def cmd_sweep(cfg: RunConfig) -> int:
    grid = bench.SweepGrid(cfg.noise, _positive_ps(cfg, bench.DEFAULT_PS), cfg.pde, cfg.seed_list(), cfg.variant)
    bcfg = cfg.bench_config()
    digest = cfg.digest()
    records = bench.fidelity_sweep(grid, bcfg)
    bench.write_records_csv(records, cfg.out / "table1.csv", digest, cfg.seed)
    flagged = any(r.flags or r.fidelity is None for r in records)
    for key, fit in _fits(records, bcfg).items():
        recs = [r for r in records if (r.pde, r.noise) == key and r.fidelity is not None]
        bench.write_series([r.p for r in recs], [r.fidelity for r in recs],
                           cfg.out / f"fig1_{key[0]}_{key[1]}.txt", digest, cfg.seed, ("p", "fidelity"))
    if cfg.mitigation == "zne":
        zrecs = bench.zne_benchmark(grid, ZneConfig(), bcfg)
        bench.write_records_csv(zrecs, cfg.out / "table2.csv", digest, cfg.seed)
    for r in records:
        print(f"{r.pde:13s} {r.noise:18s} p={r.p:<6g} F={_fmt(r.fidelity)}")
    return 2 if flagged else 0


def _fits(records, bcfg) -> dict:
    out = {}
    series = {}
    for r in records:
        series.setdefault((r.pde, r.noise), []).append(r)
    for key, recs in series.items():
        try:
            out[key] = bench.fit_decay_rate(recs, bench.gate_count(recs[0].variant, bcfg))
        except QempdeError:
            out[key] = None
    return out


def _fmt(v) -> str:
    return "nan" if v is None else f"{v:.4f}"


def cmd_pec_overhead(cfg: RunConfig) -> int:
    ps = _positive_ps(cfg, bench.TABLE_PS)
    rows = bench.pec_table(bench.TABLE_GATES, ps)
    path = cfg.out / "table3.csv"
    with path.open("w") as fh:
        fh.write(bench.header_line(cfg.digest(), cfg.seed) + "\n")
        fh.write("n_g,p,overhead,display\n")
        for row in rows:
            for p, v, s in zip(ps, row["values"], row["formatted"]):
                fh.write(f"{row['n_g']},{p:g},{v!r},{s}\n")
    print("n_g  " + "  ".join(f"p={p:<8g}" for p in ps))
    for row in rows:
        print(f"{row['n_g']:<4d} " + "  ".join(f"{s:<10s}" for s in row["formatted"]))
    return 0


def cmd_train(cfg: RunConfig) -> int:
    if len(cfg.pde) != 1:
        raise ConfigurationError("train needs exactly one --pde")
    p = (cfg.p or (0.0,))[0]
    bcfg = cfg.bench_config()
    noise = None if p == 0 else NoiseConfig(cfg.noise[0], p, bcfg.placement)
    problem = bench.make_problem(cfg.pde[0])
    spec = problem.ansatz(cfg.variant, bcfg.n_qubits, bcfg.layers)
    tcfg = TrainConfig(epochs=bcfg.epochs, lr=bcfg.lr, seed=cfg.seed, noise=noise,
                       zne_wrapped=cfg.mitigation == "zne" and noise is not None, init_scale=bcfg.init_scale)
    flagged = False
    try:
        trace = train(spec, problem, tcfg)
        losses, flags = trace.losses, trace.flags
    except TrainingAborted as exc:
        losses, flags, flagged = list(exc.trace), ["aborted"], True
    bench.write_series(np.arange(len(losses)), losses, cfg.out / "trace.txt", cfg.digest(), cfg.seed,
                       ("epoch", "loss"))
    if losses:
        print(f"epochs={len(losses)} final={losses[-1]:.6g} floor={bench.floor_of(losses):.6g}")
    return 2 if flagged or flags else 0


def cmd_budget(cfg: RunConfig) -> int:
    ps = _positive_ps(cfg, (0.001, 0.01, 0.05))
    records = bench.error_budget_table(cfg.pde, ps, cfg.noise[0], cfg.seed, cfg.bench_config())
    bench.write_records_csv(records, cfg.out / "table5.csv", cfg.digest(), cfg.seed)
    for r in records:
        s, st, res = r.budget
        print(f"{r.pde:13s} p={r.p:<6g} systematic={s:.3f} statistical={st:.3f} residual={res:.3f}")
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    grid = bench.SweepGrid(cfg.noise[:1], _positive_ps(cfg, bench.DEFAULT_PS), cfg.pde, cfg.seed_list())
    records, eta = bench.constrained_comparison(grid, cfg.bench_config())
    digest = cfg.digest()
    bench.write_records_csv(records, cfg.out / "table4.csv", digest, cfg.seed)
    bench.write_json({"eta": eta, "records": bench.records_json(records)}, cfg.out / "table4.json", digest, cfg.seed)
    for pde, value in eta.items():
        print(f"{pde:13s} eta={value:.4f}")
    return 2 if any(r.flags or r.fidelity is None for r in records) else 0


COMMANDS = {"sweep": cmd_sweep, "pec-overhead": cmd_pec_overhead, "train": cmd_train, "budget": cmd_budget,
            "compare": cmd_compare}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        set_validation(cfg.validate)
        return COMMANDS[cfg.command](cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except QempdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    finally:
        set_validation(False)


if __name__ == "__main__":
    sys.exit(main())
