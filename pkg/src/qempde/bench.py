"""Experiment drivers: fidelity sweeps, decay fits, mitigation benchmarks, error budgets."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ansatz import AnsatzSpec, compiled, instructions, mean_fidelity, noise_locations
from .errors import ConfigurationError, FitError, TrainingAborted
from .mitigation import ZneConfig, pec_overhead, richardson_weights, zne_fields
from .noise import CHANNELS, NoiseConfig
from .pde import KINDS, PdeProblem, collocation_array, make_problem, physics_loss
from .reference import cache_dir
from .training import TrainConfig, train

log = logging.getLogger(__name__)

DEFAULT_PS = (0.001, 0.005, 0.01, 0.02, 0.03, 0.05)
TABLE_GATES = (20, 40, 60, 80, 100)
TABLE_PS = (0.001, 0.005, 0.01, 0.02, 0.05)


@dataclass(frozen=True)
class SweepGrid:
    channels: tuple[str, ...] = CHANNELS
    ps: tuple[float, ...] = DEFAULT_PS
    pdes: tuple[str, ...] = KINDS
    seeds: tuple[int, ...] = (0, 1, 2)
    variant: str = "unconstrained"

    def __post_init__(self):
        for name in ("channels", "ps", "pdes", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ConfigurationError(f"sweep axis {name!r} is empty")
        if any(c not in CHANNELS for c in self.channels):
            raise ConfigurationError(f"unknown channel in {self.channels}")
        if any(k not in KINDS for k in self.pdes):
            raise ConfigurationError(f"unknown PDE in {self.pdes}")
        if any(not 0 < p <= 0.5 for p in self.ps):
            raise ConfigurationError("noise strengths must lie in (0, 0.5]")


@dataclass(frozen=True)
class BenchConfig:
    """Everything besides the grid that affects a result."""

    epochs: int = 300
    lr: float = 0.2
    init_scale: float = 0.1
    placement: str = "gate"
    n_qubits: int = 6
    layers: int = 4
    shots: int = 10_000
    workers: int = 1
    use_cache: bool = True

    def train_config(self, seed: int, noise: NoiseConfig | None = None, zne: bool = False) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, seed=seed, noise=noise, zne_wrapped=zne,
                           init_scale=self.init_scale)


@dataclass
class ExperimentRecord:
    pde: str
    noise: str
    p: float
    variant: str
    mitigation: str
    seeds: tuple[int, ...]
    fidelity: float | None = None
    unmitigated_error: float | None = None
    mitigated_error: float | None = None
    overhead: float | None = None
    floor: float | None = None
    budget: tuple[float, float, float] | None = None
    flags: tuple[str, ...] = ()
    timestamp: float = 0.0
    # noise locations per circuit; n_locations * p is the expected number of faults
    n_locations: int | None = None

    def __post_init__(self):
        if self.fidelity is not None and not -1e-12 <= self.fidelity <= 1 + 1e-12:
            raise ValueError(f"fidelity {self.fidelity} outside [0, 1]")
        if self.budget is not None and any(not 0 <= b <= 1 for b in self.budget):
            raise ValueError("budget fractions must lie in [0, 1]")

    @property
    def reduction(self) -> float | None:
        """Relative error reduction ``1 - mitigated / unmitigated``."""
        if self.unmitigated_error is None or self.mitigated_error is None:
            return None
        if self.unmitigated_error == 0:
            return 1.0
        return 1.0 - self.mitigated_error / self.unmitigated_error


# the wall-clock timestamp lives in the JSON output only, so reruns give byte-identical CSV
CSV_COLUMNS = ("pde", "noise", "p", "variant", "mitigation", "seeds", "n_locations", "fidelity",
               "unmitigated_error", "mitigated_error", "overhead", "floor", "systematic", "statistical",
               "residual", "flags")


@dataclass(frozen=True)
class DecayFit:
    alpha: float
    r2: float

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise FitError("decay rate is not finite")
        if not 0.0 <= self.r2 <= 1.0:
            raise FitError(f"r^2 = {self.r2} outside [0, 1]")


# ---------------------------------------------------------------------------
# hashing and trained-parameter cache


def config_hash(*parts) -> str:
    """Short stable digest of dataclasses / plain values."""

    def plain(obj):
        if dataclasses.is_dataclass(obj):
            return {k: plain(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, dict):
            return {str(k): plain(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [plain(v) for v in obj]
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return obj

    blob = json.dumps([plain(p) for p in parts], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


_MEMO: dict[str, np.ndarray] = {}


def problem_for(pde: str, variant: str) -> PdeProblem:
    """The problem as trained for a variant.

    The unconstrained comparator of the resilience study is trained on data
    alone; everything else uses the full composite loss.
    """
    problem = make_problem(pde)
    return problem.with_lambda(0.0) if variant == "data_only" else problem


def spec_for(problem: PdeProblem, variant: str, cfg: BenchConfig) -> AnsatzSpec:
    ansatz_variant = "unconstrained" if variant == "data_only" else variant
    return problem.ansatz(ansatz_variant, cfg.n_qubits, cfg.layers)


def trained_parameters(pde: str, variant: str, seed: int, cfg: BenchConfig,
                       train_noise: NoiseConfig | None = None, zne: bool = False):
    """Trained angles and loss trace for one (pde, variant, seed, training noise), cached on disk."""
    problem = problem_for(pde, variant)
    spec = spec_for(problem, variant, cfg)
    key = config_hash("theta", pde, variant, seed, train_noise, zne, cfg.epochs, cfg.lr, cfg.init_scale,
                      cfg.n_qubits, cfg.layers)
    path = cache_dir() / "theta" / f"{pde}_{variant}_{seed}_{key}.npz"
    if key in _MEMO:
        return _MEMO[key]
    if cfg.use_cache and path.exists():
        with np.load(path) as z:
            out = (z["theta"], z["losses"])
        _MEMO[key] = out
        return out
    trace = train(spec, problem, cfg.train_config(seed, train_noise, zne))
    out = (trace.theta, np.asarray(trace.losses))
    _MEMO[key] = out
    if cfg.use_cache:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.stem + ".tmp.npz")
            np.savez(tmp, theta=trace.theta, losses=out[1])
            tmp.replace(path)
        except OSError:
            pass
    return out


def location_count(variant: str, cfg: BenchConfig) -> int:
    v = "unconstrained" if variant == "data_only" else variant
    return noise_locations(instructions(AnsatzSpec(cfg.n_qubits, cfg.layers, v), cfg.placement))


def floor_of(losses) -> float:
    losses = np.asarray(losses)
    k = max(1, losses.size // 10)
    return float(np.mean(losses[-k:]))


def _map(fn, items: Sequence, workers: int) -> list:
    """Order-preserving map, optionally over worker processes."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# fidelity sweeps and decay fits


def _fidelity_cell(args) -> tuple[float | None, tuple[str, ...]]:
    pde, variant, channel, p, seeds, cfg = args
    problem = problem_for(pde, variant)
    spec = spec_for(problem, variant, cfg)
    pts = collocation_array(problem)
    noise = NoiseConfig(channel, p, cfg.placement)
    vals, flags = [], []
    for seed in seeds:
        try:
            theta, _ = trained_parameters(pde, variant, seed, cfg)
        except TrainingAborted as exc:
            flags.append(f"seed{seed}:aborted:{exc}")
            continue
        vals.append(mean_fidelity(spec, theta, pts, noise))
    return (float(np.mean(vals)) if vals else None), tuple(flags)


def fidelity_sweep(grid: SweepGrid, cfg: BenchConfig = BenchConfig()) -> list[ExperimentRecord]:
    """Mean state fidelity per (pde, channel, p), averaged over the grid's seeds.

    Circuits are trained noiselessly and evaluated under noise.
    """
    cells = [(pde, grid.variant, ch, p, grid.seeds, cfg) for pde in grid.pdes for ch in grid.channels
             for p in grid.ps]
    # train up front so worker processes share the cache instead of racing
    for pde in grid.pdes:
        for seed in grid.seeds:
            try:
                trained_parameters(pde, grid.variant, seed, cfg)
            except TrainingAborted:
                pass
    results = _map(_fidelity_cell, cells, cfg.workers)
    now = time.time()
    return [ExperimentRecord(pde, ch, p, variant, "none", seeds, fidelity=f, flags=fl, timestamp=now,
                             n_locations=location_count(variant, cfg))
            for (pde, variant, ch, p, seeds, _), (f, fl) in zip(cells, results)]


def fit_decay(ps, fidelities, n_g: int) -> DecayFit:
    """Least-squares slope of ``-ln F`` against ``n_g p`` through the origin (``F(0) = 1``)."""
    ps = np.asarray(ps, dtype=float)
    fs = np.asarray(fidelities, dtype=float)
    keep = np.isfinite(fs) & (fs > 1e-3)
    if keep.sum() < 3:
        raise FitError("need at least 3 points with fidelity > 1e-3")
    z = n_g * ps[keep]
    y = -np.log(fs[keep])
    alpha = float(z @ y / (z @ z))
    ss_res = float(np.sum((y - alpha * z) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return DecayFit(alpha, float(np.clip(r2, 0.0, 1.0)))


def fit_decay_rate(records: Iterable[ExperimentRecord], n_g: int) -> DecayFit:
    recs = [r for r in records if r.fidelity is not None]
    return fit_decay([r.p for r in recs], [r.fidelity for r in recs], n_g)


def gate_count(variant: str, cfg: BenchConfig = BenchConfig()) -> int:
    v = "unconstrained" if variant == "data_only" else variant
    return AnsatzSpec(cfg.n_qubits, cfg.layers, v).gate_count


def decay_rates(records: Sequence[ExperimentRecord], cfg: BenchConfig = BenchConfig()) -> dict:
    """``{(pde, channel, variant): DecayFit}`` for every series in ``records``."""
    series: dict[tuple, list] = {}
    for r in records:
        series.setdefault((r.pde, r.noise, r.variant), []).append(r)
    return {k: fit_decay_rate(v, gate_count(k[2], cfg)) for k, v in series.items()}


# ---------------------------------------------------------------------------
# zero-noise extrapolation


def _zne_cell(args):
    pde, variant, channel, p, seeds, zcfg, cfg = args
    problem = problem_for(pde, variant)
    spec = spec_for(problem, variant, cfg)
    pts = collocation_array(problem)
    noise = NoiseConfig(channel, p, cfg.placement)
    unmit, mit = [], []
    for seed in seeds:
        theta, _ = trained_parameters(pde, variant, seed, cfg)
        ideal = compiled(spec, None).fields(theta, pts)
        mitigated, raw = zne_fields(spec, theta, pts, noise, zcfg)
        unmit.append(float(np.mean(np.abs(raw[0] - ideal))))
        mit.append(float(np.mean(np.abs(mitigated - ideal))))
    return float(np.mean(unmit)), float(np.mean(mit))


def zne_benchmark(grid: SweepGrid, zcfg: ZneConfig = ZneConfig(), cfg: BenchConfig = BenchConfig()) -> list[ExperimentRecord]:
    """Mean absolute readout error over collocation points, raw and extrapolated.

    The raw value is the one at the base strength, which must therefore be
    the first scale factor.  ``overhead`` is the variance amplification
    ``sum w_i^2`` of the Richardson combination.
    """
    if zcfg.scale_factors[0] != 1.0:
        raise ConfigurationError("the first ZNE scale factor must be 1")
    weights = richardson_weights(zcfg.scale_factors[: zcfg.order + 1])
    cells = [(pde, grid.variant, ch, p, grid.seeds, zcfg, cfg) for pde in grid.pdes for ch in grid.channels
             for p in grid.ps]
    results = _map(_zne_cell, cells, cfg.workers)
    now = time.time()
    return [ExperimentRecord(pde, ch, p, v, "zne", seeds, unmitigated_error=u, mitigated_error=m,
                             overhead=float(np.sum(weights**2)), timestamp=now,
                             n_locations=location_count(v, cfg))
            for (pde, v, ch, p, seeds, _, _), (u, m) in zip(cells, results)]


# ---------------------------------------------------------------------------
# constrained vs unconstrained


def constrained_comparison(grid: SweepGrid, cfg: BenchConfig = BenchConfig()):
    """Fidelity of the data-only base circuit against the physics-trained extended circuit.

    Returns ``(records, eta)`` where ``eta[pde] = 1 - alpha_constrained /
    alpha_unconstrained`` from decay fits on the first channel of the grid.
    """
    records = []
    for variant in ("data_only", "constrained"):
        records += fidelity_sweep(dataclasses.replace(grid, variant=variant), cfg)
    channel = grid.channels[0]
    eta = {}
    for pde in grid.pdes:
        fits = {}
        for variant in ("data_only", "constrained"):
            recs = [r for r in records if r.pde == pde and r.variant == variant and r.noise == channel]
            fits[variant] = fit_decay_rate(recs, gate_count(variant, cfg))
        eta[pde] = 1.0 - fits["constrained"].alpha / fits["data_only"].alpha
    return records, eta


def relative_advantage(records: Sequence[ExperimentRecord], pde: str, channel: str, p: float) -> float:
    """``F_constrained / F_unconstrained - 1`` at one cell."""
    f = {r.variant: r.fidelity for r in records if r.pde == pde and r.noise == channel and r.p == p}
    return f["constrained"] / f["data_only"] - 1.0


# ---------------------------------------------------------------------------
# error budget


def error_budget(spec: AnsatzSpec, theta, problem: PdeProblem, noise: NoiseConfig, shots: int = 10_000):
    """(systematic, statistical, residual) fractions and the raw components.

    systematic = mean |<O>_noisy - <O>_ideal| over collocation points,
    statistical = mean sqrt((1 - <Z>^2) / shots) of the noisy readout,
    residual = sqrt(physics loss) of the noisy circuit.
    """
    if shots < 1:
        raise ConfigurationError("shots must be positive")
    pts = collocation_array(problem)
    ideal = compiled(spec, None).fields(theta, pts)
    noisy = compiled(spec, noise).fields(theta, pts)
    systematic = float(np.mean(np.abs(noisy - ideal)))
    z = np.array([(noisy[f] - off) / sc for f, (_, sc, off) in enumerate(spec.readouts)])
    statistical = float(np.mean(np.sqrt(np.clip(1.0 - z**2, 0.0, None) / shots)))
    residual = math.sqrt(physics_loss(spec, theta, problem, noise))
    raw = np.array([systematic, statistical, residual])
    total = raw.sum()
    if not total > 0:
        raise FitError("degenerate error budget: all components are zero")
    return tuple(float(v) for v in raw / total), raw


def error_budget_table(pdes: Sequence[str] = KINDS, ps: Sequence[float] = (0.001, 0.01, 0.05),
                       channel: str = "depolarizing", seed: int = 0,
                       cfg: BenchConfig = BenchConfig()) -> list[ExperimentRecord]:
    out = []
    for pde in pdes:
        problem = problem_for(pde, "unconstrained")
        spec = spec_for(problem, "unconstrained", cfg)
        theta, losses = trained_parameters(pde, "unconstrained", seed, cfg)
        for p in ps:
            fr, _ = error_budget(spec, theta, problem, NoiseConfig(channel, p, cfg.placement), cfg.shots)
            out.append(ExperimentRecord(pde, channel, p, "unconstrained", "none", (seed,), budget=fr,
                                        floor=floor_of(losses), timestamp=time.time(),
                                        n_locations=location_count("unconstrained", cfg)))
    return out


# ---------------------------------------------------------------------------
# PEC overhead table


def format_sig(x: float, digits: int = 3) -> str:
    """``x`` to ``digits`` significant figures: ``1.08``, ``4.80``, ``531``, ``2050``, ``1.9e8``.

    Values from 1e4 up use compact scientific notation without trailing zeros.
    """
    if x == 0:
        return "0"
    mantissa, exponent = f"{x:.{digits - 1}e}".split("e")
    exponent = int(exponent)
    if abs(x) >= 1e4:
        return f"{float(mantissa):g}e{exponent}"
    return f"{float(mantissa) * 10.0**exponent:.{max(0, digits - 1 - exponent)}f}"


def pec_table(gate_counts: Sequence[int] = TABLE_GATES, ps: Sequence[float] = TABLE_PS) -> list[dict]:
    """One row per gate count: exact overheads and their 3-significant-figure strings."""
    rows = []
    for n_g in gate_counts:
        vals = [pec_overhead(n_g, p) for p in ps]
        rows.append({"n_g": n_g, "values": vals, "formatted": [format_sig(v) for v in vals]})
    return rows


# ---------------------------------------------------------------------------
# output


def header_line(digest: str, seed: int | None) -> str:
    return f"# qempde config_hash={digest} seed={seed}"


def write_records_csv(records: Sequence[ExperimentRecord], path, digest: str, seed: int | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(header_line(digest, seed) + "\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            b = r.budget or (None, None, None)
            w.writerow([r.pde, r.noise, r.p, r.variant, r.mitigation, " ".join(map(str, r.seeds)), r.n_locations,
                        r.fidelity, r.unmitigated_error, r.mitigated_error, r.overhead, r.floor, *b,
                        ";".join(r.flags)])


def records_json(records: Sequence[ExperimentRecord]) -> dict:
    """Records nested as ``{pde: {noise: {p: record}}}``."""
    out: dict = {}
    for r in records:
        d = dataclasses.asdict(r)
        out.setdefault(r.pde, {}).setdefault(r.noise, {}).setdefault(r.variant, {})[f"{r.p:g}"] = d
    return out


def write_json(payload: dict, path, digest: str, seed: int | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(header_line(digest, seed) + "\n")
        json.dump(payload, fh, indent=2, default=str)
        fh.write("\n")


def write_series(x, y, path, digest: str, seed: int | None = None, columns=("x", "y")) -> None:
    """Plot-ready two-column file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(header_line(digest, seed) + "\n")
        fh.write(f"{columns[0]} {columns[1]}\n")
        for a, b in zip(x, y):
            fh.write(f"{a:.10g} {b:.10g}\n")


def read_header(path) -> dict[str, str]:
    first = Path(path).read_text().splitlines()[0]
    if not first.startswith("# qempde"):
        raise ValueError("missing qempde header")
    return dict(tok.split("=", 1) for tok in first.split()[2:])
