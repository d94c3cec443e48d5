"""Zero-noise extrapolation, probabilistic error cancellation and readout correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ansatz import AnsatzSpec, InputPoint, as_points, check_theta, compiled, readout_values
from .errors import ConfigurationError, InfeasibleError, SingularChannelError
from .noise import NoiseConfig, ReadoutModel, confusion_matrix

GAMMA_LIMIT = 1e12
PEC_BLOCK = 1024  # samples per pseudorandom stream


@dataclass(frozen=True)
class ZneConfig:
    scale_factors: tuple[float, ...] = (1.0, 2.0, 3.0)
    order: int = 2

    def __post_init__(self):
        c = tuple(float(x) for x in self.scale_factors)
        object.__setattr__(self, "scale_factors", c)
        if len(set(c)) != len(c):
            raise ConfigurationError("ZNE scale factors must be distinct")
        if any(x < 1 for x in c):
            raise ConfigurationError("ZNE scale factors must be >= 1")
        if len(c) < self.order + 1:
            raise ConfigurationError(f"order {self.order} needs at least {self.order + 1} scale factors")

    def check(self, p: float) -> None:
        if max(self.scale_factors) * p > 1:
            raise ConfigurationError(f"amplified strength {max(self.scale_factors) * p} exceeds 1")


@dataclass
class MitigatedEstimate:
    value: float
    raw: list[float]
    overhead: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("mitigated estimate is not finite")


def richardson_weights(scale_factors: Sequence[float]) -> np.ndarray:
    """Lagrange weights that evaluate the interpolating polynomial at zero noise."""
    c = np.asarray(scale_factors, dtype=float)
    if len(np.unique(c)) != c.size:
        raise ConfigurationError("duplicate scale factors")
    w = np.ones(c.size)
    for j in range(c.size):
        for m in range(c.size):
            if m != j:
                w[j] *= c[m] / (c[m] - c[j])
    return w


def zne_estimate(evaluator: Callable[[float], float], p: float, cfg: ZneConfig = ZneConfig()) -> MitigatedEstimate:
    """Richardson extrapolation of ``evaluator(c * p)`` to ``c = 0``.

    Uses the first ``order + 1`` scale factors.
    """
    cfg.check(p)
    scales = cfg.scale_factors[: cfg.order + 1]
    raw = [float(evaluator(c * p)) for c in scales]
    value = float(np.dot(richardson_weights(scales), raw))
    return MitigatedEstimate(value, raw, meta={"scale_factors": list(scales), "order": cfg.order, "p": p})


def zne_fields(spec: AnsatzSpec, theta, points, noise: NoiseConfig, cfg: ZneConfig = ZneConfig()):
    """Mitigated readouts ``(F, B)`` and the raw ones at each scale ``(S, F, B)``."""
    cfg.check(noise.strength)
    scales = cfg.scale_factors[: cfg.order + 1]
    raw = np.array([compiled(spec, noise.scaled(c)).fields(theta, as_points(points)) for c in scales])
    return np.tensordot(richardson_weights(scales), raw, axes=1), raw


# ---------------------------------------------------------------------------
# PEC


def pec_overhead(n_g: int, p: float) -> float:
    """Sampling overhead ``gamma^2 = (1 + 2p)^(2 n_g)``."""
    if n_g < 1 or not 0 <= p <= 0.5:
        raise ConfigurationError("pec_overhead needs n_g >= 1 and p in [0, 0.5]")
    return float((1.0 + 2.0 * p) ** (2 * n_g))


@dataclass(frozen=True)
class QuasiProbability:
    """Signed weights over Pauli corrections (I, X, Y, Z)."""

    coefficients: tuple[float, float, float, float]

    @property
    def one_norm(self) -> float:
        return float(np.sum(np.abs(self.coefficients)))

    @property
    def probabilities(self) -> np.ndarray:
        a = np.abs(np.asarray(self.coefficients))
        return a / a.sum()

    @property
    def signs(self) -> np.ndarray:
        return np.where(np.asarray(self.coefficients) < 0, -1.0, 1.0)


def pec_inverse_coefficients(p: float) -> QuasiProbability:
    """Pauli mixture that undoes a depolarizing channel of strength ``p``.

    The depolarizing channel scales the Bloch vector by ``1 - 4p/3``; the
    mixture ``a_I I + a_P sum P.P`` scales it by ``q = 1 / (1 - 4p/3)``.
    """
    if not 0 <= p < 0.75:
        raise SingularChannelError(f"depolarizing channel with p={p} has no inverse")
    q = 1.0 / (1.0 - 4.0 * p / 3.0)
    a_p = (1.0 - q) / 4.0
    return QuasiProbability(((3.0 * q + 1.0) / 4.0, a_p, a_p, a_p))


def pec_estimate(spec: AnsatzSpec, theta, pt: InputPoint, p: float, n_samples: int, seed: int,
                 placement: str = "counted", field: int = 0, ideal: float | None = None) -> MitigatedEstimate:
    """Sign-weighted Monte Carlo estimate of the noiseless readout.

    Every noise location (depolarizing, strength ``p``) is followed by a
    Pauli drawn from the inverse quasi-probability; the estimate is
    ``gamma_total * mean(sign * readout)``.  Samples are drawn in blocks of
    ``PEC_BLOCK`` from independent streams keyed by ``(seed, block)``.
    """
    if n_samples < 1:
        raise ConfigurationError("need at least one PEC sample")
    theta = check_theta(spec, theta)
    _, scale, offset = spec.readouts[field]
    if p == 0:
        v = float(compiled(spec, None).fields(theta, as_points(pt))[field, 0])
        return MitigatedEstimate(v, [v], overhead=1.0, meta={"gamma_total": 1.0, "n_samples": n_samples})
    circ = compiled(spec, NoiseConfig("depolarizing", p, placement))
    quasi = pec_inverse_coefficients(p)
    n_loc = circ.n_locations
    gamma_total = quasi.one_norm**n_loc
    if gamma_total > GAMMA_LIMIT:
        raise InfeasibleError(f"PEC needs gamma_total = {gamma_total:.3g} > {GAMMA_LIMIT:g}")
    probs, signs = quasi.probabilities, quasi.signs
    pts = as_points(pt)
    acc = np.empty(n_samples)
    for blk, start in enumerate(range(0, n_samples, PEC_BLOCK)):
        m = min(PEC_BLOCK, n_samples - start)
        rng = np.random.default_rng([seed, blk])
        picks = rng.choice(4, size=(n_loc, m), p=probs)
        sign = np.prod(signs[picks], axis=0)
        rho = circ.run(theta, pts, corrections=picks)
        z = (readout_values(spec, rho)[field] - offset) / scale
        acc[start:start + m] = sign * z
    est_z = gamma_total * float(np.mean(acc))
    value = scale * est_z + offset
    meta = {
        "gamma_gate": quasi.one_norm,
        "gamma_total": gamma_total,
        "n_locations": n_loc,
        "n_samples": n_samples,
        "seed": seed,
        "std_error": scale * gamma_total * float(np.std(acc)) / np.sqrt(n_samples),
        "overhead_formula": pec_overhead(spec.gate_count, min(p, 0.5)),
    }
    if ideal is not None:
        meta["ideal"] = ideal
    return MitigatedEstimate(value, [est_z], overhead=gamma_total**2, meta=meta)


def accuracy_recovery(estimate: float, unmitigated: float, ideal: float) -> float:
    """``1 - |estimate - ideal| / |unmitigated - ideal|`` clamped to [0, 1]."""
    base = abs(unmitigated - ideal)
    if base == 0:
        return 1.0
    return float(np.clip(1.0 - abs(estimate - ideal) / base, 0.0, 1.0))


# ---------------------------------------------------------------------------
# readout


def apply_confusion(p_ideal, m: ReadoutModel) -> np.ndarray:
    return confusion_matrix(m) @ np.asarray(p_ideal, dtype=float)


def readout_correct(p_noisy, m: ReadoutModel) -> np.ndarray:
    """Solve ``M x = p_noisy``, clip negative quasi-probabilities and renormalise."""
    p = np.asarray(p_noisy, dtype=float)
    if p.shape != (2**m.n_qubits,):
        raise ConfigurationError(f"expected a length-{2**m.n_qubits} distribution")
    if abs(p.sum() - 1) > 1e-9:
        raise ConfigurationError("input distribution does not sum to 1")
    try:
        x = np.linalg.solve(confusion_matrix(m), p)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError("confusion matrix is singular") from exc
    x = np.clip(x, 0.0, None)
    return x / x.sum()
