"""Single-qubit Kraus channels, noise placement and the readout confusion model."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import ConfigurationError
from .qstate import I2, X, Y, Z, check_completeness

CHANNELS = ("depolarizing", "amplitude_damping", "bit_flip")
PLACEMENTS = ("gate", "counted", "layer")


@dataclass(frozen=True, eq=False)
class KrausSet:
    operators: tuple[np.ndarray, ...]
    label: str
    strength: float

    def __post_init__(self):
        check_completeness(self.operators)

    def __iter__(self):
        return iter(self.operators)


def _check_strength(p: float, name: str = "p") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0 or not np.isfinite(p):
        raise ConfigurationError(f"{name} must lie in [0, 1], got {p}")
    return p


def depolarizing_kraus(p: float) -> KrausSet:
    p = _check_strength(p)
    ops = (np.sqrt(1 - p) * I2, np.sqrt(p / 3) * X, np.sqrt(p / 3) * Y, np.sqrt(p / 3) * Z)
    return KrausSet(ops, "depolarizing", p)


def amplitude_damping_kraus(gamma: float) -> KrausSet:
    gamma = _check_strength(gamma, "gamma")
    e0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    e1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return KrausSet((e0, e1), "amplitude_damping", gamma)


def bit_flip_kraus(p: float) -> KrausSet:
    p = _check_strength(p)
    return KrausSet((np.sqrt(1 - p) * I2, np.sqrt(p) * X), "bit_flip", p)


_BUILDERS = {
    "depolarizing": depolarizing_kraus,
    "amplitude_damping": amplitude_damping_kraus,
    "bit_flip": bit_flip_kraus,
}


def kraus_for(label: str, strength: float) -> KrausSet:
    try:
        return _BUILDERS[label](strength)
    except KeyError:
        raise ConfigurationError(f"unknown channel {label!r}; expected one of {CHANNELS}") from None


@dataclass(frozen=True)
class NoiseConfig:
    """Which channel, how strong, and where it is inserted.

    ``placement="gate"`` puts one channel on every qubit a gate touched,
    right after that gate (encoding rotations included, CNOT hits both
    qubits).  ``placement="counted"`` puts exactly one channel after each
    trainable rotation and CNOT (on the CNOT target), leaving encoding
    gates clean, so the number of noise locations equals the gate count.
    ``placement="layer"`` puts one channel on every qubit after each
    variational layer.
    """

    channel: str
    strength: float
    placement: str = "gate"

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ConfigurationError(f"unknown channel {self.channel!r}; expected one of {CHANNELS}")
        if self.placement not in PLACEMENTS:
            raise ConfigurationError(f"unknown placement {self.placement!r}; expected one of {PLACEMENTS}")
        _check_strength(self.strength, "strength")

    def kraus(self) -> KrausSet:
        return kraus_for(self.channel, self.strength)

    def scaled(self, c: float) -> "NoiseConfig":
        """Same channel at strength ``c * strength`` (noise amplification)."""
        return NoiseConfig(self.channel, c * self.strength, self.placement)

    @property
    def is_trivial(self) -> bool:
        return self.strength == 0.0


@dataclass(frozen=True)
class ReadoutModel:
    """Symmetric, uniform per-qubit readout flips with probability ``epsilon``."""

    epsilon: float
    n_qubits: int

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 0.5:
            raise ConfigurationError(f"readout epsilon must be in [0, 0.5), got {self.epsilon}")
        if self.n_qubits < 1:
            raise ConfigurationError("readout model needs at least one qubit")


def confusion_matrix(m: ReadoutModel) -> np.ndarray:
    """Column-stochastic ``M`` with ``M[observed, ideal]``, qubit 0 most significant."""
    e = m.epsilon
    single = np.array([[1 - e, e], [e, 1 - e]])
    return reduce(np.kron, [single] * m.n_qubits)
