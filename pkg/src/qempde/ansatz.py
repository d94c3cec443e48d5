"""Hardware-efficient ansatz with data re-uploading, and its noisy evaluation.

Layer structure (repeated ``layers`` times)::

    RY(pi*x) on even qubits, RY(pi*t) on odd qubits     # encoding, untrained
    [RX(theta)] RY(theta) RZ(theta) on every qubit      # RX only when constrained
    CNOT(0,1) CNOT(1,2) ... CNOT(n-2,n-1)

``x`` and ``t`` are normalised to ``[0, 1]`` with the spec's domain before
encoding.  Parameters are indexed layer-major, then qubit, then gate in the
order above.  The readout is ``u = scale * <Z_q> + offset`` per field.

Evaluation runs through :class:`CompiledCircuit`, which fuses every run of
single-qubit operations on one qubit (encoding, rotations, noise) into a
single 4x4 superoperator between entangling gates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, ValidationError
from .noise import NoiseConfig
from .qstate import (I2, MAX_QUBITS, PSD_TOL, ROTATIONS, X, Y, Z, DensityMatrix, GateOp, fidelity_pure, ry,
                     validation_enabled, zero_stack)

VARIANTS = ("unconstrained", "constrained")


@dataclass(frozen=True)
class InputPoint:
    x: float
    t: float


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int = 6
    layers: int = 4
    variant: str = "unconstrained"
    x_range: tuple[float, float] = (0.0, 1.0)
    t_range: tuple[float, float] = (0.0, 1.0)
    # (qubit, scale, offset) per output field
    readouts: tuple[tuple[int, float, float], ...] = ((0, 1.0, 0.0),)
    encoding: bool = True

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}]")
        if self.layers < 1:
            raise ConfigurationError("layers must be positive")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}")
        for lo, hi in (self.x_range, self.t_range):
            if not hi > lo:
                raise ConfigurationError("degenerate input domain")
        if not self.readouts:
            raise ConfigurationError("at least one readout is required")
        for q, _, _ in self.readouts:
            if not 0 <= q < self.n_qubits:
                raise ConfigurationError(f"readout qubit {q} out of range")

    @property
    def rotations_per_qubit(self) -> int:
        return 3 if self.variant == "constrained" else 2

    @property
    def param_count(self) -> int:
        return self.rotations_per_qubit * self.n_qubits * self.layers

    @property
    def gate_count(self) -> int:
        n, L = self.n_qubits, self.layers
        return self.rotations_per_qubit * n * L + (n - 1) * L

    @property
    def rotation_kinds(self) -> tuple[str, ...]:
        return ("RX", "RY", "RZ") if self.variant == "constrained" else ("RY", "RZ")

    def with_variant(self, variant: str) -> "AnsatzSpec":
        return AnsatzSpec(self.n_qubits, self.layers, variant, self.x_range, self.t_range,
                          self.readouts, self.encoding)

    def normalise(self, points) -> np.ndarray:
        """Map physical ``(x, t)`` rows to the unit square used by the encoding."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        (x0, x1), (t0, t1) = self.x_range, self.t_range
        return np.column_stack([(pts[:, 0] - x0) / (x1 - x0), (pts[:, 1] - t0) / (t1 - t0)])


def instructions(spec: AnsatzSpec, placement: str | None = None) -> list[tuple]:
    """Symbolic circuit: ``("enc", q, axis)``, ``("rot", kind, q, index)``,
    ``("cnot", c, t)`` and ``("noise", q)`` tuples in execution order."""
    n, kinds = spec.n_qubits, spec.rotation_kinds
    out: list[tuple] = []

    def emit(op):
        out.append(op)
        if placement == "gate":
            qubits = op[1:3] if op[0] == "cnot" else (op[2] if op[0] == "rot" else op[1],)
            out.extend(("noise", q) for q in qubits)
        elif placement == "counted" and op[0] != "enc":
            out.append(("noise", op[2]))

    for layer in range(spec.layers):
        if spec.encoding:
            for q in range(n):
                emit(("enc", q, q % 2))
        for q in range(n):
            for j, kind in enumerate(kinds):
                emit(("rot", kind, q, (layer * n + q) * len(kinds) + j))
        for q in range(n - 1):
            emit(("cnot", q, q + 1))
        if placement == "layer":
            out.extend(("noise", q) for q in range(n))
    return out


def noise_locations(ops: list[tuple]) -> int:
    return sum(op[0] == "noise" for op in ops)


def gate_sequence(spec: AnsatzSpec, theta, pt: InputPoint, include_encoding: bool = True) -> list[GateOp]:
    theta = check_theta(spec, theta)
    xn, tn = spec.normalise([[pt.x, pt.t]])[0]
    gates = []
    for op in instructions(spec):
        if op[0] == "enc":
            if include_encoding:
                gates.append(GateOp("RY", (op[1],), float(np.pi * (xn, tn)[op[2]])))
        elif op[0] == "rot":
            gates.append(GateOp(op[1], (op[2],), float(theta[op[3]])))
        else:
            gates.append(GateOp("CNOT", (op[1], op[2])))
    return gates


def check_theta(spec: AnsatzSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != spec.param_count:
        raise ConfigurationError(f"expected {spec.param_count} parameters, got {theta.size}")
    if not np.all(np.isfinite(theta)):
        raise ConfigurationError("parameters must be finite")
    return theta


def unitary_superop(u: np.ndarray) -> np.ndarray:
    """``kron(U, conj(U))`` for a single matrix or a stack of them."""
    if u.ndim == 2:
        return np.kron(u, u.conj())
    return np.einsum("bac,bxy->baxcy", u, u.conj()).reshape(u.shape[0], 4, 4)


def kraus_superop(ops: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(e, e.conj()) for e in ops)


PAULI_SUPEROPS = np.array([np.kron(m, m.conj()) for m in (I2, X, Y, Z)])


@dataclass
class Block:
    qubit: int
    items: list[tuple] = field(default_factory=list)

    @property
    def params(self) -> list[int]:
        return [it[2] for it in self.items if it[0] == "rot"]


def fuse(ops: list[tuple]) -> list:
    """Group consecutive single-qubit operations per qubit into :class:`Block` s.

    Single-qubit operations on different qubits commute, so pending blocks
    are flushed only when a CNOT touches their qubit.
    """
    program: list = []
    pending: dict[int, Block] = {}
    loc = 0
    for op in ops:
        if op[0] == "cnot":
            for q in op[1:3]:
                if q in pending:
                    program.append(pending.pop(q))
            program.append(op)
            continue
        q = op[2] if op[0] == "rot" else op[1]
        if op[0] == "enc":
            item = ("enc", op[2])
        elif op[0] == "rot":
            item = ("rot", op[1], op[3])
        else:
            item = ("noise", loc)
            loc += 1
        pending.setdefault(q, Block(q)).items.append(item)
    program.extend(pending[q] for q in sorted(pending))
    return program


class CompiledCircuit:
    """A spec plus noise model, fused into superoperator blocks and CNOTs."""

    def __init__(self, spec: AnsatzSpec, noise: NoiseConfig | None = None):
        self.spec = spec
        self.noise = None if noise is None or noise.is_trivial else noise
        placement = self.noise.placement if self.noise else None
        self.program = fuse(instructions(spec, placement))
        self.noise_superop = kraus_superop(self.noise.kraus().operators) if self.noise else None

    @property
    def n(self) -> int:
        return self.spec.n_qubits

    def item_superop(self, item, theta, angles, shift: float = 0.0, corrections=None) -> np.ndarray:
        if item[0] == "noise":
            if corrections is None:
                return self.noise_superop
            return PAULI_SUPEROPS[corrections[item[1]]] @ self.noise_superop
        if item[0] == "enc":
            return unitary_superop(ry(np.pi * angles[:, item[1]]))
        return unitary_superop(ROTATIONS[item[1]](theta[item[2]] + shift))

    def block_superop(self, block: Block, theta, angles, corrections=None) -> np.ndarray:
        s = np.eye(4, dtype=complex)
        for it in block.items:
            s = self.item_superop(it, theta, angles, corrections=corrections) @ s
        return s if s.ndim == 3 else s[None]

    def shifted_superops(self, block: Block, theta, angles, shift: float) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """For each parameter in ``block``: block superop with that angle moved by ``+shift`` and ``-shift``."""
        mats = [self.item_superop(it, theta, angles) for it in block.items]
        out = {}
        for m, it in enumerate(block.items):
            if it[0] != "rot":
                continue
            pre = np.eye(4, dtype=complex)
            for a in mats[:m]:
                pre = a @ pre
            post = np.eye(4, dtype=complex)
            for a in mats[m + 1:]:
                post = a @ post
            plus = post @ self.item_superop(it, theta, angles, shift) @ pre
            minus = post @ self.item_superop(it, theta, angles, -shift) @ pre
            out[it[2]] = (plus, minus)
        return out

    @property
    def n_locations(self) -> int:
        return sum(it[0] == "noise" for op in self.program if isinstance(op, Block) for it in op.items)

    def run(self, theta, points, corrections=None) -> np.ndarray:
        """Final density matrices for a batch of physical points, shape ``(B, D, D)``.

        ``corrections`` (``(n_locations, B)`` ints in 0..3 for I, X, Y, Z)
        appends a Pauli after every noise location, one choice per batch row.
        """
        theta = check_theta(self.spec, theta)
        angles = self.spec.normalise(points)
        if corrections is not None and angles.shape[0] == 1:
            angles = np.repeat(angles, corrections.shape[1], axis=0)
        rho = zero_stack(self.n, angles.shape[0])
        for op in self.program:
            if isinstance(op, Block):
                sup = self.block_superop(op, theta, angles, corrections)
                K.superop_inplace(rho, np.ascontiguousarray(sup if sup.ndim == 3 else sup[None]), op.qubit, self.n)
            else:
                K.cnot_inplace(rho, op[1], op[2], self.n)
        return rho

    def fields(self, theta, points) -> np.ndarray:
        """Readout values, shape ``(n_fields, B)``."""
        rho = self.run(theta, points)
        return readout_values(self.spec, rho)


def readout_values(spec: AnsatzSpec, rho: np.ndarray) -> np.ndarray:
    n = spec.n_qubits
    diag = np.einsum("bii->bi", rho).real
    idx = np.arange(2**n)
    out = []
    for q, scale, offset in spec.readouts:
        sign = 1.0 - 2.0 * ((idx >> (n - 1 - q)) & 1)
        out.append(scale * (diag @ sign) + offset)
    return np.array(out)


_cache: dict = {}


def compiled(spec: AnsatzSpec, noise: NoiseConfig | None) -> CompiledCircuit:
    key = (spec, noise)
    if key not in _cache:
        if len(_cache) > 64:
            _cache.clear()
        _cache[key] = CompiledCircuit(spec, noise)
    return _cache[key]


def as_points(pts) -> np.ndarray:
    if isinstance(pts, InputPoint):
        return np.array([[pts.x, pts.t]])
    if isinstance(pts, (list, tuple)) and pts and isinstance(pts[0], InputPoint):
        return np.array([[p.x, p.t] for p in pts])
    return np.atleast_2d(np.asarray(pts, dtype=float))


def evaluate_fields(spec: AnsatzSpec, theta, pts, noise: NoiseConfig | None = None) -> np.ndarray:
    """All readout fields at a batch of points, shape ``(n_fields, B)``."""
    return compiled(spec, noise).fields(theta, as_points(pts))


def evaluate_u(spec: AnsatzSpec, theta, pt: InputPoint, noise: NoiseConfig | None = None) -> float:
    return float(evaluate_fields(spec, theta, pt, noise)[0, 0])


def output_state(spec: AnsatzSpec, theta, pt: InputPoint, noise: NoiseConfig | None = None) -> DensityMatrix:
    rho = compiled(spec, noise).run(theta, as_points(pt))[0]
    return DensityMatrix(spec.n_qubits, rho)


def output_states(spec: AnsatzSpec, theta, pts, noise: NoiseConfig | None = None) -> np.ndarray:
    rho = compiled(spec, noise).run(theta, as_points(pts))
    if validation_enabled():
        lowest = np.linalg.eigvalsh(rho).min()
        if lowest < -PSD_TOL:
            raise ValidationError(f"output state has eigenvalue {lowest:.3g}")
    return rho


def mean_fidelity(spec: AnsatzSpec, theta, pts, noise: NoiseConfig) -> float:
    """State fidelity of noisy vs noiseless output averaged over ``pts``."""
    ideal = output_states(spec, theta, pts, None)
    noisy = output_states(spec, theta, pts, noise)
    return float(np.mean(np.clip(np.einsum("bij,bji->b", ideal, noisy).real, 0.0, 1.0)))


def fidelity_at(spec: AnsatzSpec, theta, pt: InputPoint, noise: NoiseConfig) -> float:
    return fidelity_pure(output_state(spec, theta, pt, None), output_state(spec, theta, pt, noise))
