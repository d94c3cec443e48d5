"""Exact mixed-state simulation on dense density matrices.

Basis ordering: qubit 0 is the most significant bit, so the computational
basis index of ``|b_0 b_1 ... b_{n-1}>`` is ``sum_q b_q * 2**(n-1-q)``.

Two layers live here.  The array kernels (``apply_1q``, ``apply_cnot``,
``apply_channel_1q`` and friends) act in place-free fashion on stacks of
density matrices shaped ``(B, D, D)`` and are what the circuit code uses.
The :class:`DensityMatrix` wrapper and the single-state operations
(:func:`apply_gate`, :func:`apply_kraus`, :func:`expectation`,
:func:`fidelity_pure`) form the checked public surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ValidationError

MAX_QUBITS = 12
TRACE_TOL = 1e-9
HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}

GATE_KINDS = ("RX", "RY", "RZ", "CNOT")

_validate_mode = False


def set_validation(enabled: bool) -> None:
    """Turn the eigenvalue-based PSD check on or off for :class:`DensityMatrix`."""
    global _validate_mode
    _validate_mode = bool(enabled)


def validation_enabled() -> bool:
    return _validate_mode


# ---------------------------------------------------------------------------
# gate matrices


def rx(theta):
    """RX matrix; ``theta`` may be a scalar or a 1-D array (returns ``(B, 2, 2)``)."""
    c, s = np.cos(np.asarray(theta) / 2), np.sin(np.asarray(theta) / 2)
    return np.stack([np.stack([c, -1j * s], -1), np.stack([-1j * s, c], -1)], -2).astype(complex)


def ry(theta):
    c, s = np.cos(np.asarray(theta) / 2), np.sin(np.asarray(theta) / 2)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2).astype(complex)


def rz(theta):
    e = np.exp(-0.5j * np.asarray(theta))
    zero = np.zeros_like(e)
    return np.stack([np.stack([e, zero], -1), np.stack([zero, np.conj(e)], -1)], -2)


ROTATIONS = {"RX": rx, "RY": ry, "RZ": rz}


@lru_cache(maxsize=None)
def cnot_permutation(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(2**n)
    cbit = (idx >> (n - 1 - control)) & 1
    return idx ^ (cbit << (n - 1 - target))


# ---------------------------------------------------------------------------
# batched kernels on (B, D, D) stacks


def apply_1q(rho: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    """Return ``U_q rho U_q^dagger`` for every matrix in the stack.

    ``u`` is ``(2, 2)`` (shared) or ``(B, 2, 2)`` (one per stack entry).
    Cost is O(B * 4**n); no 2**n x 2**n unitary is ever formed.
    """
    b, d = rho.shape[0], rho.shape[1]
    left, right = 2**q, 2 ** (n - 1 - q)
    batched = u.ndim == 3
    ul = u[:, None] if batched else u
    out = np.matmul(ul, rho.reshape(b, left, 2, right * d))
    out = out.reshape(b, d * left, 2, right)
    out = np.matmul(ul.conj(), out)
    return out.reshape(b, d, d)


def apply_cnot(rho: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    perm = cnot_permutation(n, control, target)
    return rho[:, perm][:, :, perm]


def apply_kraus_1q(rho: np.ndarray, ops: Sequence[np.ndarray], q: int, n: int) -> np.ndarray:
    """``sum_k E_k rho E_k^dagger`` with each ``E_k`` acting on qubit ``q``.

    The two-sided product is the same contraction as :func:`apply_1q`; it is
    valid for non-unitary ``E_k`` because only ``E`` and ``conj(E)`` enter.
    """
    out = np.zeros_like(rho)
    for e in ops:
        out += apply_1q(rho, e, q, n)
    return out


def apply_kraus_adjoint_1q(obs: np.ndarray, ops: Sequence[np.ndarray], q: int, n: int) -> np.ndarray:
    """Heisenberg-picture channel: ``sum_k E_k^dagger O E_k``."""
    return apply_kraus_1q(obs, [e.conj().T for e in ops], q, n)


def z_expectations(rho: np.ndarray, q: int, n: int) -> np.ndarray:
    """``<Z_q>`` for each matrix in the stack (real part of the diagonal sum)."""
    diag = np.einsum("bii->bi", rho).real
    sign = 1.0 - 2.0 * ((np.arange(2**n) >> (n - 1 - q)) & 1)
    return diag @ sign


def trace_products(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``Tr(a_k b_k)`` for stacks of square matrices."""
    return np.einsum("bij,bji->b", a, b)


def zero_stack(n: int, batch: int) -> np.ndarray:
    rho = np.zeros((batch, 2**n, 2**n), dtype=complex)
    rho[:, 0, 0] = 1.0
    return rho


# ---------------------------------------------------------------------------
# public single-state surface


@dataclass(frozen=True)
class GateOp:
    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigurationError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind == "CNOT":
            if len(self.targets) != 2 or self.angle is not None:
                raise ConfigurationError("CNOT takes two targets and no angle")
            if self.targets[0] == self.targets[1]:
                raise ConfigurationError("CNOT control and target must differ")
        else:
            if len(self.targets) != 1 or self.angle is None:
                raise ConfigurationError(f"{self.kind} takes one target and one angle")
            if not np.isfinite(self.angle):
                raise ConfigurationError("rotation angle must be finite")

    def check(self, n_qubits: int) -> None:
        if any(t < 0 or t >= n_qubits for t in self.targets):
            raise ConfigurationError(f"{self.kind} targets {self.targets} invalid for {n_qubits} qubits")

    def matrix(self) -> np.ndarray:
        """Local unitary: 2x2 for rotations, 4x4 (control first) for CNOT."""
        if self.kind == "CNOT":
            return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
        return ROTATIONS[self.kind](self.angle)


@dataclass(frozen=True)
class PauliObservable:
    factors: str

    def __post_init__(self):
        f = self.factors.upper()
        if not f or any(c not in PAULIS for c in f):
            raise ConfigurationError(f"bad Pauli string {self.factors!r}")
        object.__setattr__(self, "factors", f)

    @classmethod
    def z(cls, q: int, n: int) -> "PauliObservable":
        return cls("I" * q + "Z" + "I" * (n - q - 1))

    @property
    def n_qubits(self) -> int:
        return len(self.factors)

    def matrix(self) -> np.ndarray:
        m = np.ones((1, 1), dtype=complex)
        for c in self.factors:
            m = np.kron(m, PAULIS[c])
        return m


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Immutable 2^n x 2^n density matrix.

    Construction checks Hermiticity and unit trace; the PSD eigenvalue check
    only runs when validation mode is on (see :func:`set_validation`).
    """

    n_qubits: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.n_qubits
        if not 1 <= n <= MAX_QUBITS:
            raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n}")
        data = np.array(self.data, dtype=complex)
        d = 2**n
        if data.shape != (d, d):
            raise ConfigurationError(f"expected shape {(d, d)}, got {data.shape}")
        if np.max(np.abs(data - data.conj().T)) > HERMITIAN_TOL:
            raise ValidationError("density matrix is not Hermitian")
        if abs(np.trace(data) - 1) > TRACE_TOL:
            raise ValidationError(f"trace {np.trace(data).real:.3e} differs from 1")
        if _validate_mode and np.linalg.eigvalsh(data).min() < -PSD_TOL:
            raise ValidationError("density matrix is not positive semidefinite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_statevector(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        n = int(round(np.log2(psi.size)))
        return cls(n, np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, n: int) -> "DensityMatrix":
        return cls(n, np.eye(2**n) / 2**n)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def purity(self) -> float:
        return float(np.einsum("ij,ji->", self.data, self.data).real)

    def bloch_vector(self, q: int = 0) -> np.ndarray:
        """Bloch vector ``(<X_q>, <Y_q>, <Z_q>)`` of one qubit."""
        n = self.n_qubits
        return np.array([expectation(self, PauliObservable("I" * q + c + "I" * (n - q - 1))) for c in "XYZ"])

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def zero_state(n: int) -> DensityMatrix:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
        raise ConfigurationError(f"n must be an integer in [1, {MAX_QUBITS}], got {n!r}")
    return DensityMatrix(int(n), zero_stack(int(n), 1)[0])


def apply_gate(rho: DensityMatrix, g: GateOp) -> DensityMatrix:
    n = rho.n_qubits
    g.check(n)
    stack = rho.data[None]
    if g.kind == "CNOT":
        out = apply_cnot(stack, g.targets[0], g.targets[1], n)
    else:
        out = apply_1q(stack, g.matrix(), g.targets[0], n)
    return DensityMatrix(n, out[0])


def apply_kraus(rho: DensityMatrix, k, target: int) -> DensityMatrix:
    """Apply a single-qubit Kraus channel (a :class:`qempde.noise.KrausSet`) on ``target``."""
    n = rho.n_qubits
    if not 0 <= target < n:
        raise ConfigurationError(f"target {target} invalid for {n} qubits")
    ops = list(k.operators)
    check_completeness(ops)
    return DensityMatrix(n, apply_kraus_1q(rho.data[None], ops, target, n)[0])


def check_completeness(ops: Sequence[np.ndarray], tol: float = 1e-12) -> None:
    if not ops:
        raise ValidationError("empty Kraus set")
    s = sum(e.conj().T @ e for e in ops)
    if np.max(np.abs(s - np.eye(s.shape[0]))) > tol:
        raise ValidationError("Kraus operators are not trace preserving")


def expectation(rho: DensityMatrix, obs: PauliObservable) -> float:
    if obs.n_qubits != rho.n_qubits:
        raise ConfigurationError(f"observable on {obs.n_qubits} qubits, state on {rho.n_qubits}")
    val = np.einsum("ij,ji->", obs.matrix(), rho.data)
    assert abs(val.imag) <= 1e-10, "Pauli expectation has an imaginary part"
    return float(val.real)


def fidelity_pure(rho_ideal: DensityMatrix, rho_noisy: DensityMatrix) -> float:
    """``<psi|rho_noisy|psi>`` where ``rho_ideal = |psi><psi|`` must be pure."""
    if rho_ideal.n_qubits != rho_noisy.n_qubits:
        raise ConfigurationError("fidelity between states of different size")
    if rho_ideal.purity() < 1 - 1e-8:
        raise ValidationError("reference state for fidelity_pure is not pure")
    f = float(np.einsum("ij,ji->", rho_ideal.data, rho_noisy.data).real)
    return min(max(f, 0.0), 1.0)


def full_unitary(g: GateOp, n: int) -> np.ndarray:
    """Dense 2^n x 2^n unitary of ``g`` built from Kronecker products.

    Independent reference for the local kernels; exponential in ``n``.
    """
    g.check(n)
    if g.kind != "CNOT":
        mats = [I2] * n
        mats[g.targets[0]] = g.matrix()
        u = np.ones((1, 1), dtype=complex)
        for m in mats:
            u = np.kron(u, m)
        return u
    c, t = g.targets
    p0 = np.diag([1, 0]).astype(complex)
    p1 = np.diag([0, 1]).astype(complex)
    a, b = [I2] * n, [I2] * n
    a[c] = p0
    b[c], b[t] = p1, X
    ua = ub = np.ones((1, 1), dtype=complex)
    for m1, m2 in zip(a, b):
        ua, ub = np.kron(ua, m1), np.kron(ub, m2)
    return ua + ub
