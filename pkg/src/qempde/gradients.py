"""Parameter-shift derivatives in theta and finite-difference derivatives in (x, t).

:func:`param_shift_grad_u` is the textbook rule: two full circuit runs per
parameter.  :func:`fields_and_param_shift` returns the same shifted
differences for every parameter and point at once.  It runs a Heisenberg
(backward) pass storing the propagated readout observable after every
parameterised block, then a forward pass; at each block the shifted
expectation ``Tr(O S_shift(rho))`` is a 16-term contraction with a 4x4
Gram matrix, so each ``u(theta +- pi/2 e_i)`` is exact but cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .ansatz import AnsatzSpec, Block, InputPoint, as_points, check_theta, compiled, evaluate_fields
from .errors import ConfigurationError
from .noise import NoiseConfig
from .qstate import zero_stack

SHIFT = np.pi / 2
MAX_CHUNK = 48


@dataclass(frozen=True)
class StencilConfig:
    h1: float = 1e-3
    h2: float = 1e-2

    def __post_init__(self):
        if not (0 < self.h1 < 0.1 and 0 < self.h2 < 0.1):
            raise ConfigurationError("stencil steps must lie in (0, 0.1)")


def param_shift_grad_u(spec: AnsatzSpec, theta, pt: InputPoint, noise: NoiseConfig | None, i: int) -> float:
    theta = check_theta(spec, theta)
    if not 0 <= i < theta.size:
        raise ConfigurationError(f"parameter index {i} out of range")
    plus, minus = theta.copy(), theta.copy()
    plus[i] += SHIFT
    minus[i] -= SHIFT
    up = evaluate_fields(spec, plus, pt, noise)[0, 0]
    um = evaluate_fields(spec, minus, pt, noise)[0, 0]
    return float((up - um) / 2)


def fields_and_param_shift(spec: AnsatzSpec, theta, points, noise: NoiseConfig | None = None):
    """Readout values ``(F, B)`` and their parameter-shift gradients ``(F, B, P)``."""
    pts = as_points(points)
    theta = check_theta(spec, theta)
    vals, grads = [], []
    for start in range(0, pts.shape[0], MAX_CHUNK):
        v, g = _chunk(spec, theta, pts[start:start + MAX_CHUNK], noise)
        vals.append(v)
        grads.append(g)
    return np.concatenate(vals, axis=1), np.concatenate(grads, axis=1)


def _chunk(spec, theta, pts, noise):
    circ = compiled(spec, noise)
    n, prog = spec.n_qubits, circ.program
    angles = spec.normalise(pts)
    b = angles.shape[0]
    supers = [np.ascontiguousarray(circ.block_superop(op, theta, angles)) if isinstance(op, Block) else None
              for op in prog]

    idx = np.arange(2**n)
    n_fields = len(spec.readouts)
    vals = np.empty((n_fields, b))
    grads = np.zeros((n_fields, b, spec.param_count))

    # backward: W is the transposed observable, W' = S^T acting in the same kernel
    stored: list[dict[int, np.ndarray]] = [dict() for _ in range(n_fields)]
    for f, (q, _, _) in enumerate(spec.readouts):
        w = np.zeros((b, 2**n, 2**n), dtype=complex)
        diag = 1.0 - 2.0 * ((idx >> (n - 1 - q)) & 1)
        w[:, idx, idx] = diag
        for k in range(len(prog) - 1, -1, -1):
            op = prog[k]
            if isinstance(op, Block):
                if op.params:
                    stored[f][k] = w.copy()
                K.superop_inplace(w, np.ascontiguousarray(np.swapaxes(supers[k], -1, -2)), op.qubit, n)
            else:
                K.cnot_inplace(w, op[1], op[2], n)

    rho = zero_stack(n, b)
    for k, op in enumerate(prog):
        if isinstance(op, Block):
            if op.params:
                shifted = circ.shifted_superops(op, theta, angles, SHIFT)
                for f in range(n_fields):
                    g = K.gram_1q(stored[f][k], rho, op.qubit, n)
                    scale = spec.readouts[f][1]
                    for i, (sp, sm) in shifted.items():
                        diff = np.sum((sp - sm) * g, axis=(-2, -1)).real
                        grads[f, :, i] = scale * diff / 2
                    del stored[f][k]
            K.superop_inplace(rho, supers[k], op.qubit, n)
        else:
            K.cnot_inplace(rho, op[1], op[2], n)
    diag = np.einsum("bii->bi", rho).real
    for f, (q, scale, offset) in enumerate(spec.readouts):
        sign = 1.0 - 2.0 * ((idx >> (n - 1 - q)) & 1)
        vals[f] = scale * (diag @ sign) + offset
    return vals, grads


# ---------------------------------------------------------------------------
# finite differences in the inputs

# stencil offsets in units of (h1, h2); the centre point comes first
STENCIL = {
    "u": (0, 0, 0),
    "x+": (1, 0, 1), "x-": (-1, 0, 1),      # first derivative in x, step h1
    "t+": (0, 1, 1), "t-": (0, -1, 1),      # first derivative in t, step h1
    "xx+": (1, 0, 2), "xx-": (-1, 0, 2),    # second derivative in x, step h2
}

DERIVATIVE_NEEDS = {
    "u": ("u",),
    "ux": ("x+", "x-"),
    "ut": ("t+", "t-"),
    "uxx": ("u", "xx+", "xx-"),
}


def recentre(pts: np.ndarray, spec_x: tuple[float, float], spec_t: tuple[float, float], s: StencilConfig) -> np.ndarray:
    """Shift stencil centres inward so every stencil point stays in the domain."""
    h = max(s.h1, s.h2)
    out = pts.copy()
    out[:, 0] = np.clip(out[:, 0], spec_x[0] + h, spec_x[1] - h)
    out[:, 1] = np.clip(out[:, 1], spec_t[0] + s.h1, spec_t[1] - s.h1)
    return out


def stencil_points(centres: np.ndarray, keys, s: StencilConfig) -> np.ndarray:
    """Stack of stencil points, key-major: rows ``[k*B:(k+1)*B]`` belong to ``keys[k]``."""
    rows = []
    for key in keys:
        dx, dt, which = STENCIL[key]
        h = (0.0, s.h1, s.h2)[which]
        rows.append(centres + np.array([dx * h, dt * h]))
    return np.concatenate(rows, axis=0)


def derivative_weights(s: StencilConfig) -> dict[str, dict[str, float]]:
    """Linear coefficients expressing each derivative in terms of stencil values."""
    return {
        "u": {"u": 1.0},
        "ux": {"x+": 1 / (2 * s.h1), "x-": -1 / (2 * s.h1)},
        "ut": {"t+": 1 / (2 * s.h1), "t-": -1 / (2 * s.h1)},
        "uxx": {"xx+": 1 / s.h2**2, "u": -2 / s.h2**2, "xx-": 1 / s.h2**2},
    }


def keys_for(derivs) -> list[str]:
    keys = []
    for d in derivs:
        for k in DERIVATIVE_NEEDS[d]:
            if k not in keys:
                keys.append(k)
    return keys


def combine(values: dict[str, np.ndarray], derivs, s: StencilConfig) -> dict[str, np.ndarray]:
    w = derivative_weights(s)
    return {d: sum(c * values[k] for k, c in w[d].items()) for d in derivs}


def field_derivatives(field_fn, centres, derivs, s: StencilConfig, x_range=(0.0, 1.0), t_range=(0.0, 1.0)):
    """Finite-difference derivatives of ``field_fn(points) -> (F, B)`` at ``centres``.

    Returns ``{name: (F, B) array}`` for the requested names among
    ``u, ux, ut, uxx``.
    """
    centres = recentre(np.atleast_2d(np.asarray(centres, float)), x_range, t_range, s)
    keys = keys_for(derivs)
    b = centres.shape[0]
    vals = np.atleast_2d(field_fn(stencil_points(centres, keys, s)))
    per_key = {k: vals[:, i * b:(i + 1) * b] for i, k in enumerate(keys)}
    return combine(per_key, derivs, s)


def input_derivatives(spec: AnsatzSpec, theta, pt: InputPoint, noise: NoiseConfig | None = None,
                      s: StencilConfig = StencilConfig(), field_fn=None):
    """``(u, du/dx, du/dt, d2u/dx2)`` at one point by central differences.

    ``field_fn`` replaces the circuit (used with analytic stubs); it maps an
    ``(B, 2)`` array of points to values of shape ``(B,)`` or ``(F, B)``.
    """
    if field_fn is None:
        def field_fn(p):
            return evaluate_fields(spec, theta, p, noise)
    d = field_derivatives(field_fn, as_points(pt), ("u", "ux", "ut", "uxx"), s, spec.x_range, spec.t_range)
    return tuple(float(d[k][0, 0]) for k in ("u", "ux", "ut", "uxx"))
