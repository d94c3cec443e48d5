"""Benchmark PDE problems, residuals and the composite training loss.

Every loss here is an explicit polynomial in circuit readouts at a fixed set
of points (collocation stencils plus data anchors), so the gradient in
theta is assembled exactly from ``dL/du(q)`` and the parameter-shift
Jacobian ``du(q)/dtheta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import reference as ref
from .ansatz import AnsatzSpec, InputPoint, evaluate_fields
from .errors import ConfigurationError
from .gradients import StencilConfig, combine, derivative_weights, fields_and_param_shift, keys_for, recentre, stencil_points
from .noise import NoiseConfig

KINDS = ("heat", "burgers", "saint_venant")
A_MIN = 1e-6

# which input derivatives each residual consumes, per output field
NEEDS = {
    "heat": ({"ut", "uxx"},),
    "burgers": ({"u", "ut", "ux", "uxx"},),
    "saint_venant": ({"u", "ut"}, {"u", "ux"}),
}


@dataclass(frozen=True, eq=False)
class PdeProblem:
    kind: str
    coefficients: dict
    x_range: tuple[float, float] = (0.0, 1.0)
    t_range: tuple[float, float] = (0.0, 1.0)
    n_collocation: int = 16
    data_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    data_values: np.ndarray = field(default_factory=lambda: np.zeros((1, 0)))  # (fields, anchors)
    lam: float = 1.0
    stencil: StencilConfig = StencilConfig()
    readouts: tuple[tuple[int, float, float], ...] = ((0, 1.0, 0.0),)
    # per-field divisor applied to data errors
    data_scales: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown PDE kind {self.kind!r}")
        if self.n_collocation < 4:
            raise ConfigurationError("need at least 4 collocation points")
        if self.lam < 0:
            raise ConfigurationError("physics weight must be non-negative")
        if any(not v > 0 for v in self.coefficients.values()):
            raise ConfigurationError("PDE coefficients must be strictly positive")
        for lo, hi in (self.x_range, self.t_range):
            if not hi > lo:
                raise ConfigurationError("degenerate domain")

    @property
    def n_fields(self) -> int:
        return len(self.readouts)

    def ansatz(self, variant: str = "unconstrained", n_qubits: int = 6, layers: int = 4) -> AnsatzSpec:
        return AnsatzSpec(n_qubits, layers, variant, self.x_range, self.t_range, self.readouts)

    def with_lambda(self, lam: float) -> "PdeProblem":
        return replace(self, lam=lam)

    def with_collocation(self, n: int) -> "PdeProblem":
        return replace(self, n_collocation=n)

    @property
    def q_scale(self) -> float:
        c = self.coefficients
        return float(ref.manning_discharge(1.0, c["n_manning"], c["b"], c["S0"]))


def _grid_shape(n: int) -> tuple[int, int]:
    nx = int(np.floor(np.sqrt(n)))
    while n % nx:
        nx -= 1
    return nx, n // nx


def collocation_grid(problem: PdeProblem) -> list[InputPoint]:
    return [InputPoint(float(x), float(t)) for x, t in collocation_array(problem)]


def collocation_array(problem: PdeProblem) -> np.ndarray:
    """Uniform interior tensor grid, x-major ordering, shape ``(N_c, 2)``."""
    nx, nt = _grid_shape(problem.n_collocation)
    (x0, x1), (t0, t1) = problem.x_range, problem.t_range
    xs = x0 + (x1 - x0) * np.arange(1, nx + 1) / (nx + 1)
    ts = t0 + (t1 - t0) * np.arange(1, nt + 1) / (nt + 1)
    return np.array([(x, t) for x in xs for t in ts])


# ---------------------------------------------------------------------------
# residuals (scalar or array inputs); the *_terms variants also return
# partial derivatives with respect to each derivative quantity


def residual_heat(u, ut, uxx, kappa):
    return ut - kappa * uxx


def residual_burgers(u, ut, ux, uxx, nu):
    return ut + u * ux - nu * uxx


def residual_saint_venant(area, discharge, at, qx, n_manning, b, s0, q_scale: float = 1.0):
    """``(At + Qx, (Q - Q_manning(A)) / q_scale)``; ``A`` is clamped at ``A_MIN``."""
    area = np.maximum(area, A_MIN)
    r1 = at + qx
    r2 = (discharge - ref.manning_discharge(area, n_manning, b, s0)) / q_scale
    return r1, r2


def dry_cells(area) -> np.ndarray:
    return np.asarray(area) <= A_MIN


def _residual_terms(problem: PdeProblem, d: list[dict[str, np.ndarray]]):
    """Residual arrays and ``{(field, derivative): dr/d(...)}`` partials."""
    c = problem.coefficients
    if problem.kind == "heat":
        r = residual_heat(None, d[0]["ut"], d[0]["uxx"], c["kappa"])
        return [r], [{(0, "ut"): 1.0, (0, "uxx"): -c["kappa"]}]
    if problem.kind == "burgers":
        u, ut, ux, uxx = d[0]["u"], d[0]["ut"], d[0]["ux"], d[0]["uxx"]
        r = residual_burgers(u, ut, ux, uxx, c["nu"])
        return [r], [{(0, "ut"): 1.0, (0, "u"): ux, (0, "ux"): u, (0, "uxx"): -c["nu"]}]
    qs = problem.q_scale
    area, at = d[0]["u"], d[0]["ut"]
    q, qx = d[1]["u"], d[1]["ux"]
    r1, r2 = residual_saint_venant(area, q, at, qx, c["n_manning"], c["b"], c["S0"], qs)
    dq_da = ref.manning_derivative(np.maximum(area, A_MIN), c["n_manning"], c["b"], c["S0"])
    dq_da = np.where(dry_cells(area), 0.0, dq_da)
    return [r1, r2], [{(0, "ut"): 1.0, (1, "ux"): 1.0}, {(1, "u"): 1.0 / qs, (0, "u"): -dq_da / qs}]


def _stencil_keys(problem: PdeProblem) -> list[list[str]]:
    return [keys_for(sorted(need)) for need in NEEDS[problem.kind]]


def _all_keys(problem: PdeProblem) -> list[str]:
    keys: list[str] = []
    for ks in _stencil_keys(problem):
        keys += [k for k in ks if k not in keys]
    return keys


@dataclass
class LossPoints:
    """All evaluation points of a problem's loss, in a fixed order."""

    centres: np.ndarray
    keys: list[str]
    stencil: np.ndarray
    anchors: np.ndarray

    @property
    def all(self) -> np.ndarray:
        return np.concatenate([self.stencil, self.anchors], axis=0)


def loss_points(problem: PdeProblem) -> LossPoints:
    centres = recentre(collocation_array(problem), problem.x_range, problem.t_range, problem.stencil)
    keys = _all_keys(problem)
    return LossPoints(centres, keys, stencil_points(centres, keys, problem.stencil), problem.data_points)


@dataclass
class LossParts:
    total: float
    data: float
    phys: float
    # dL/d(value) per field at every loss point, shape (F, N_points)
    dvalues: np.ndarray
    residuals: list[np.ndarray]
    dry: bool = False


def loss_from_values(problem: PdeProblem, lp: LossPoints, values: np.ndarray) -> LossParts:
    """Losses and their value-sensitivities from readouts at ``lp.all``."""
    nc = lp.centres.shape[0]
    s = problem.stencil
    w = derivative_weights(s)
    n_sten = len(lp.keys) * nc
    per_key = [{k: values[f, i * nc:(i + 1) * nc] for i, k in enumerate(lp.keys)} for f in range(problem.n_fields)]
    derivs = [combine(per_key[f], sorted(NEEDS[problem.kind][f]), s) for f in range(problem.n_fields)]
    residuals, partials = _residual_terms(problem, derivs)

    phys = float(sum(np.mean(r**2) for r in residuals))
    dvals = np.zeros_like(values)
    for r, parts in zip(residuals, partials):
        coef = 2.0 * r / nc
        for (f, dname), dr in parts.items():
            for key, wk in w[dname].items():
                i = lp.keys.index(key)
                dvals[f, i * nc:(i + 1) * nc] += problem.lam * coef * dr * wk

    data = 0.0
    na = lp.anchors.shape[0]
    if na:
        for f in range(problem.n_fields):
            err = (values[f, n_sten:] - problem.data_values[f]) / problem.data_scales[f]
            data += float(np.mean(err**2))
            dvals[f, n_sten:] += 2.0 * err / problem.data_scales[f] / na
    dry = problem.kind == "saint_venant" and bool(np.any(dry_cells(derivs[0]["u"])))
    return LossParts(data + problem.lam * phys, data, phys, dvals, residuals, dry)


FieldFn = Callable[[np.ndarray], np.ndarray]


def _values(spec, theta, problem, noise, field_fn: FieldFn | None, points: np.ndarray) -> np.ndarray:
    if field_fn is not None:
        return np.atleast_2d(field_fn(points))
    return evaluate_fields(spec, theta, points, noise)


def loss_parts(spec, theta, problem: PdeProblem, noise: NoiseConfig | None = None,
               field_fn: FieldFn | None = None) -> LossParts:
    lp = loss_points(problem)
    return loss_from_values(problem, lp, _values(spec, theta, problem, noise, field_fn, lp.all))


def physics_loss(spec, theta, problem: PdeProblem, noise: NoiseConfig | None = None,
                 field_fn: FieldFn | None = None) -> float:
    """Mean squared residual over the collocation grid (summed over residual components)."""
    return loss_parts(spec, theta, problem, noise, field_fn).phys


def total_loss(spec, theta, problem: PdeProblem, noise: NoiseConfig | None = None,
               field_fn: FieldFn | None = None) -> float:
    return loss_parts(spec, theta, problem, noise, field_fn).total


def residual_samples(spec, theta, problem: PdeProblem, noise: NoiseConfig | None = None,
                     field_fn: FieldFn | None = None) -> list[tuple[InputPoint, tuple[float, ...]]]:
    parts = loss_parts(spec, theta, problem, noise, field_fn)
    centres = loss_points(problem).centres
    return [(InputPoint(float(x), float(t)), tuple(float(r[i]) for r in parts.residuals))
            for i, (x, t) in enumerate(centres)]


def loss_and_gradient(spec, theta, problem: PdeProblem, noise: NoiseConfig | None = None,
                      zne_scales: tuple[float, ...] | None = None) -> tuple[LossParts, np.ndarray]:
    """Loss and its exact theta-gradient.

    With ``zne_scales`` the readouts entering the loss are Richardson
    extrapolations over noise strengths ``c * p``, and so is their Jacobian.
    """
    lp = loss_points(problem)
    if zne_scales is None or noise is None or noise.is_trivial:
        vals, jac = fields_and_param_shift(spec, theta, lp.all, noise)
    else:
        from .mitigation import richardson_weights

        weights = richardson_weights(zne_scales)
        vals = jac = 0.0
        for c, wc in zip(zne_scales, weights):
            v, j = fields_and_param_shift(spec, theta, lp.all, noise.scaled(c))
            vals = vals + wc * v
            jac = jac + wc * j
    parts = loss_from_values(problem, lp, vals)
    grad = np.einsum("fn,fnp->p", parts.dvalues, jac)
    return parts, grad


# ---------------------------------------------------------------------------
# problem builders


def anchor_grid(x_range, t_range) -> np.ndarray:
    """4 x 4 data anchors: x at cell centres of a 4-cell split, t at 0, 1/3, 2/3, 1."""
    (x0, x1), (t0, t1) = x_range, t_range
    xs = x0 + (x1 - x0) * (np.arange(4) + 0.5) / 4
    ts = t0 + (t1 - t0) * np.arange(4) / 3
    return np.array([(x, t) for x in xs for t in ts])


def heat_problem(kappa: float = 0.1, **kw) -> PdeProblem:
    pts = anchor_grid((0.0, 1.0), (0.0, 1.0))
    vals = ref.heat_exact(pts[:, 0], pts[:, 1], kappa)[None]
    return PdeProblem("heat", {"kappa": kappa}, data_points=pts, data_values=vals, **kw)


def burgers_problem(nu: float = 0.01 / np.pi, **kw) -> PdeProblem:
    pts = anchor_grid((0.0, 1.0), (0.0, 1.0))
    vals = ref.burgers_reference(nu)("u", pts)[None]
    return PdeProblem("burgers", {"nu": nu}, data_points=pts, data_values=vals, **kw)


def saint_venant_problem(n_manning: float = 0.03, b: float = 1.0, s0: float = 1e-3, **kw) -> PdeProblem:
    field = ref.saint_venant_reference(n_manning, b, s0)
    pts = anchor_grid((0.0, 1.0), (0.0, 1.0))
    q_ref = float(ref.manning_discharge(1.0, n_manning, b, s0))
    vals = np.vstack([field("A", pts), field("Q", pts)])
    readouts = ((0, 0.2, 1.0), (1, 0.5 * q_ref, q_ref))
    return PdeProblem("saint_venant", {"n_manning": n_manning, "b": b, "S0": s0}, data_points=pts,
                      data_values=vals, readouts=readouts, data_scales=(1.0, q_ref), **kw)


BUILDERS = {"heat": heat_problem, "burgers": burgers_problem, "saint_venant": saint_venant_problem}


def make_problem(kind: str, **kw) -> PdeProblem:
    try:
        return BUILDERS[kind](**kw)
    except KeyError:
        raise ConfigurationError(f"unknown PDE {kind!r}; expected one of {KINDS}") from None


def reference_fields(problem: PdeProblem, points) -> np.ndarray:
    """Reference solution readouts at ``points``, shape ``(F, B)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = problem.coefficients
    if problem.kind == "heat":
        return ref.heat_exact(pts[:, 0], pts[:, 1], c["kappa"])[None]
    if problem.kind == "burgers":
        return ref.burgers_reference(c["nu"])("u", pts)[None]
    f = ref.saint_venant_reference(c["n_manning"], c["b"], c["S0"])
    return np.vstack([f("A", pts), f("Q", pts)])
