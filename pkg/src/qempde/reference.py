"""Classical reference solutions for the three benchmark problems.

Heat has a closed form.  Burgers and the kinematic-wave form of Saint-Venant
are integrated on fine grids (finite volumes, minmod-limited MUSCL fluxes,
SSP-RK2 in time) and stored on a coarse tabulation grid that can be cached
to CSV with columns ``x, t, <field>...``.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

TABLE_NX = 201
TABLE_NT = 101


def heat_exact(x, t, kappa: float):
    """``exp(-kappa pi^2 t) sin(pi x)``: IC ``sin(pi x)``, zero Dirichlet ends on [0, 1]."""
    return np.exp(-kappa * np.pi**2 * np.asarray(t)) * np.sin(np.pi * np.asarray(x))


def manning_discharge(area, n_manning: float, width: float, slope: float):
    """Manning discharge for a rectangular channel."""
    area = np.asarray(area, dtype=float)
    rh = area / (width + 2.0 * area / width)
    return area * rh ** (2.0 / 3.0) * np.sqrt(slope) / n_manning


def manning_derivative(area, n_manning: float, width: float, slope: float):
    """``dQ/dA`` of :func:`manning_discharge`."""
    area = np.asarray(area, dtype=float)
    perim = width + 2.0 * area / width
    rh = area / perim
    drh = (perim - area * 2.0 / width) / perim**2
    return np.sqrt(slope) / n_manning * (rh ** (2.0 / 3.0) + area * (2.0 / 3.0) * rh ** (-1.0 / 3.0) * drh)


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _muscl_faces(u_ext):
    """Left/right states at interior faces from ghost-padded cell averages."""
    slope = _minmod(u_ext[1:-1] - u_ext[:-2], u_ext[2:] - u_ext[1:-1])
    left = u_ext[1:-1] + 0.5 * slope
    right = u_ext[1:-1] - 0.5 * slope
    return left[:-1], right[1:]


def burgers_fd(nu: float, nx: int = 2000, t_end: float = 1.0, n_out: int = TABLE_NT):
    """Viscous Burgers on [0, 1], ``u0 = -sin(pi x)``, ``u(0) = u(1) = 0``.

    Returns ``(x_cells, t_out, u[t, x])``.
    """
    dx = 1.0 / nx
    x = (np.arange(nx) + 0.5) * dx
    u = -np.sin(np.pi * x)
    dt = 0.4 * min(dx / 1.0, dx * dx / (2 * nu))
    t_out = np.linspace(0.0, t_end, n_out)
    out = np.empty((n_out, nx))
    out[0] = u

    def rhs(u):
        ext = np.concatenate([[-u[1], -u[0]], u, [-u[-1], -u[-2]]])  # odd reflection: u = 0 on the walls
        ul, ur = _muscl_faces(ext)
        # Godunov flux for f(u) = u^2 / 2
        fl, fr = 0.5 * ul**2, 0.5 * ur**2
        flux = np.where(ul > ur, np.maximum(fl, fr), np.where(ul > 0, fl, np.where(ur < 0, fr, 0.0)))
        inner = ext[1:-1]
        visc = nu * (inner[2:] - 2 * inner[1:-1] + inner[:-2]) / dx**2
        return -(flux[1:] - flux[:-1]) / dx + visc

    _integrate(u, rhs, dt, t_out, out)
    return x, t_out, out


def saint_venant_fd(n_manning: float, width: float, slope: float, nx: int = 2000, t_end: float = 1.0,
                    n_out: int = TABLE_NT, bump: float = 0.1, centre: float = 0.3, spread: float = 0.1):
    """Kinematic-wave Saint-Venant ``A_t + Q(A)_x = 0`` with Manning ``Q(A)`` on [0, 1].

    Initial area is 1 plus a Gaussian bump; the inflow boundary holds ``A = 1``.
    Returns ``(x_cells, t_out, A[t, x])``.
    """
    dx = 1.0 / nx
    x = (np.arange(nx) + 0.5) * dx
    a = initial_area(x, bump, centre, spread)
    cmax = float(np.max(manning_derivative(a, n_manning, width, slope)))
    dt = 0.4 * dx / cmax
    t_out = np.linspace(0.0, t_end, n_out)
    out = np.empty((n_out, nx))
    out[0] = a

    def rhs(a):
        ext = np.concatenate([[1.0, 1.0], a, [a[-1], a[-1]]])
        al, _ = _muscl_faces(ext)
        flux = manning_discharge(al, n_manning, width, slope)  # wave speed > 0: upwind = left state
        return -(flux[1:] - flux[:-1]) / dx

    _integrate(a, rhs, dt, t_out, out)
    return x, t_out, out


def initial_area(x, bump: float = 0.1, centre: float = 0.3, spread: float = 0.1):
    return 1.0 + bump * np.exp(-(((np.asarray(x) - centre) / spread) ** 2))


def _integrate(u, rhs, dt, t_out, out):
    t = 0.0
    for k in range(1, t_out.size):
        while t < t_out[k] - 1e-14:
            h = min(dt, t_out[k] - t)
            u1 = u + h * rhs(u)
            u = 0.5 * (u + u1 + h * rhs(u1))
            t += h
        out[k] = u


@dataclass
class ReferenceField:
    """Tabulated reference solution with bilinear interpolation in (x, t)."""

    x: np.ndarray
    t: np.ndarray
    values: dict[str, np.ndarray]  # name -> array[t, x]

    def __post_init__(self):
        self._interp = {k: RegularGridInterpolator((self.t, self.x), v, bounds_error=False, fill_value=None)
                        for k, v in self.values.items()}

    def __call__(self, name: str, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self._interp[name](pts[:, ::-1])

    def to_csv(self, path) -> None:
        names = list(self.values)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "t", *names])
            for it, tv in enumerate(self.t):
                for ix, xv in enumerate(self.x):
                    w.writerow([repr(float(xv)), repr(float(tv)), *(repr(float(self.values[k][it, ix])) for k in names)])

    @classmethod
    def from_csv(cls, path) -> "ReferenceField":
        data = np.genfromtxt(path, delimiter=",", names=True)
        x = np.unique(data["x"])
        t = np.unique(data["t"])
        names = [n for n in data.dtype.names if n not in ("x", "t")]
        values = {n: data[n].reshape(t.size, x.size) for n in names}
        return cls(x, t, values)


def _tabulate(x_cells, t_out, fields: dict[str, np.ndarray], left=None, right=None) -> ReferenceField:
    """Resample cell averages onto ``TABLE_NX`` nodes spanning [0, 1]."""
    xs = np.linspace(0.0, 1.0, TABLE_NX)
    vals = {}
    for name, arr in fields.items():
        lo = arr[:, 0] if left is None else np.full(arr.shape[0], left)
        hi = arr[:, -1] if right is None else np.full(arr.shape[0], right)
        xe = np.concatenate([[0.0], x_cells, [1.0]])
        vals[name] = np.array([np.interp(xs, xe, np.concatenate([[lo[k]], arr[k], [hi[k]]])) for k in range(arr.shape[0])])
    return ReferenceField(xs, t_out, vals)


def cache_dir() -> Path:
    return Path(os.environ.get("QEMPDE_CACHE", Path.home() / ".cache" / "qempde"))


def cached(name: str, build) -> ReferenceField:
    """Load ``name`` from the cache directory or build and store it."""
    path = cache_dir() / f"{name}.csv"
    if path.exists():
        try:
            return ReferenceField.from_csv(path)
        except (OSError, ValueError):
            pass
    field = build()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        field.to_csv(tmp)
        tmp.replace(path)
    except OSError:
        pass
    return field


def burgers_reference(nu: float) -> ReferenceField:
    def build():
        x, t, u = burgers_fd(nu)
        return _tabulate(x, t, {"u": u}, left=0.0, right=0.0)
    return cached(f"burgers_nu{nu:.6g}", build)


def saint_venant_reference(n_manning: float, width: float, slope: float) -> ReferenceField:
    def build():
        x, t, a = saint_venant_fd(n_manning, width, slope)
        q = manning_discharge(a, n_manning, width, slope)
        return _tabulate(x, t, {"A": a, "Q": q})
    return cached(f"saint_venant_n{n_manning:.6g}_b{width:.6g}_s{slope:.6g}", build)


def heat_reference(kappa: float) -> ReferenceField:
    xs = np.linspace(0.0, 1.0, TABLE_NX)
    ts = np.linspace(0.0, 1.0, TABLE_NT)
    return ReferenceField(xs, ts, {"u": heat_exact(xs[None, :], ts[:, None], kappa)})
