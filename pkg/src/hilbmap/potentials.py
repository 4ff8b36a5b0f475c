"""Metric potentials relative to the Fubini-Study reference.

Radial (S^1-invariant) potentials are sampled on a compactified grid
x = e^s / (1 + e^s) in [0, 1], where s = log|z|^2.  The grid may be graded:
nodes are uniform in an auxiliary variable xi and mapped through a smooth
bijection x = G(xi), so that bump-like data near a pole stays resolved.
Derivatives in x are obtained from uniform finite differences in xi by the
chain rule.

General potentials are real combinations of {radial B-spline profile} x
{Fourier mode in theta}; their derivatives are evaluated analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline, CubicSpline


# ---------------------------------------------------------------------------
# grid maps


@dataclass(frozen=True)
class GridMap:
    """Smooth increasing bijection G: [0,1] -> [0,1] with G' > 0.

    name 'uniform' is the identity; 'exp' clusters nodes near x = 0 with
    strength beta (mirror=True clusters near x = 1 instead).
    """

    name: str = "uniform"
    beta: float = 0.0
    mirror: bool = False

    def _exp(self, xi):
        b = self.beta
        return np.expm1(b * xi) / np.expm1(b)

    def _dexp(self, xi):
        b = self.beta
        return b * np.exp(b * xi) / np.expm1(b)

    def forward(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.name == "uniform":
            return xi.copy()
        t = 1.0 - xi if self.mirror else xi
        x = self._exp(t)
        return 1.0 - x if self.mirror else x

    def dforward(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.name == "uniform":
            return np.ones_like(xi)
        t = 1.0 - xi if self.mirror else xi
        return self._dexp(t)

    def d2forward(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.name == "uniform":
            return np.zeros_like(xi)
        t = 1.0 - xi if self.mirror else xi
        d2 = self.beta * self._dexp(t)
        return -d2 if self.mirror else d2

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        if self.name == "uniform":
            return x.copy()
        t = 1.0 - x if self.mirror else x
        xi = np.log1p(t * np.expm1(self.beta)) / self.beta
        return 1.0 - xi if self.mirror else xi

    def to_json(self):
        return {"name": self.name, "beta": self.beta, "mirror": self.mirror}

    @classmethod
    def from_json(cls, obj):
        return cls(name=obj.get("name", "uniform"), beta=obj.get("beta", 0.0),
                   mirror=obj.get("mirror", False))


class RadialGrid:
    """Nodes uniform in xi, mapped to x = G(xi); endpoints included."""

    def __init__(self, n: int = 1025, grid_map: GridMap = GridMap()):
        if n < 8:
            raise ValueError("radial grid needs at least 8 nodes")
        self.n = n
        self.map = grid_map
        self.xi = np.linspace(0.0, 1.0, n)
        self.h = self.xi[1] - self.xi[0]
        self.x = grid_map.forward(self.xi)
        self.gp = grid_map.dforward(self.xi)
        self.gpp = grid_map.d2forward(self.xi)

    def __eq__(self, other):
        return (isinstance(other, RadialGrid) and self.n == other.n
                and self.map == other.map)

    def __hash__(self):
        return hash((self.n, self.map))

    # second-order finite differences in xi, one-sided at the endpoints
    def d_xi(self, v):
        v = np.asarray(v, dtype=float)
        out = np.empty_like(v)
        h = self.h
        out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
        out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
        return out

    def d2_xi(self, v):
        v = np.asarray(v, dtype=float)
        out = np.empty_like(v)
        h2 = self.h ** 2
        out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h2
        out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h2
        out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h2
        return out

    def dx(self, v):
        return self.d_xi(v) / self.gp

    def dxx(self, v):
        d1 = self.d_xi(v)
        return (self.d2_xi(v) - d1 * self.gpp / self.gp) / self.gp ** 2

    def diff_matrices(self):
        """Sparse d/dxi and d^2/dxi^2 with the same stencils as d_xi/d2_xi."""
        from scipy.sparse import lil_matrix

        n, h = self.n, self.h
        d1 = lil_matrix((n, n))
        d2 = lil_matrix((n, n))
        for i in range(1, n - 1):
            d1[i, i - 1], d1[i, i + 1] = -0.5 / h, 0.5 / h
            d2[i, i - 1], d2[i, i], d2[i, i + 1] = 1 / h**2, -2 / h**2, 1 / h**2
        d1[0, 0], d1[0, 1], d1[0, 2] = -1.5 / h, 2 / h, -0.5 / h
        d1[-1, -1], d1[-1, -2], d1[-1, -3] = 1.5 / h, -2 / h, 0.5 / h
        d2[0, 0], d2[0, 1], d2[0, 2], d2[0, 3] = 2 / h**2, -5 / h**2, 4 / h**2, -1 / h**2
        d2[-1, -1], d2[-1, -2], d2[-1, -3], d2[-1, -4] = 2 / h**2, -5 / h**2, 4 / h**2, -1 / h**2
        return d1.tocsr(), d2.tocsr()

    def to_json(self):
        return {"n": self.n, "map": self.map.to_json()}

    @classmethod
    def from_json(cls, obj):
        return cls(n=obj["n"], grid_map=GridMap.from_json(obj["map"]))


def default_grid(n: int = 1025) -> RadialGrid:
    return RadialGrid(n=n)


def graded_grid(x_scale: float, n: int = 2049, pole: str = "zero",
                target_fraction: float = 0.35) -> RadialGrid:
    """Grid whose first target_fraction of nodes covers [0, x_scale].

    Used to resolve densities concentrated within |z| < eps of a pole.
    """
    if not 0 < x_scale < 1:
        raise ValueError("x_scale must lie in (0, 1)")
    if x_scale >= target_fraction:
        return RadialGrid(n=n)
    from scipy.optimize import brentq

    def gap(beta):
        return np.log1p(x_scale * np.expm1(beta)) / beta - target_fraction

    beta = brentq(gap, 1e-8, 200.0, xtol=1e-10)
    return RadialGrid(n=n, grid_map=GridMap("exp", beta=beta, mirror=(pole == "inf")))


# ---------------------------------------------------------------------------
# radial functions and potentials


class RadialFunction:
    """Real function of x sampled on a RadialGrid; dtheta-derivatives vanish."""

    is_radial = True

    def __init__(self, grid: RadialGrid, values):
        values = np.asarray(values, dtype=float).copy()
        if values.shape != (grid.n,):
            raise ValueError(f"expected {grid.n} samples, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("radial samples must be finite (finite limits at both poles)")
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self._splines = {}

    def _spline(self, order: int = 0) -> CubicSpline:
        if 0 not in self._splines:
            self._splines[0] = CubicSpline(self.grid.xi, self.values)
        if order not in self._splines:
            self._splines[order] = self._splines[0].derivative(order)
        return self._splines[order]

    def at_xi(self, xi, order: int = 0):
        return self._spline(order)(xi)

    def value_at_x(self, x):
        return self.at_xi(self.grid.map.inverse(x))

    def dx_at_x(self, x):
        xi = self.grid.map.inverse(x)
        return self.at_xi(xi, 1) / self.grid.map.dforward(xi)

    def dxx_at_x(self, x):
        xi = self.grid.map.inverse(x)
        gp = self.grid.map.dforward(xi)
        gpp = self.grid.map.d2forward(xi)
        return (self.at_xi(xi, 2) - self.at_xi(xi, 1) * gpp / gp) / gp ** 2

    def fields(self, x, theta):
        """(value, d/dx, d^2/dx^2, d^2/dtheta^2) broadcast to (len x, len theta)."""
        shape = (len(x), len(theta))
        col = lambda a: np.broadcast_to(np.asarray(a)[:, None], shape)
        return (col(self.value_at_x(x)), col(self.dx_at_x(x)),
                col(self.dxx_at_x(x)), np.zeros(shape))

    def with_values(self, values):
        return type(self)(self.grid, values)

    def resample(self, grid: RadialGrid):
        if grid == self.grid:
            return self
        return type(self)(grid, self.value_at_x(grid.x))

    def __add__(self, other):
        if isinstance(other, RadialFunction):
            if other.grid != self.grid:
                raise ValueError("grids differ; resample first")
            return type(self)(self.grid, self.values + other.values)
        return type(self)(self.grid, self.values + float(other))

    def __mul__(self, scalar):
        return type(self)(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def to_json(self):
        return {"kind": "radial", "grid": self.grid.to_json(),
                "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(RadialGrid.from_json(obj["grid"]), np.array(obj["values"]))


class RadialPotential(RadialFunction):
    """A radial Kahler potential phi against the Fubini-Study reference."""


def zero_potential(grid: RadialGrid | None = None) -> RadialPotential:
    grid = grid or default_grid()
    return RadialPotential(grid, np.zeros(grid.n))


def constant_potential(c: float, grid: RadialGrid | None = None) -> RadialPotential:
    grid = grid or default_grid()
    return RadialPotential(grid, np.full(grid.n, float(c)))


def radial_from_callable(f, grid: RadialGrid | None = None) -> RadialPotential:
    grid = grid or default_grid()
    return RadialPotential(grid, np.asarray(f(grid.x), dtype=float))


# ---------------------------------------------------------------------------
# B-spline profiles and general potentials


def profile_knots(n_profiles: int = 8, degree: int = 3) -> np.ndarray:
    """Clamped knot vector on [0,1] giving n_profiles basis splines."""
    if n_profiles <= degree:
        raise ValueError("need more profiles than the spline degree")
    inner = np.linspace(0.0, 1.0, n_profiles - degree + 1)
    return np.concatenate([np.zeros(degree), inner, np.ones(degree)])


_PROFILE_CACHE: dict = {}


def profile_splines(knots: np.ndarray, degree: int = 3, order: int = 0) -> list:
    key = (np.asarray(knots, dtype=float).tobytes(), degree, order)
    if key in _PROFILE_CACHE:
        return _PROFILE_CACHE[key]
    if order > 0:
        out = [b.derivative(order) for b in profile_splines(knots, degree, 0)]
    else:
        n = len(knots) - degree - 1
        out = []
        for j in range(n):
            c = np.zeros(n)
            c[j] = 1.0
            out.append(BSpline(knots, c, degree, extrapolate=False))
    _PROFILE_CACHE[key] = out
    return out


@dataclass(frozen=True)
class BasisMember:
    """One function g_p(x) * trig(mu * theta)."""

    profile: int
    mu: int
    fn: str = "cos"  # "cos" or "sin"; mu = 0 uses cos only

    def to_json(self):
        return {"profile": self.profile, "mu": self.mu, "fn": self.fn}

    @classmethod
    def from_json(cls, obj):
        return cls(profile=obj["profile"], mu=obj["mu"], fn=obj["fn"])


class GeneralPotential:
    """Real combination sum_i c_i g_{p_i}(x) trig(mu_i theta)."""

    is_radial = False

    def __init__(self, knots, degree, members, coeffs):
        self.knots = np.asarray(knots, dtype=float)
        self.degree = int(degree)
        self.members = tuple(members)
        self.coeffs = np.asarray(coeffs, dtype=float).copy()
        if len(self.coeffs) != len(self.members):
            raise ValueError("one coefficient per member required")
        self.coeffs.setflags(write=False)
        self._profiles = profile_splines(self.knots, self.degree, 0)
        self._dprofiles = profile_splines(self.knots, self.degree, 1)
        self._d2profiles = profile_splines(self.knots, self.degree, 2)

    def _profile_vals(self, splines, x):
        x = np.asarray(x, dtype=float)
        vals = []
        for s in splines:
            v = s(x)
            vals.append(np.nan_to_num(v, nan=0.0))
        return vals

    def fields(self, x, theta):
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        shape = (len(x), len(theta))
        val = np.zeros(shape)
        dx = np.zeros(shape)
        dxx = np.zeros(shape)
        dthth = np.zeros(shape)
        g = self._profile_vals(self._profiles, x)
        g1 = self._profile_vals(self._dprofiles, x)
        g2 = self._profile_vals(self._d2profiles, x)
        for m, c in zip(self.members, self.coeffs):
            trig = np.cos if m.fn == "cos" else np.sin
            ang = trig(m.mu * theta)[None, :]
            val += c * g[m.profile][:, None] * ang
            dx += c * g1[m.profile][:, None] * ang
            dxx += c * g2[m.profile][:, None] * ang
            dthth += -c * m.mu ** 2 * g[m.profile][:, None] * ang
        return val, dx, dxx, dthth

    def value_at(self, x, theta):
        v, _, _, _ = self.fields(np.atleast_1d(x), np.atleast_1d(theta))
        return float(v[0, 0])

    def with_coeffs(self, coeffs):
        return GeneralPotential(self.knots, self.degree, self.members, coeffs)

    def rotated(self, alpha: float) -> "GeneralPotential":
        """Pullback by z -> e^{i alpha} z, i.e. theta -> theta + alpha."""
        acc: dict = {}
        for m, c in zip(self.members, self.coeffs):
            if m.mu == 0:
                acc[(m.profile, 0, "cos")] = acc.get((m.profile, 0, "cos"), 0.0) + c
                continue
            ca, sa = math.cos(m.mu * alpha), math.sin(m.mu * alpha)
            if m.fn == "cos":
                # cos(mu theta + mu alpha) = cos(ma) cos - sin(ma) sin
                parts = {("cos"): c * ca, ("sin"): -c * sa}
            else:
                parts = {("sin"): c * ca, ("cos"): c * sa}
            for fn, val in parts.items():
                key = (m.profile, m.mu, fn)
                acc[key] = acc.get(key, 0.0) + val
        members = [BasisMember(*key) for key in acc]
        coeffs = np.array([acc[key] for key in acc])
        return GeneralPotential(self.knots, self.degree, members, coeffs)

    def to_json(self):
        return {"kind": "general", "knots": self.knots.tolist(), "degree": self.degree,
                "members": [m.to_json() for m in self.members],
                "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(np.array(obj["knots"]), obj["degree"],
                   [BasisMember.from_json(m) for m in obj["members"]],
                   np.array(obj["coeffs"]))


class SumPotential:
    """Sum of potential-like parts sharing the fields() protocol."""

    def __init__(self, *parts):
        self.parts = tuple(parts)
        self.is_radial = all(getattr(p, "is_radial", False) for p in self.parts)

    def fields(self, x, theta):
        shape = (len(np.atleast_1d(x)), len(np.atleast_1d(theta)))
        acc = [np.zeros(shape) for _ in range(4)]
        for p in self.parts:
            for a, f in zip(acc, p.fields(x, theta)):
                a += f
        return tuple(acc)


def potential_to_json(phi):
    return phi.to_json()


def potential_from_json(obj):
    if obj["kind"] == "radial":
        return RadialPotential.from_json(obj)
    if obj["kind"] == "general":
        return GeneralPotential.from_json(obj)
    raise ValueError(f"unknown potential kind {obj['kind']!r}")


# ---------------------------------------------------------------------------
# seeded random radial potentials


def random_radial_potential(model, rng, grid: RadialGrid | None = None,
                            amplitude: float | None = None, n_profiles: int = 8,
                            margin: float = 0.05, max_tries: int = 500) -> RadialPotential:
    """Seeded random admissible radial potential (rejection sampling).

    Coefficients over a B-spline profile basis are drawn uniformly; a draw is
    accepted when the perturbed form stays positive with the given margin.
    """
    from . import monge_ampere

    grid = grid or default_grid()
    if amplitude is None:
        amplitude = 0.05 * model.k
    knots = profile_knots(n_profiles)
    splines = profile_splines(knots)
    design = np.column_stack([np.nan_to_num(s(grid.x), nan=0.0) for s in splines])
    for _ in range(max_tries):
        c = rng.uniform(-amplitude, amplitude, size=n_profiles)
        phi = RadialPotential(grid, design @ c)
        ma = monge_ampere.radial_ma_values(phi, model)
        if ma.min() > margin:
            return phi
    raise RuntimeError("could not draw an admissible random potential; lower the amplitude")


def gauss_legendre_unit(n: int):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def radial_integral(func: RadialFunction, n_quad: int = 256) -> float:
    """integral_0^1 f(x) dx through the grid spline (linear in the samples)."""
    xi_q, w_q = gauss_legendre_unit(n_quad)
    gp = func.grid.map.dforward(xi_q)
    return float(np.sum(w_q * gp * func.at_xi(xi_q)))
