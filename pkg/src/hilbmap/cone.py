"""Point-evaluation Gram matrices and membership in their convex cone.

P_phi(x) is the rank-1 positive form of metric-weighted section values at x.
Membership of a target G in the cone generated by {P(x)} is probed by the
best nonnegative reconstruction over a finite point set; the reported
residual is a one-sided (upper) membership test: a large residual certifies
only failure at this sample density, not non-membership.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Point, PolarizedModel
from .hilbert import (HermitianForm, QuadratureRule, default_rule, hilb,
                      section_value_vector, vectorize_hermitian)
from .nnls import nnls
from .potentials import gauss_legendre_unit


def point_gram(phi, point: Point, model: PolarizedModel) -> HermitianForm:
    """Rank-1 positive form v(x) v(x)^dagger of metric-weighted values."""
    v = section_value_vector(model, point, phi)
    return HermitianForm(np.outer(v, v.conj()))


def default_point_set(model: PolarizedModel, n_x: int = 32,
                      n_theta: int | None = None) -> list:
    """Product grid of Gauss radii and uniform angles, plus the two poles."""
    if n_theta is None:
        n_theta = 4 * model.k + 8
    xs, _ = gauss_legendre_unit(n_x)
    points = [Point.finite(0j)]
    for x in xs:
        r = np.sqrt(x / (1.0 - x))
        for theta in 2.0 * np.pi * np.arange(n_theta) / n_theta:
            points.append(Point.finite(r * np.exp(1j * theta)))
    points.append(Point.infinity())
    return points


def circle_points(n: int, radius: float = 1.0) -> list:
    return [Point.finite(radius * np.exp(2j * np.pi * j / n)) for j in range(n)]


@dataclass(frozen=True)
class ConeFit:
    """Best nonnegative reconstruction of a target by point-evaluation forms."""

    points: tuple
    weights: np.ndarray
    residual: float
    nnls_residual: float
    reference: object = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("cone-fit weights must be nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def support(self, tol: float = 1e-12) -> np.ndarray:
        return np.nonzero(self.weights > tol * max(1.0, self.weights.max()))[0]


def _fit_matrix(points, phi, model: PolarizedModel) -> np.ndarray:
    cols = [vectorize_hermitian(point_gram(phi, p, model)) for p in points]
    return np.column_stack(cols)


def reconstruction(fit: ConeFit, model: PolarizedModel) -> HermitianForm:
    H = np.zeros((model.m, model.m), dtype=complex)
    for p, w in zip(fit.points, fit.weights):
        if w != 0.0:
            H += w * point_gram(fit.reference, p, model).entries
    return HermitianForm(H)


def cone_fit(G: HermitianForm, points, model: PolarizedModel, phi=None) -> ConeFit:
    """min_{a >= 0} || sum_i a_i P_phi(x_i) - G ||_F over the given points.

    The residual stored is recomputed from the matrices themselves and must
    agree with the least-squares residual to 1e-12 (the vectorization is an
    isometry); disagreement indicates a bug and raises.
    """
    if not points:
        raise ValueError("need at least one point")
    A = _fit_matrix(points, phi, model)
    b = vectorize_hermitian(G)
    weights, rnorm = nnls(A, b)
    probe = ConeFit(tuple(points), weights, rnorm, rnorm, reference=phi)
    exact = float(np.linalg.norm(reconstruction(probe, model).entries - G.entries))
    if abs(exact - rnorm) > 1e-12 * max(1.0, rnorm, exact):
        raise AssertionError(
            f"residual mismatch: nnls {rnorm:.3e} vs recomputed {exact:.3e}")
    return ConeFit(tuple(points), weights, exact, rnorm, reference=phi)


def approximate_hilb_by_points(phi, model: PolarizedModel, density: int = 32,
                               n_theta: int | None = None,
                               rule: QuadratureRule | None = None) -> ConeFit:
    """Fit the Gram of phi by a discrete measure at the given point density."""
    G = hilb(phi, model, rule=rule)
    points = default_point_set(model, n_x=density, n_theta=n_theta)
    return cone_fit(G, points, model, phi=None)


@dataclass(frozen=True)
class HIndependenceResult:
    fit_a: ConeFit
    fit_b: ConeFit
    agree: bool
    transformed_residual: float


def h_independence_check(G: HermitianForm, points, phi_a, phi_b,
                         model: PolarizedModel, tol: float = 1e-8) -> HIndependenceResult:
    """Cone membership must not depend on the reference metric.

    Fits G against references phi_a and phi_b; the classifications (residual
    below/above tol) must agree.  When the first fit is essentially exact,
    its weights transported by the pointwise factor e^{psi(x_i)},
    psi = phi_b - phi_a, reconstruct G under phi_b as well; the residual of
    that transported reconstruction is returned.
    """
    fit_a = cone_fit(G, points, model, phi=phi_a)
    fit_b = cone_fit(G, points, model, phi=phi_b)
    agree = (fit_a.residual <= tol) == (fit_b.residual <= tol)

    factors = np.array([_psi_at(phi_a, phi_b, p) for p in points])
    transported = fit_a.weights * np.exp(factors)
    H = np.zeros((model.m, model.m), dtype=complex)
    for p, w in zip(points, transported):
        if w != 0.0:
            H += w * point_gram(phi_b, p, model).entries
    transformed_residual = float(np.linalg.norm(H - G.entries))
    return HIndependenceResult(fit_a, fit_b, agree, transformed_residual)


def _psi_at(phi_a, phi_b, point: Point) -> float:
    from .hilbert import _potential_value

    va = 0.0 if phi_a is None else _potential_value(phi_a, point)
    vb = 0.0 if phi_b is None else _potential_value(phi_b, point)
    return vb - va
