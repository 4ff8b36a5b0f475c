"""Gram matrices of holomorphic sections: the Hilbert map and its quadrature.

Conventions (all closed forms below assume them):
  reference metric  h_FS = (1 + |z|^2)^{-k}  on O(k),
  reference form    omega_FS with total area k*pi,
  perturbed metric  h = h_FS e^{-phi}, perturbed form = half the curvature
  of h, whose density against omega_FS is the Monge-Ampere density.

The Gram matrix of the monomial basis under the reference is diagonal with
entries k*pi * a!(k-a)!/(k+1)!  (a Beta integral).  Radial potentials use a
1-D rule on the compactified coordinate; general potentials use a product
Gauss-Legendre x uniform-angle rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, ConvergenceError
from .geometry import Point, PolarizedModel, SectionFamily
from .monge_ampere import density_weight, general_ma_values
from .potentials import RadialFunction, gauss_legendre_unit

_HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class HermitianForm:
    """An m x m hermitian matrix: a point of the space of inner products
    on the section space, or of its positive semidefinite closure."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("entries must be a square matrix")
        scale = max(1.0, float(np.max(np.abs(a))))
        drift = float(np.max(np.abs(a - a.conj().T)))
        if drift > _HERMITIAN_TOL * scale:
            raise ValueError(f"matrix is not hermitian: asymmetry {drift:.3e}")
        sym = 0.5 * (a + a.conj().T)
        sym.setflags(write=False)
        object.__setattr__(self, "entries", sym)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def is_positive_definite(self, tol: float = 0.0) -> bool:
        return bool(self.eigenvalues()[0] > tol)

    def is_positive_semidefinite(self, tol: float | None = None) -> bool:
        ev = self.eigenvalues()
        if tol is None:
            tol = 1e-12 * max(1.0, abs(ev[-1]))
        return bool(ev[0] >= -tol)

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.entries))

    def max_entry_distance(self, other: "HermitianForm") -> float:
        return float(np.max(np.abs(self.entries - other.entries)))

    def conjugated(self, u) -> "HermitianForm":
        u = np.asarray(u, dtype=complex)
        return HermitianForm(u @ self.entries @ u.conj().T)

    def __add__(self, other):
        return HermitianForm(self.entries + other.entries)

    def __sub__(self, other):
        return HermitianForm(self.entries - other.entries)

    def __mul__(self, scalar):
        return HermitianForm(self.entries * float(scalar))

    __rmul__ = __mul__

    @classmethod
    def identity(cls, m: int) -> "HermitianForm":
        return cls(np.eye(m, dtype=complex))

    @classmethod
    def zero(cls, m: int) -> "HermitianForm":
        return cls(np.zeros((m, m), dtype=complex))

    def to_json(self):
        flat = self.entries.reshape(-1)
        return {"dim": self.dim, "entries": [[c.real, c.imag] for c in flat]}

    @classmethod
    def from_json(cls, obj):
        m = obj["dim"]
        flat = np.array([complex(re, im) for re, im in obj["entries"]])
        return cls(flat.reshape(m, m))


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes on the unit interval times uniform angles."""

    nodes_x: np.ndarray
    weights_x: np.ndarray
    n_theta: int

    def __post_init__(self):
        if np.any(self.weights_x <= 0):
            raise ValueError("radial weights must be positive")
        if self.n_theta < 2:
            raise ValueError("need at least two angular nodes")

    @property
    def n_x(self) -> int:
        return len(self.nodes_x)

    @property
    def thetas(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def weight_theta(self) -> float:
        return 2.0 * np.pi / self.n_theta

    @classmethod
    def gauss(cls, n_x: int, n_theta: int) -> "QuadratureRule":
        nodes, weights = gauss_legendre_unit(n_x)
        return cls(nodes, weights, n_theta)


def default_rule(model: PolarizedModel, n_x: int = 256,
                 n_theta: int | None = None) -> QuadratureRule:
    if n_theta is None:
        n_theta = 4 * model.k + 8
    return QuadratureRule.gauss(n_x, n_theta)


def fs_gram(model: PolarizedModel) -> HermitianForm:
    """Closed-form Gram of the monomial basis under the reference metric."""
    k = model.k
    diag = [k * math.pi * math.factorial(a) * math.factorial(k - a)
            / math.factorial(k + 1) for a in range(model.m)]
    return HermitianForm(np.diag(np.array(diag, dtype=complex)))


def section_value_vector(model: PolarizedModel, point: Point, phi=None) -> np.ndarray:
    """Metric-weighted monomial values at a point, computed in the chart
    (|z| <= 1 uses z, otherwise w = 1/z) where they stay bounded."""
    k = model.k
    a = np.arange(model.m)
    if point.at_infinity:
        v = np.zeros(model.m, dtype=complex)
        v[k] = 1.0
    else:
        z = point.z
        if abs(z) <= 1.0:
            v = z ** a * (1.0 + abs(z) ** 2) ** (-k / 2.0)
        else:
            w = 1.0 / z
            v = w ** (k - a) * (1.0 + abs(w) ** 2) ** (-k / 2.0)
    if phi is not None:
        v = v * np.exp(-0.5 * _potential_value(phi, point))
    return v


def _potential_value(phi, point: Point) -> float:
    x = point.x_coordinate()
    if getattr(phi, "is_radial", False):
        if isinstance(phi, RadialFunction):
            return float(phi.value_at_x(x))
        val, _, _, _ = phi.fields(np.array([x]), np.array([point.angle()]))
        return float(val[0, 0])
    val, _, _, _ = phi.fields(np.array([x]), np.array([point.angle()]))
    return float(val[0, 0])


def _angular_kernel(model: PolarizedModel, x: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """u[a, q, j] with u_a ubar_b = kernel of the Gram integrand (no weight)."""
    k = model.k
    a = np.arange(model.m)
    radial = x[None, :] ** (a[:, None] / 2.0) * (1.0 - x[None, :]) ** ((k - a[:, None]) / 2.0)
    phase = np.exp(1j * np.outer(a, thetas))
    return radial[:, :, None] * phase[:, None, :]


def hilb(phi, model: PolarizedModel, rule: QuadratureRule | None = None,
         V: SectionFamily | None = None) -> HermitianForm:
    """Gram matrix of the basis (or of V) under h_FS e^{-phi} and the
    perturbed volume form.

    Radial potentials take a diagonal 1-D fast path; anything exposing the
    fields() protocol goes through the product rule.  Positivity of the
    perturbed form is checked, not assumed.
    """
    rule = rule or default_rule(model)
    if isinstance(phi, RadialFunction):
        H = _hilb_radial(phi, model, rule)
    else:
        H = _hilb_general(phi, model, rule)
    if V is not None:
        if V.k != model.k:
            raise ValueError("family degree does not match the model")
        H = H.conjugated(V.coeff_matrix())
    return H


def _hilb_radial(phi: RadialFunction, model: PolarizedModel,
                 rule: QuadratureRule) -> HermitianForm:
    weight = density_weight(phi, model)  # raises if not admissible
    xi_q = rule.nodes_x
    gp = phi.grid.map.dforward(xi_q)
    x_q = phi.grid.map.forward(xi_q)
    # The spline is linear in the grid samples; clipping only guards
    # under-resolved data against overshoot below zero.
    fq = np.maximum(weight.at_xi(xi_q), 0.0)
    k = model.k
    a = np.arange(model.m)
    kern = x_q[None, :] ** a[:, None] * (1.0 - x_q[None, :]) ** (k - a[:, None])
    diag = k * math.pi * kern @ (rule.weights_x * gp * fq)
    return HermitianForm(np.diag(diag.astype(complex)))


def _hilb_general(phi, model: PolarizedModel, rule: QuadratureRule) -> HermitianForm:
    x_q, thetas = rule.nodes_x, rule.thetas
    ma2 = general_ma_values(phi, model, x_q, thetas)
    if ma2.min() <= 0.0:
        qi, ji = np.unravel_index(int(np.argmin(ma2)), ma2.shape)
        raise AdmissibilityError(
            f"perturbed form not positive at (x, theta) = ({x_q[qi]:.6f}, {thetas[ji]:.6f})",
            location=(x_q[qi], thetas[ji]))
    val, _, _, _ = phi.fields(x_q, thetas)
    weights = (rule.weights_x[:, None] * rule.weight_theta
               * (model.k / 2.0) * ma2 * np.exp(-val))
    u = _angular_kernel(model, x_q, thetas)
    H = np.einsum("qj,aqj,bqj->ab", weights, u, u.conj())
    return HermitianForm(H)


def hilb_from_measure(points, weights, model: PolarizedModel, phi=None) -> HermitianForm:
    """Sum of weighted point-evaluation Grams: sum_i w_i v(p_i) v(p_i)^dagger.

    Weights must be nonnegative; the zero measure gives the zero matrix, a
    semidefinite form outside the open cone of inner products.
    """
    weights = np.asarray(weights, dtype=float)
    if len(points) != len(weights):
        raise ValueError("one weight per point required")
    if np.any(weights < 0):
        i = int(np.argmin(weights))
        raise ValueError(f"negative weight {weights[i]} at index {i}")
    H = np.zeros((model.m, model.m), dtype=complex)
    for p, w in zip(points, weights):
        v = section_value_vector(model, p, phi)
        H += w * np.outer(v, v.conj())
    return HermitianForm(H)


def hilb_refined(phi, model: PolarizedModel, tol: float = 1e-10,
                 rule: QuadratureRule | None = None, max_doublings: int = 4,
                 V: SectionFamily | None = None):
    """Auto-refined Gram: doubles the rule until successive change <= tol.

    Returns (gram, history) with history rows (n_x, n_theta, max_entry_delta);
    raises ConvergenceError when the cap is hit while still changing.
    """
    rule = rule or default_rule(model)
    current = hilb(phi, model, rule, V=V)
    history = [(rule.n_x, rule.n_theta, math.inf)]
    for _ in range(max_doublings):
        rule = QuadratureRule.gauss(2 * rule.n_x, 2 * rule.n_theta)
        refined = hilb(phi, model, rule, V=V)
        delta = refined.max_entry_distance(current)
        history.append((rule.n_x, rule.n_theta, delta))
        current = refined
        if delta <= tol:
            return current, history
    raise ConvergenceError(
        f"quadrature still changing by {history[-1][2]:.3e} after {max_doublings} doublings",
        history=history)


# ---------------------------------------------------------------------------
# real vectorization of hermitian matrices (isometric for Frobenius norm)


def vectorize_hermitian(H) -> np.ndarray:
    a = H.entries if isinstance(H, HermitianForm) else np.asarray(H)
    m = a.shape[0]
    parts = [a.diagonal().real]
    iu = np.triu_indices(m, k=1)
    parts.append(math.sqrt(2.0) * a[iu].real)
    parts.append(math.sqrt(2.0) * a[iu].imag)
    return np.concatenate(parts)


def unvectorize_hermitian(vec: np.ndarray, m: int) -> HermitianForm:
    vec = np.asarray(vec, dtype=float)
    out = np.zeros((m, m), dtype=complex)
    out[np.diag_indices(m)] = vec[:m]
    iu = np.triu_indices(m, k=1)
    n_off = len(iu[0])
    re = vec[m:m + n_off] / math.sqrt(2.0)
    im = vec[m + n_off:m + 2 * n_off] / math.sqrt(2.0)
    out[iu] = re + 1j * im
    out += np.triu(out, k=1).conj().T
    return HermitianForm(out)
