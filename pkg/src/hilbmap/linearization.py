"""The tangent map of the Hilbert map, Laplacian spectra, and inversion.

Convention lock: the Laplacian appearing in the tangent-map formula

    T(psi)_ab = integral (s_a, s_b)_h e^{-phi} (Lap psi - psi) omega_phi

is defined as the ratio of the (1,1)-derivative of psi to the perturbed
form, so that T(psi) equals d/dt at 0 of the Gram of phi + t psi; this is
validated against central finite differences.  At the round reference
metric its spectrum is -l(l+1)/k, so the eigenvalue closest to zero in each
angular mode is nonpositive and 1 never lies in the spectrum; the margin
min |lambda - 1| is reported rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import lpmv

from .errors import AdmissibilityError, ConvergenceError
from .geometry import PolarizedModel, SectionFamily
from .hilbert import (HermitianForm, QuadratureRule, _angular_kernel,
                      default_rule, hilb, vectorize_hermitian)
from .monge_ampere import general_ma_values, radial_ma_values
from .potentials import (BasisMember, GeneralPotential, RadialFunction,
                         SumPotential, gauss_legendre_unit, profile_knots)


# ---------------------------------------------------------------------------
# test-function bases


@dataclass(frozen=True)
class FunctionBasis:
    """Finite family of real test functions: B-spline profiles times
    Fourier modes.  Profiles touching the poles are kept only in the
    rotation-invariant sector, so every member is integrable against the
    pole-singular angular term of the linearized density."""

    knots: np.ndarray
    degree: int
    members: tuple

    @property
    def size(self) -> int:
        return len(self.members)

    def potential(self, coeffs) -> GeneralPotential:
        return GeneralPotential(self.knots, self.degree, self.members, coeffs)

    def member_potential(self, i: int) -> GeneralPotential:
        c = np.zeros(self.size)
        c[i] = 1.0
        return self.potential(c)

    @classmethod
    def default(cls, model: PolarizedModel, n_profiles: int = 8,
                mu_max: int | None = None, degree: int = 3) -> "FunctionBasis":
        if mu_max is None:
            mu_max = 2 * model.k
        knots = profile_knots(n_profiles, degree)
        members = [BasisMember(p, 0, "cos") for p in range(n_profiles)]
        interior = range(1, n_profiles - 1)
        for mu in range(1, mu_max + 1):
            for p in interior:
                members.append(BasisMember(p, mu, "cos"))
                members.append(BasisMember(p, mu, "sin"))
        return cls(knots, degree, tuple(members))

    @classmethod
    def radial(cls, n_profiles: int = 8, degree: int = 3) -> "FunctionBasis":
        knots = profile_knots(n_profiles, degree)
        return cls(knots, degree, tuple(BasisMember(p, 0, "cos")
                                        for p in range(n_profiles)))


# ---------------------------------------------------------------------------
# tangent map


def tangent_map(phi, psi, model: PolarizedModel,
                rule: QuadratureRule | None = None) -> HermitianForm:
    """Derivative of the Gram matrix at phi in direction psi.

    The density of the perturbed form is affine in the potential, so the
    integrand is e^{-phi} (delta-density(psi) - psi * density(phi)) against
    the reference measure; for radial phi and psi this collapses to a 1-D
    diagonal rule evaluated through the same grid operators as the Gram
    itself (which is what makes the finite-difference lock exact).
    """
    rule = rule or default_rule(model)
    if isinstance(phi, RadialFunction) and isinstance(psi, RadialFunction):
        return _tangent_radial(phi, psi, model, rule)
    return _tangent_general(phi, psi, model, rule)


def _tangent_radial(phi: RadialFunction, psi: RadialFunction,
                    model: PolarizedModel, rule: QuadratureRule) -> HermitianForm:
    if psi.grid != phi.grid:
        psi = psi.resample(phi.grid)
    g = phi.grid
    x = g.x
    ma = radial_ma_values(phi, model)
    delta_ma = ((1.0 - 2.0 * x) * g.dx(psi.values)
                + x * (1.0 - x) * g.dxx(psi.values)) / model.k
    integrand = RadialFunction(g, np.exp(-phi.values) * (delta_ma - psi.values * ma))
    xi_q = rule.nodes_x
    gp = g.map.dforward(xi_q)
    x_q = g.map.forward(xi_q)
    fq = integrand.at_xi(xi_q)
    a = np.arange(model.m)
    kern = x_q[None, :] ** a[:, None] * (1.0 - x_q[None, :]) ** (model.k - a[:, None])
    diag = model.k * math.pi * kern @ (rule.weights_x * gp * fq)
    return HermitianForm(np.diag(diag.astype(complex)))


def _tangent_general(phi, psi, model: PolarizedModel,
                     rule: QuadratureRule) -> HermitianForm:
    x_q, thetas = rule.nodes_x, rule.thetas
    ma_phi = general_ma_values(phi, model, x_q, thetas)
    # delta-density of psi = (density of the affine path) - (density at phi)
    delta_ma = general_ma_values(psi, model, x_q, thetas) - 1.0
    phi_val, _, _, _ = phi.fields(x_q, thetas)
    psi_val, _, _, _ = psi.fields(x_q, thetas)
    weights = (rule.weights_x[:, None] * rule.weight_theta * (model.k / 2.0)
               * np.exp(-phi_val) * (delta_ma - psi_val * ma_phi))
    u = _angular_kernel(model, x_q, thetas)
    T = np.einsum("qj,aqj,bqj->ab", weights, u, u.conj())
    return HermitianForm(T)


def tangent_map_restricted(phi, psi, model: PolarizedModel, V: SectionFamily,
                           rule: QuadratureRule | None = None) -> HermitianForm:
    T = tangent_map(phi, psi, model, rule)
    return T.conjugated(V.coeff_matrix())


def tangent_stack(phi, basis: "FunctionBasis", model: PolarizedModel,
                  rule: QuadratureRule | None = None,
                  V: SectionFamily | None = None) -> np.ndarray:
    """Tangent maps of all basis members in one quadrature pass.

    Returns a complex array T[i] = tangent_map(phi, basis member i), restricted
    to V when given; used for Jacobian assembly where the member-by-member
    path would re-evaluate the background fields every time.
    """
    from .potentials import profile_splines

    rule = rule or default_rule(model)
    x_q, thetas = rule.nodes_x, rule.thetas
    ma_phi = general_ma_values(phi, model, x_q, thetas)
    phi_val, _, _, _ = phi.fields(x_q, thetas)
    env = np.exp(-phi_val)

    orders = [profile_splines(basis.knots, basis.degree, o) for o in range(3)]
    prof = [np.stack([np.nan_to_num(s(x_q), nan=0.0) for s in order])
            for order in orders]
    trig_cache = {}
    for m in basis.members:
        key = (m.mu, m.fn)
        if key not in trig_cache:
            fn = np.cos if m.fn == "cos" else np.sin
            trig_cache[key] = fn(m.mu * thetas)

    xc = x_q[:, None]
    pole_factor = 1.0 / (4.0 * model.k * xc * (1.0 - xc))
    base_weight = rule.weights_x[:, None] * rule.weight_theta * (model.k / 2.0) * env
    W = np.empty((basis.size, len(x_q), len(thetas)))
    for i, m in enumerate(basis.members):
        ang = trig_cache[(m.mu, m.fn)][None, :]
        val = prof[0][m.profile][:, None] * ang
        dx = prof[1][m.profile][:, None] * ang
        dxx = prof[2][m.profile][:, None] * ang
        delta = (((1.0 - 2.0 * xc) * dx + xc * (1.0 - xc) * dxx) / model.k
                 - m.mu ** 2 * val * pole_factor)
        W[i] = base_weight * (delta - val * ma_phi)
    u = _angular_kernel(model, x_q, thetas)
    T = np.einsum("nqj,aqj,bqj->nab", W, u, u.conj())
    T = 0.5 * (T + np.conj(np.swapaxes(T, 1, 2)))
    if V is not None:
        C = V.coeff_matrix()
        T = np.einsum("ia,nab,jb->nij", C, T, C.conj())
    return T


# ---------------------------------------------------------------------------
# Laplacian spectrum per angular mode


@dataclass(frozen=True)
class SpectrumResult:
    """Eigenvalues of the locked Laplacian on a radial background, separated
    by angular mode; entries are (mode, l-index, eigenvalue)."""

    entries: tuple
    distance_to_one: float
    refinement_shift: float

    def eigenvalues(self) -> np.ndarray:
        return np.array(sorted((e[2] for e in self.entries), key=abs))

    def mode_eigenvalues(self, mu: int) -> np.ndarray:
        return np.array([e[2] for e in self.entries if e[0] == mu])


def _legendre_basis(mu: int, ells: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Orthonormal associated Legendre values, shape (len(ells), len(u))."""
    out = np.empty((len(ells), len(u)))
    for i, ell in enumerate(ells):
        norm = math.sqrt(2.0 * math.factorial(ell + mu)
                         / ((2 * ell + 1) * math.factorial(ell - mu)))
        out[i] = lpmv(mu, ell, u) / norm
    return out


def _mode_eigenvalues(ma_at_u, model: PolarizedModel, mu: int, ell_max: int,
                      pad: int, n_quad: int) -> np.ndarray:
    ells = np.arange(mu, ell_max + pad + 1)
    u_q, w_q = np.polynomial.legendre.leggauss(n_quad)
    P = _legendre_basis(mu, ells, u_q)
    ma_q = ma_at_u(u_q)
    # Stiffness is exactly diagonal in this basis; the weight matrix carries
    # the background density.
    A = np.diag(-ells * (ells + 1) / 2.0)
    B = (model.k / 2.0) * np.einsum("q,iq,jq->ij", w_q * ma_q, P, P)
    from scipy.linalg import eigh

    vals = eigh(A, B, eigvals_only=True)
    vals = np.sort(vals)[::-1]  # closest to zero first = increasing l
    return vals[: ell_max - mu + 1]


def laplacian_spectrum(phi: RadialFunction, model: PolarizedModel,
                       ell_max: int = 8, mu_max: int | None = None,
                       n_quad: int = 192, pad: int = 8,
                       shift_tol: float = 1e-6) -> SpectrumResult:
    """Spectrum of the locked Laplacian of the perturbed metric.

    Galerkin discretization per angular mode in the spherical-harmonic radial
    basis of the round background, which the background density perturbs
    through the weight matrix only; spectrally accurate for smooth radial
    potentials.  A refinement pass (larger basis, finer quadrature) must move
    the kept eigenvalues by less than shift_tol.
    """
    if not isinstance(phi, RadialFunction):
        raise ValueError("spectrum computation requires a radial potential")
    if mu_max is None:
        mu_max = 2 * model.k
    ma = radial_ma_values(phi, model)
    ma_func = RadialFunction(phi.grid, ma)

    def ma_at_u(u):
        x = 0.5 * (u + 1.0)
        return ma_func.value_at_x(x)

    entries = []
    shift = 0.0
    for mu in range(mu_max + 1):
        vals = _mode_eigenvalues(ma_at_u, model, mu, ell_max, pad, n_quad)
        refined = _mode_eigenvalues(ma_at_u, model, mu, ell_max, pad + 4, 2 * n_quad)
        shift = max(shift, float(np.max(np.abs(vals - refined))))
        for i, lam in enumerate(refined):
            entries.append((mu, mu + i, float(lam)))
    if shift > shift_tol:
        raise ConvergenceError(
            f"eigenvalues moved by {shift:.3e} under refinement", history=[shift])
    lams = np.array([e[2] for e in entries])
    return SpectrumResult(tuple(entries), float(np.min(np.abs(lams - 1.0))), shift)


# ---------------------------------------------------------------------------
# rank of the tangent map and independence of section products


def tangent_rank(phi, basis, model: PolarizedModel,
                 rule: QuadratureRule | None = None,
                 threshold: float = 1e-10):
    """Numerical rank of psi -> tangent_map(phi, psi) over the basis.

    Accepts a FunctionBasis or a plain list of test functions.  Returns
    (rank, singular_values), the rank cut at sigma_max * threshold; the image
    has real dimension at most m^2, and a dependent basis only lowers the
    reported rank.
    """
    if isinstance(basis, FunctionBasis):
        T = tangent_stack(phi, basis, model, rule)
        rows = [vectorize_hermitian(T[i]) for i in range(basis.size)]
    else:
        rows = [vectorize_hermitian(tangent_map(phi, psi, model, rule))
                for psi in basis]
    J = np.stack(rows)
    sv = np.linalg.svd(J, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * threshold))
    return rank, sv


def products_independence(phi, model: PolarizedModel,
                          rule: QuadratureRule | None = None,
                          V: SectionFamily | None = None) -> float:
    """Smallest eigenvalue of the L^2 Gram of the m^2 real section-product
    functions under the perturbed volume form; strictly positive iff the
    products are independent."""
    rule = rule or default_rule(model)
    x_q, thetas = rule.nodes_x, rule.thetas
    ma2 = general_ma_values(phi, model, x_q, thetas)
    phi_val, _, _, _ = phi.fields(x_q, thetas)
    weights = rule.weights_x[:, None] * rule.weight_theta * (model.k / 2.0) * ma2
    u = _angular_kernel(model, x_q, thetas)
    if V is not None:
        u = np.einsum("ia,aqj->iqj", V.coeff_matrix(), u)
    metric_factor = np.exp(-phi_val)
    m = u.shape[0]
    nodes = u.reshape(m, -1)
    w = (weights).reshape(-1)
    f = metric_factor.reshape(-1)
    # vec(P(node)) for all nodes at once
    P = np.einsum("an,bn->abn", nodes, nodes.conj()) * f[None, None, :]
    vecs = _vectorize_stack(P)
    G = np.einsum("n,pn,qn->pq", w, vecs, vecs)
    return float(np.linalg.eigvalsh(G)[0])


def _vectorize_stack(P: np.ndarray) -> np.ndarray:
    """Apply the hermitian vectorization to a stack P[a, b, n]."""
    m = P.shape[0]
    iu = np.triu_indices(m, k=1)
    diag = P[np.arange(m), np.arange(m), :].real
    re = math.sqrt(2.0) * P[iu[0], iu[1], :].real
    im = math.sqrt(2.0) * P[iu[0], iu[1], :].imag
    return np.concatenate([diag, re, im], axis=0)


# ---------------------------------------------------------------------------
# Gauss-Newton inversion of the Hilbert map


@dataclass
class InversionResult:
    phi: object
    coeffs: np.ndarray
    residual_norms: list
    converged: bool
    iterations: int

    @property
    def residual(self) -> float:
        return self.residual_norms[-1]


def invert_hilbert(target: HermitianForm, V: SectionFamily, model: PolarizedModel,
                   basis: FunctionBasis | None = None, phi0=None,
                   rule: QuadratureRule | None = None, tol: float = 1e-8,
                   max_iter: int = 30, tikhonov: float = 1e-12,
                   max_backtracks: int = 20,
                   continuation_stages: int = 1) -> InversionResult:
    """Find a potential whose restricted Gram matches the target.

    Gauss-Newton over the coefficient space of the test-function basis with
    the tangent map as Jacobian, Tikhonov-floored normal equations, and a
    halving line search that also rejects steps losing positivity.  A stall
    returns the best iterate with converged=False (diagnostic, not an
    exception): far-from-reference targets may legitimately defeat the
    local method.

    With continuation_stages > 1, a stalled solve is retried along the
    straight segment from the starting Gram to the target (the image is
    convex, so every intermediate target is attainable), warm-starting each
    stage; iteration counts accumulate across stages.
    """
    if target.dim != len(V):
        raise ValueError("target dimension must match the family size")
    if not target.is_positive_definite():
        raise ValueError("target must be positive definite on V")
    basis = basis or FunctionBasis.default(model)
    rule = rule or default_rule(model)

    def potential_of(c):
        if phi0 is not None and not np.any(c):
            return phi0
        pert = basis.potential(c)
        if phi0 is None:
            return pert
        return SumPotential(phi0, pert)

    def gram_of(c):
        return hilb(potential_of(c), model, rule, V=V)

    def feasible_step_bound(c, step):
        # The perturbed-form density is affine in the potential, hence in the
        # step length: the largest admissible alpha is exact, no search.
        ma_now = general_ma_values(potential_of(c), model, rule.nodes_x, rule.thetas)
        delta = general_ma_values(basis.potential(step), model,
                                  rule.nodes_x, rule.thetas) - 1.0
        shrinking = delta < 0
        if not np.any(shrinking):
            return np.inf
        return float(np.min(-ma_now[shrinking] / delta[shrinking]))

    def gauss_newton(goal, c_start, budget):
        c = c_start.copy()
        r = vectorize_hermitian(gram_of(c) - goal)
        history = [float(np.linalg.norm(r))]
        if history[-1] <= tol:
            return c, history, True, 0
        for it in range(1, budget + 1):
            T = tangent_stack(potential_of(c), basis, model, rule, V=V)
            J = np.stack([vectorize_hermitian(T[i]) for i in range(basis.size)]).T
            JtJ = J.T @ J
            floor = tikhonov * max(1.0, float(np.trace(JtJ)) / basis.size)
            step = np.linalg.solve(JtJ + floor * np.eye(basis.size), -J.T @ r)
            alpha = min(1.0, 0.95 * feasible_step_bound(c, step))
            accepted = False
            for _ in range(max_backtracks):
                cand = c + alpha * step
                try:
                    r_cand = vectorize_hermitian(gram_of(cand) - goal)
                except AdmissibilityError:
                    alpha *= 0.5  # positivity lost: damp the step
                    continue
                if np.linalg.norm(r_cand) < history[-1]:
                    c, r = cand, r_cand
                    history.append(float(np.linalg.norm(r)))
                    accepted = True
                    break
                alpha *= 0.5
            if history[-1] <= tol:
                return c, history, True, it
            if not accepted:
                return c, history, False, it
        return c, history, False, budget

    c0 = np.zeros(basis.size)
    c, history, converged, used = gauss_newton(target, c0, max_iter)
    if converged or continuation_stages <= 1:
        return InversionResult(potential_of(c), c, history, converged, used)

    # Homotopy along the segment of attainable targets.
    start_gram = gram_of(c0)
    c = c0
    total = used
    history = [float(np.linalg.norm(vectorize_hermitian(start_gram - target)))]
    for s in np.linspace(1.0 / continuation_stages, 1.0, continuation_stages):
        goal = HermitianForm((1.0 - s) * start_gram.entries + s * target.entries)
        c, stage_hist, converged, used = gauss_newton(goal, c, max_iter)
        total += used
        history.extend(stage_hist[1:] if len(stage_hist) > 1 else stage_hist)
        if not converged:
            break
    final = float(np.linalg.norm(vectorize_hermitian(gram_of(c) - target)))
    history.append(final)
    return InversionResult(potential_of(c), c, history, final <= tol, total)
