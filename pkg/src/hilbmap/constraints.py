"""Half-space constraints on Gram matrices from pairs of section families.

For families (sigma_i) and (s_j) with bounded pointwise ratio
R(p) = sum |sigma_i(p)|^2 / sum |s_j(p)|^2 <= M, every Gram matrix H in the
image of the Hilbert map satisfies the strict inequality
pairing(H, Q_num) < M * pairing(H, Q_den), where Q_F = sum_i c_i c_i^dagger
is built from the coefficient vectors and
pairing(H, Q) = sum_ab H_ab Q_ab = sum_i |sigma_i|^2_H.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import UnboundedRatioError
from .geometry import (Point, PolarizedModel, SectionFamily, SectionPoly,
                       family_vanishing_profile, is_minimal_generating)
from .hilbert import HermitianForm

BOUNDARY_TOL = 1e-9


def family_squared_form(family: SectionFamily) -> np.ndarray:
    """Q = sum of outer products c c^dagger of the coefficient vectors."""
    c = family.coeff_matrix()
    return c.T @ c.conj()


def pairing(H: HermitianForm, Q: np.ndarray) -> float:
    """sum_ab H_ab Q_ab; equals sum_i |sigma_i|^2_H for Q built from sigma."""
    val = np.sum(H.entries * Q)
    return float(val.real)


@dataclass(frozen=True)
class HalfSpaceConstraint:
    """Encodes  pairing(H, q_num) < bound * pairing(H, q_den)."""

    q_num: np.ndarray
    q_den: np.ndarray
    bound: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bound <= 0 or not math.isfinite(self.bound):
            raise ValueError("bound must be positive and finite")

    @property
    def dim(self) -> int:
        return self.q_num.shape[0]

    def to_json(self):
        def mat(a):
            return [[c.real, c.imag] for c in np.asarray(a).reshape(-1)]
        prov = {k: v for k, v in self.provenance.items()
                if isinstance(v, (str, int, float, list, dict, bool))}
        return {"dim": self.dim, "bound": self.bound,
                "q_num": mat(self.q_num), "q_den": mat(self.q_den),
                "provenance": prov}

    @classmethod
    def from_json(cls, obj):
        m = obj["dim"]
        def mat(entries):
            return np.array([complex(re, im) for re, im in entries]).reshape(m, m)
        return cls(mat(obj["q_num"]), mat(obj["q_den"]), obj["bound"],
                   provenance=obj.get("provenance", {}))


@dataclass(frozen=True)
class MembershipResult:
    classification: str  # "strict_inside" | "boundary" | "outside"
    margin: float        # relative margin (rhs - lhs) / scale
    lhs: float
    rhs: float


def check_membership(H: HermitianForm, constraint: HalfSpaceConstraint,
                     boundary_tol: float = BOUNDARY_TOL) -> MembershipResult:
    if H.dim != constraint.dim:
        raise ValueError(f"dimension mismatch: H is {H.dim}, constraint is {constraint.dim}")
    lhs = pairing(H, constraint.q_num)
    rhs = constraint.bound * pairing(H, constraint.q_den)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    margin = (rhs - lhs) / scale
    if abs(margin) <= boundary_tol:
        cls = "boundary"
    elif margin > 0:
        cls = "strict_inside"
    else:
        cls = "outside"
    return MembershipResult(cls, margin, lhs, rhs)


# ---------------------------------------------------------------------------
# sup of the pointwise ratio


def _family_order_at(family: SectionFamily, p: Point) -> float:
    return min(s.order_at(p) for s in family.members)


def _sum_squares_field(family: SectionFamily, x: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """sum_i |sigma_i|^2 at product nodes, evaluated chart-consistently.

    Values are taken in the z-chart for x <= 1/2 and in the w-chart beyond;
    the numerator/denominator ratio is frame-independent, so any common
    chart convention works.
    """
    k = family.k
    out = np.zeros((len(x), len(thetas)))
    z_mask = x <= 0.5
    for s in family.members:
        if np.any(z_mask):
            r = np.sqrt(x[z_mask] / (1.0 - x[z_mask]))
            z = r[:, None] * np.exp(1j * thetas)[None, :]
            out[z_mask] += np.abs(s.eval_z(z)) ** 2 * (1.0 - x[z_mask])[:, None] ** k
        if np.any(~z_mask):
            r = np.sqrt((1.0 - x[~z_mask]) / x[~z_mask])
            w = r[:, None] * np.exp(-1j * thetas)[None, :]
            out[~z_mask] += np.abs(s.eval_w(w)) ** 2 * x[~z_mask][:, None] ** k
    return out


def _sum_squares_chart(family: SectionFamily, coord: complex, chart: str) -> float:
    total = 0.0
    weight = (1.0 + abs(coord) ** 2) ** (-family.k)
    for s in family.members:
        v = s.eval_z(coord) if chart == "z" else s.eval_w(coord)
        total += abs(v) ** 2 * weight
    return total


def ratio_sup(num: SectionFamily, den: SectionFamily, n_x: int = 128,
              n_theta: int = 64) -> tuple:
    """Global sup over CP^1 of sum|sigma_i|^2 / sum|s_j|^2 and a maximizer.

    Requires the numerator family to vanish at least as much as the
    denominator at every common zero of the denominator (the bounded-ratio
    condition); otherwise raises UnboundedRatioError naming the zero.
    Coarse product scan, ties broken at smallest x then smallest theta, then
    local Nelder-Mead plus Newton polish in the chart containing the maximizer.
    """
    if num.k != den.k:
        raise ValueError("families live on different bundles")
    for p, order in family_vanishing_profile(den):
        if _family_order_at(num, p) < order:
            raise UnboundedRatioError(
                f"ratio unbounded: numerator order {_family_order_at(num, p)} < "
                f"denominator order {order} at {p}", point=p)

    # Coarse scan over interior nodes plus the two poles when evaluable.
    x = (np.arange(n_x) + 0.5) / n_x
    thetas = 2.0 * np.pi * np.arange(n_theta) / n_theta
    den_f = _sum_squares_field(den, x, thetas)
    num_f = _sum_squares_field(num, x, thetas)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den_f > 0, num_f / den_f, -np.inf)

    candidates = []  # (ratio, sort_key, chart, coord)
    d0 = _sum_squares_chart(den, 0j, "z")
    if d0 > 0:
        candidates.append((_sum_squares_chart(num, 0j, "z") / d0, (0.0, 0.0), "z", 0j))
    qi, ji = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    chart = "z" if x[qi] <= 0.5 else "w"
    r = math.sqrt(x[qi] / (1 - x[qi])) if chart == "z" else math.sqrt((1 - x[qi]) / x[qi])
    ang = thetas[ji] if chart == "z" else -thetas[ji]
    candidates.append((float(ratio[qi, ji]), (float(x[qi]), float(thetas[ji])),
                       chart, r * np.exp(1j * ang)))
    dinf = _sum_squares_chart(den, 0j, "w")
    if dinf > 0:
        candidates.append((_sum_squares_chart(num, 0j, "w") / dinf, (1.0, 0.0), "w", 0j))
    candidates.sort(key=lambda c: (-c[0], c[1]))
    _, _, chart, coord = candidates[0]

    def negated(uv):
        c = complex(uv[0], uv[1])
        d = _sum_squares_chart(den, c, chart)
        if d <= 0:
            return np.inf
        return -_sum_squares_chart(num, c, chart) / d

    start = np.array([coord.real, coord.imag])
    res = minimize(negated, start, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 600})
    best = res.x if -res.fun >= -negated(start) else start
    best = _newton_polish(negated, best)

    coord = complex(best[0], best[1])
    M = -negated(best)
    # Snap to the chart center when the maximizer sits at a pole.
    if abs(coord) < 1e-8:
        coord = 0j
    point = Point.infinity() if (chart == "w" and coord == 0j) else (
        Point.finite(coord) if chart == "z" else Point.finite(1.0 / coord))
    return float(M), point


def _newton_polish(fun, x0: np.ndarray, steps: int = 6, h: float = 1e-6) -> np.ndarray:
    """A few safeguarded Newton steps on a 2-D smooth local minimum."""
    x = x0.copy()
    fx = fun(x)
    for _ in range(steps):
        g = np.zeros(2)
        Hm = np.zeros((2, 2))
        e = np.eye(2)
        for i in range(2):
            g[i] = (fun(x + h * e[i]) - fun(x - h * e[i])) / (2 * h)
            Hm[i, i] = (fun(x + h * e[i]) - 2 * fx + fun(x - h * e[i])) / h ** 2
        Hm[0, 1] = Hm[1, 0] = (fun(x + h * (e[0] + e[1])) - fun(x + h * (e[0] - e[1]))
                               - fun(x + h * (e[1] - e[0])) + fun(x - h * (e[0] + e[1]))) / (4 * h ** 2)
        try:
            step = np.linalg.solve(Hm, -g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        cand = x + step
        fc = fun(cand)
        if fc <= fx:
            x, fx = cand, fc
        else:
            break
    return x


# ---------------------------------------------------------------------------
# pruning and reduction


def prune_family(family: SectionFamily) -> SectionFamily:
    """Linearly independent family with the same pointwise sum of squares.

    Returns the family unchanged when already independent; otherwise rebuilds
    it from the spectral decomposition of Q (which determines the sum of
    squares).
    """
    Q = family_squared_form(family)
    ev, vec = np.linalg.eigh(Q)
    scale = max(ev[-1], 1e-300)
    keep = ev > 1e-12 * scale
    rank = int(np.sum(keep))
    if rank == len(family):
        return family
    coeffs = (vec[:, keep] * np.sqrt(ev[keep])).T
    return SectionFamily(tuple(SectionPoly(row) for row in coeffs))


def prune_families(num: SectionFamily, den: SectionFamily) -> tuple:
    return prune_family(num), prune_family(den)


@dataclass(frozen=True)
class ReducedConstraint:
    constraint: HalfSpaceConstraint
    lambdas: np.ndarray
    aligned_den: SectionFamily | None
    flags: frozenset


def reduce_constraint(num: SectionFamily, den: SectionFamily) -> ReducedConstraint:
    """Canonical form of the half-space constraint from (num, den).

    Prunes both families, diagonalizes the numerator form relative to the
    denominator on span(den) (eigenvalues lambda_i >= 0), aligns the
    denominator basis so that all but its first member vanish at the
    maximizer, and flags the constraint REDUNDANT when the denominator is
    minimal generating (then M = max lambda_i and the inequality follows from
    positivity alone).
    """
    num_p, den_p = prune_families(num, den)
    flags = set()

    c_num = num_p.coeff_matrix()
    c_den = den_p.coeff_matrix()
    sol, _, _, _ = np.linalg.lstsq(c_den.T, c_num.T, rcond=None)
    resid = float(np.max(np.abs(c_den.T @ sol - c_num.T)))
    contained = resid <= 1e-10 * max(1.0, float(np.max(np.abs(c_num))))

    if not contained:
        flags.add("NOT_REDUCED")
        M, p0 = ratio_sup(num_p, den_p)
        constraint = HalfSpaceConstraint(
            family_squared_form(num_p), family_squared_form(den_p), M,
            provenance={"maximizer": p0.to_json(), "flags": sorted(flags)})
        return ReducedConstraint(constraint, np.array([]), None, frozenset(flags))

    A = sol.T  # num rows expressed in the den basis
    B = A.conj().T @ A
    lambdas = np.linalg.eigvalsh(B)
    lambdas = np.clip(lambdas, 0.0, None)

    spread = lambdas[-1] - lambdas[0]
    if spread <= 1e-12 * max(lambdas[-1], 1.0):
        flags.add("CONSTANT_RATIO")

    minimal = len(den_p) >= 2 and is_minimal_generating(den_p)
    M_ratio, p0 = ratio_sup(num_p, den_p)
    if minimal:
        flags.add("REDUNDANT")
        M = float(lambdas[-1])
    else:
        M = M_ratio

    aligned = _align_at_point(den_p, p0)
    constraint = HalfSpaceConstraint(
        family_squared_form(num_p), family_squared_form(den_p), M,
        provenance={"maximizer": p0.to_json(), "lambdas": lambdas.tolist(),
                    "ratio_sup": M_ratio, "flags": sorted(flags)})
    return ReducedConstraint(constraint, lambdas, aligned, frozenset(flags))


def _align_at_point(family: SectionFamily, p: Point) -> SectionFamily:
    """Unitary recombination with all but the first member vanishing at p."""
    u = family.values_at(p)
    norm = np.linalg.norm(u)
    if norm == 0:
        return family
    first = u.conj() / norm
    # Complete first to a unitary via QR, forcing the leading row.
    basis = np.eye(len(u), dtype=complex)
    stack = np.column_stack([first.conj(), basis])
    q, _ = np.linalg.qr(stack)
    # QR may flip the sign/phase of the leading column; realign it.
    phase = (q[:, 0].conj() @ first.conj())
    q[:, 0] *= phase.conj() / abs(phase)
    U = q[:, :len(u)].T.conj()
    U[0] = first
    return family.transform(U)


# ---------------------------------------------------------------------------
# sampling the outer polytope


def sample_outer_polytope(model: PolarizedModel, count: int, seed: int,
                          max_attempts_factor: int = 60) -> list:
    """Seeded random constraints containing the image of the Hilbert map.

    Numerator families are drawn inside the span of the denominator family,
    which guarantees the bounded-ratio precondition.  Constraints are reduced
    and deduplicated by their scale-normalized canonical form.
    """
    if count == 0:
        return []
    rng = np.random.default_rng(seed)
    out = []
    seen = set()
    attempts = 0
    while len(out) < count and attempts < max_attempts_factor * count:
        attempts += 1
        l = int(rng.integers(2, model.m + 1))
        q = int(rng.integers(1, l + 1))
        c_den = rng.normal(size=(l, model.m)) + 1j * rng.normal(size=(l, model.m))
        c_den /= np.linalg.norm(c_den, axis=1, keepdims=True)
        den = SectionFamily(tuple(SectionPoly(row) for row in c_den))
        A = rng.normal(size=(q, l)) + 1j * rng.normal(size=(q, l))
        num = SectionFamily(tuple(SectionPoly(row) for row in (A @ c_den)))
        reduced = reduce_constraint(num, den)
        if "CONSTANT_RATIO" in reduced.flags:
            continue
        c = reduced.constraint
        tn, td = np.trace(c.q_num).real, np.trace(c.q_den).real
        key = (np.round(c.q_num / tn, 8).tobytes(),
               np.round(c.q_den / td, 8).tobytes())
        if key in seen:
            continue
        seen.add(key)
        out.append(c)
    return out
