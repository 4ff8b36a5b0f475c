"""Sections of O(k) on the Riemann sphere, their frames, zeros, and divisors.

A section is stored as the coefficient vector of a polynomial of degree <= k
in the affine coordinate z.  The chart at infinity uses w = 1/z, where the
frame value of a section is w^k * s(1/w); concretely the w-chart coefficient
vector is the reversal of the z-chart one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Roots closer than this are treated as a single zero of higher order.
ROOT_CLUSTER_TOL = 1e-9
# Trailing coefficients below this (relative to the largest) do not count
# toward the polynomial degree.
COEFF_TRIM_REL = 1e-12


@dataclass(frozen=True)
class Point:
    """A point of CP^1: a finite z-coordinate or the point at infinity."""

    z: complex = 0j
    at_infinity: bool = False

    @classmethod
    def finite(cls, z):
        return cls(z=complex(z), at_infinity=False)

    @classmethod
    def infinity(cls):
        return cls(z=0j, at_infinity=True)

    def x_coordinate(self):
        """Compactified radial coordinate x = |z|^2 / (1 + |z|^2) in [0, 1]."""
        if self.at_infinity:
            return 1.0
        r2 = abs(self.z) ** 2
        return r2 / (1.0 + r2)

    def angle(self):
        if self.at_infinity or self.z == 0:
            return 0.0
        return float(np.angle(self.z))

    def to_json(self):
        if self.at_infinity:
            return {"inf": True}
        return {"z": [self.z.real, self.z.imag]}

    @classmethod
    def from_json(cls, obj):
        if obj.get("inf"):
            return cls.infinity()
        re, im = obj["z"]
        return cls.finite(complex(re, im))

    def __repr__(self):
        return "Point(inf)" if self.at_infinity else f"Point({self.z:.6g})"


def same_point(p: Point, q: Point, tol: float = ROOT_CLUSTER_TOL) -> bool:
    if p.at_infinity or q.at_infinity:
        return p.at_infinity and q.at_infinity
    return abs(p.z - q.z) <= tol


@dataclass(frozen=True)
class PolarizedModel:
    """The pair (CP^1, O(k)); m = k + 1 sections form the monomial basis."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"degree k must be >= 1, got {self.k}")

    @property
    def m(self) -> int:
        return self.k + 1


@dataclass(frozen=True)
class SectionPoly:
    """A holomorphic section of O(k): coefficients of z^a at index a."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).copy()
        if c.ndim != 1 or len(c) < 2:
            raise ValueError("coefficient vector must be 1-D with length k+1 >= 2")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def k(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return bool(np.max(np.abs(self.coeffs)) == 0.0)

    def eval_z(self, z):
        """Frame value in the z-chart."""
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def eval_w(self, w):
        """Frame value in the w = 1/z chart: w^k * s(1/w)."""
        return np.polynomial.polynomial.polyval(w, self.coeffs[::-1])

    def value_at(self, p: Point):
        """Value in the chart containing p, with the chart tag."""
        if p.at_infinity:
            return self.eval_w(0j), "w"
        return self.eval_z(p.z), "z"

    def degree(self) -> int:
        """Degree after trimming numerically-negligible leading coefficients."""
        a = np.abs(self.coeffs)
        top = a.max()
        if top == 0.0:
            return -1
        keep = np.nonzero(a > COEFF_TRIM_REL * top)[0]
        return int(keep[-1])

    def roots(self) -> np.ndarray:
        """Finite zeros with multiplicity (repeated entries)."""
        d = self.degree()
        if d <= 0:
            return np.array([], dtype=complex)
        return np.roots(self.coeffs[d::-1])

    def order_at(self, p: Point) -> float:
        """Vanishing order at p; infinity for the zero section."""
        if self.is_zero():
            return math.inf
        if p.at_infinity:
            return self.k - self.degree()
        if self.degree() == -1:
            return math.inf
        return int(np.sum(np.abs(self.roots() - p.z) <= ROOT_CLUSTER_TOL))

    def to_json(self):
        return [[c.real, c.imag] for c in self.coeffs]

    @classmethod
    def from_json(cls, obj):
        return cls(np.array([complex(re, im) for re, im in obj]))

    @classmethod
    def monomial(cls, k: int, a: int):
        c = np.zeros(k + 1, dtype=complex)
        c[a] = 1.0
        return cls(c)


@dataclass(frozen=True)
class SectionFamily:
    """A finite list of sections of the same O(k)."""

    members: tuple
    label: str = ""

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("section family must be nonempty")
        ks = {s.k for s in members}
        if len(ks) != 1:
            raise ValueError(f"family members live on different bundles: k in {sorted(ks)}")
        object.__setattr__(self, "members", members)

    @property
    def k(self) -> int:
        return self.members[0].k

    def __len__(self):
        return len(self.members)

    def coeff_matrix(self) -> np.ndarray:
        """Rows are the coefficient vectors of the members, shape (d, k+1)."""
        return np.array([s.coeffs for s in self.members])

    def is_linearly_independent(self, tol: float = 1e-10) -> bool:
        sv = np.linalg.svd(self.coeff_matrix(), compute_uv=False)
        return len(self) <= self.k + 1 and sv[-1] > tol * sv[0]

    def transform(self, matrix) -> "SectionFamily":
        """New family with coefficient rows matrix @ coeff_matrix."""
        new = np.asarray(matrix) @ self.coeff_matrix()
        return SectionFamily(tuple(SectionPoly(row) for row in new))

    def values_at(self, p: Point) -> np.ndarray:
        return np.array([s.value_at(p)[0] for s in self.members])

    def without(self, index: int) -> "SectionFamily":
        rest = self.members[:index] + self.members[index + 1:]
        return SectionFamily(rest)

    def to_json(self):
        return {"k": self.k, "label": self.label,
                "sections": [s.to_json() for s in self.members]}

    @classmethod
    def from_json(cls, obj):
        members = tuple(SectionPoly.from_json(s) for s in obj["sections"])
        return cls(members, label=obj.get("label", ""))


def monomial_basis(model: PolarizedModel) -> SectionFamily:
    return SectionFamily(tuple(SectionPoly.monomial(model.k, a) for a in range(model.m)),
                         label="monomials")


def eval_section(s: SectionPoly, p: Point):
    """Frame value of s at p together with the chart tag ('z' or 'w')."""
    return s.value_at(p)


def _cluster(values: np.ndarray, tol: float) -> list:
    """Group nearby complex values, returning one representative per cluster."""
    reps: list = []
    for v in values:
        for i, r in enumerate(reps):
            if abs(v - r[0] / r[1]) <= tol:
                reps[i] = (r[0] + v, r[1] + 1)
                break
        else:
            reps.append((v, 1))
    return [r[0] / r[1] for r in reps]


def family_vanishing_profile(family: SectionFamily) -> list:
    """Common zeros of the family with order = min over members.

    An empty list means the family generates O(k).  The point at infinity is
    handled through the degree deficit k - deg.
    """
    nonzero = [s for s in family.members if not s.is_zero()]
    if not nonzero:
        raise ValueError("family of all-zero sections has no divisor")

    profile = []
    # Finite common zeros are among the zeros of any single nonzero member.
    candidates = _cluster(nonzero[0].roots(), ROOT_CLUSTER_TOL)
    for z0 in sorted(candidates, key=lambda c: (abs(c), c.real, c.imag)):
        p = Point.finite(z0)
        order = min(s.order_at(p) for s in family.members)
        if order >= 1:
            profile.append((p, int(order)))
    order_inf = min(s.order_at(Point.infinity()) for s in family.members)
    if order_inf >= 1:
        profile.append((Point.infinity(), int(order_inf)))
    return profile


def is_minimal_generating(family: SectionFamily) -> bool:
    """True iff the family generates O(k) and no sub-span does.

    Certificate: for each member there must be a point where it alone is
    nonzero; on CP^1 the candidate points are the common zeros of the
    complementary subfamily.
    """
    if not family.is_linearly_independent():
        raise ValueError("minimal-generation test requires a linearly independent family")
    if family_vanishing_profile(family):
        return False
    if len(family) == 1:
        # A single section of O(k), k >= 1, always has a zero, so it cannot
        # generate; unreachable after the profile check, kept for clarity.
        return False
    for i in range(len(family)):
        sub_profile = family_vanishing_profile(family.without(i))
        witnesses = [p for p, _ in sub_profile
                     if abs(family.members[i].value_at(p)[0]) > 0]
        if not witnesses:
            return False
    return True
