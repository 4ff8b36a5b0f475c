import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hilbmap.constraints import (HalfSpaceConstraint, check_membership,
                                 family_squared_form, pairing, prune_families,
                                 prune_family, ratio_sup, reduce_constraint,
                                 sample_outer_polytope)
from hilbmap.errors import UnboundedRatioError
from hilbmap.geometry import (Point, PolarizedModel, SectionFamily, SectionPoly,
                              monomial_basis)
from hilbmap.hilbert import HermitianForm, hilb
from hilbmap.potentials import random_radial_potential


def sec(*coeffs):
    return SectionPoly(np.array(coeffs, dtype=complex))


def fam(*rows):
    return SectionFamily(tuple(sec(*r) for r in rows))


@pytest.fixture
def witness_constraint():
    # numerator {z}, denominator {1, z^2} inside O(2)
    num = fam([0, 1, 0])
    den = fam([1, 0, 0], [0, 0, 1])
    M, p0 = ratio_sup(num, den)
    return HalfSpaceConstraint(family_squared_form(num),
                               family_squared_form(den), M,
                               provenance={"maximizer": p0.to_json()})


class TestPairing:
    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_pairing_equals_sum_of_squared_norms(self, seed):
        rng = np.random.default_rng(seed)
        m, d = 4, 3
        C = rng.normal(size=(d, m)) + 1j * rng.normal(size=(d, m))
        family = SectionFamily(tuple(SectionPoly(row) for row in C))
        A = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
        H = HermitianForm(0.5 * (A + A.conj().T))
        direct = sum((row @ H.entries @ row.conj()).real for row in C)
        assert abs(pairing(H, family_squared_form(family)) - direct) \
            <= 1e-12 * max(1.0, abs(direct))


class TestRatioSup:
    def test_equal_families_give_one(self):
        f = fam([1, 0.5, 0], [0, 0, 1])
        M, _ = ratio_sup(f, f)
        assert abs(M - 1.0) <= 1e-12

    def test_k1_maximum_attained_at_infinity(self):
        M, p = ratio_sup(fam([0, 1]), fam([1, 0], [0, 1]))
        assert abs(M - 1.0) <= 1e-10
        assert p.at_infinity

    def test_k2_maximum_on_unit_circle(self):
        M, p = ratio_sup(fam([0, 1, 0]), fam([1, 0, 0], [0, 0, 1]))
        assert abs(M - 0.5) <= 1e-9
        assert abs(abs(p.z) - 1.0) <= 1e-6

    def test_unbounded_ratio_names_the_zero(self):
        with pytest.raises(UnboundedRatioError) as err:
            ratio_sup(fam([1, 0], [0, 1]), fam([1, 0]))
        assert err.value.point is not None and err.value.point.at_infinity


class TestMembership:
    def test_identity_on_the_boundary(self, witness_constraint):
        res = check_membership(HermitianForm.identity(3), witness_constraint)
        assert res.classification == "boundary"
        assert abs(res.margin) <= 1e-12

    def test_inflated_identity_outside(self, witness_constraint):
        e = np.eye(3, dtype=complex)
        e[1, 1] += 0.1
        res = check_membership(HermitianForm(e), witness_constraint)
        assert res.classification == "outside"

    def test_random_metrics_strictly_inside(self, witness_constraint, model2, grid):
        rng = np.random.default_rng(31)
        for _ in range(5):
            H = hilb(random_radial_potential(model2, rng, grid), model2)
            assert check_membership(H, witness_constraint).classification \
                == "strict_inside"

    def test_dimension_mismatch_rejected(self, witness_constraint):
        with pytest.raises(ValueError):
            check_membership(HermitianForm.identity(2), witness_constraint)

    def test_scale_invariance(self, witness_constraint, model2, grid):
        # scaling the numerator family by sqrt(c) scales the bound by c and
        # leaves every classification unchanged
        c = 3.7
        num = fam([0, np.sqrt(c), 0])
        den = fam([1, 0, 0], [0, 0, 1])
        M, _ = ratio_sup(num, den)
        assert abs(M - c * witness_constraint.bound) <= 1e-9 * c
        scaled = HalfSpaceConstraint(family_squared_form(num),
                                     family_squared_form(den), M)
        rng = np.random.default_rng(5)
        H = hilb(random_radial_potential(model2, rng, grid), model2)
        for form in (H, HermitianForm.identity(3)):
            a = check_membership(form, witness_constraint).classification
            b = check_membership(form, scaled).classification
            assert a == b

    def test_unitary_recombination_leaves_q_unchanged(self, rng):
        C = rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3))
        family = SectionFamily(tuple(SectionPoly(r) for r in C))
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        rotated = family.transform(q)
        assert np.max(np.abs(family_squared_form(family)
                             - family_squared_form(rotated))) <= 1e-12


class TestPrune:
    def test_duplicate_section_merges(self):
        s = sec(1, 2, 0)
        pruned = prune_family(SectionFamily((s, s)))
        assert len(pruned) == 1
        # sum of squares doubled: the single member is sqrt(2) s up to phase
        assert np.allclose(np.abs(pruned.members[0].coeffs),
                           np.sqrt(2) * np.abs(s.coeffs))

    def test_independent_family_unchanged(self):
        family = fam([1, 0, 0], [0, 1, 1])
        assert prune_family(family) is family

    def test_dependent_triple_reduces_to_two(self, rng):
        s1, s2 = sec(1, 0, 1j), sec(0, 1, 0.5)
        s3 = SectionPoly(s1.coeffs + s2.coeffs)
        num = SectionFamily((s1, s2, s3))
        pruned = prune_family(num)
        assert len(pruned) == 2
        # pointwise sums of squares agree on a probe grid
        for z in rng.normal(size=(100, 2)) @ np.array([1.0, 1.0j]):
            p = Point.finite(z)
            before = sum(abs(s.value_at(p)[0]) ** 2 for s in num.members)
            after = sum(abs(s.value_at(p)[0]) ** 2 for s in pruned.members)
            assert abs(before - after) <= 1e-10 * max(1.0, before)

    def test_prune_families_returns_both(self):
        s = sec(1, 1)
        num, den = prune_families(SectionFamily((s, s)), fam([1, 0], [0, 1]))
        assert len(num) == 1 and len(den) == 2


class TestReduce:
    def test_minimal_denominator_flags_redundant(self):
        num = fam([0, 0, 1])
        den = fam([1, 0, 0], [0, 0, 1])
        red = reduce_constraint(num, den)
        assert np.allclose(red.lambdas, [0.0, 1.0], atol=1e-12)
        assert abs(red.constraint.bound - 1.0) <= 1e-9
        assert "REDUNDANT" in red.flags

    def test_bound_equals_max_relative_eigenvalue(self, rng):
        den = fam([1, 0, 0], [0, 0, 1])
        A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        num = SectionFamily(tuple(SectionPoly(r) for r in A @ den.coeff_matrix()))
        red = reduce_constraint(num, den)
        assert "REDUNDANT" in red.flags
        assert abs(red.constraint.bound - red.lambdas[-1]) <= 1e-9
        # the sup of the pointwise ratio agrees with the top eigenvalue
        assert abs(red.constraint.provenance["ratio_sup"] - red.lambdas[-1]) <= 1e-7

    def test_equal_eigenvalues_flag_constant_ratio(self):
        den = fam([1, 0, 0], [0, 0, 1])
        num = den.transform(0.7 * np.eye(2))
        red = reduce_constraint(num, den)
        assert "CONSTANT_RATIO" in red.flags
        # constant ratio: every form sits on the boundary
        res = check_membership(HermitianForm.identity(3), red.constraint)
        assert res.classification == "boundary"

    def test_aligned_basis_vanishes_at_maximizer(self, rng):
        den = fam([1, 0.2, 0], [0.1, 0, 1])
        num = SectionFamily(tuple(SectionPoly(r) for r in
                                  (rng.normal(size=(1, 2)) @ den.coeff_matrix())))
        red = reduce_constraint(num, den)
        p0 = Point.from_json(red.constraint.provenance["maximizer"])
        vals = red.aligned_den.values_at(p0)
        assert abs(vals[0]) > 1e-8
        assert np.max(np.abs(vals[1:])) <= 1e-10 * abs(vals[0])
        # alignment is unitary: the squared form is unchanged
        assert np.max(np.abs(family_squared_form(red.aligned_den)
                             - family_squared_form(prune_family(den)))) <= 1e-10

    def test_numerator_outside_span_not_reduced(self):
        num = fam([0, 1, 0])
        den = fam([1, 0, 0], [0, 0, 1])
        red = reduce_constraint(num, den)
        assert "NOT_REDUCED" in red.flags
        assert red.aligned_den is None


class TestSampler:
    def test_zero_count_is_empty(self, model2):
        assert sample_outer_polytope(model2, 0, seed=9) == []

    def test_deterministic_for_fixed_seed(self, model2):
        a = sample_outer_polytope(model2, 4, seed=11)
        b = sample_outer_polytope(model2, 4, seed=11)
        assert len(a) == len(b) == 4
        for ca, cb in zip(a, b):
            assert np.array_equal(ca.q_num, cb.q_num)
            assert ca.bound == cb.bound

    def test_emitted_constraints_satisfy_pairing_identity(self, model2, rng):
        for c in sample_outer_polytope(model2, 4, seed=13):
            A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
            H = HermitianForm(A @ A.conj().T)  # random PSD probe
            lhs = pairing(H, c.q_num)
            assert lhs >= -1e-12
            assert np.isfinite(c.bound) and c.bound > 0

    def test_hilbert_image_inside_every_sample(self, model2, grid):
        constraints = sample_outer_polytope(model2, 6, seed=21)
        rng = np.random.default_rng(22)
        for _ in range(5):
            H = hilb(random_radial_potential(model2, rng, grid), model2)
            for c in constraints:
                assert check_membership(H, c).classification == "strict_inside"

    def test_json_roundtrip(self, model2):
        c = sample_outer_polytope(model2, 1, seed=3)[0]
        back = HalfSpaceConstraint.from_json(c.to_json())
        assert np.allclose(back.q_num, c.q_num)
        assert back.bound == c.bound
