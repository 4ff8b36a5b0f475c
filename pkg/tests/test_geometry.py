import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hilbmap.geometry import (Point, PolarizedModel, SectionFamily, SectionPoly,
                              eval_section, family_vanishing_profile,
                              is_minimal_generating, monomial_basis)


def sec(*coeffs):
    return SectionPoly(np.array(coeffs, dtype=complex))


class TestEvalSection:
    def test_monomial_vanishes_at_origin(self):
        for k in (1, 2, 4):
            for a in range(1, k + 1):
                val, chart = eval_section(SectionPoly.monomial(k, a), Point.finite(0))
                assert val == 0 and chart == "z"

    def test_constant_section_in_affine_frame(self):
        s = sec(1, 0, 0)
        for z in (0, 1.5, -2j, 0.3 + 0.4j):
            val, chart = eval_section(s, Point.finite(z))
            assert val == 1 and chart == "z"

    def test_top_monomial_at_infinity(self):
        for k in (1, 2, 5):
            val, chart = eval_section(SectionPoly.monomial(k, k), Point.infinity())
            assert val == 1 and chart == "w"

    def test_lower_monomials_vanish_at_infinity(self):
        s = sec(0.3, -1.0, 0)  # degree 1 section of O(2)
        val, chart = eval_section(s, Point.infinity())
        assert val == 0 and chart == "w"
        assert s.order_at(Point.infinity()) == 1


coeff_lists = st.lists(
    st.complex_numbers(min_magnitude=0, max_magnitude=5, allow_nan=False,
                       allow_infinity=False),
    min_size=2, max_size=6)


class TestFrameCovariance:
    @given(coeff_lists,
           st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3,
                              allow_nan=False, allow_infinity=False))
    def test_w_frame_equals_scaled_z_frame(self, coeffs, w):
        s = SectionPoly(np.array(coeffs))
        lhs = s.eval_w(w)
        rhs = w ** s.k * s.eval_z(1.0 / w)
        scale = max(1.0, abs(lhs), abs(rhs))
        assert abs(lhs - rhs) <= 1e-9 * scale


class TestVanishingProfile:
    def test_generating_pair_has_empty_profile(self):
        for k in (1, 2, 3):
            fam = SectionFamily((SectionPoly.monomial(k, 0), SectionPoly.monomial(k, k)))
            assert family_vanishing_profile(fam) == []

    def test_common_finite_zero_with_min_order(self):
        # gcd of (z, z^2) is z: a single common zero of order one at 0
        fam = SectionFamily((sec(0, 1, 0), sec(0, 0, 1)))
        profile = family_vanishing_profile(fam)
        assert len(profile) == 1
        p, order = profile[0]
        assert not p.at_infinity and abs(p.z) <= 1e-12 and order == 1

    def test_common_zero_at_infinity_from_degree_deficit(self):
        # degrees 0 and 1 inside O(2): orders at infinity 2 and 1
        fam = SectionFamily((sec(1, 0, 0), sec(0, 1, 0)))
        profile = family_vanishing_profile(fam)
        assert len(profile) == 1
        p, order = profile[0]
        assert p.at_infinity and order == 1

    def test_all_zero_family_rejected(self):
        fam = SectionFamily((sec(0, 0), sec(0, 0)))
        with pytest.raises(ValueError):
            family_vanishing_profile(fam)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_invariant_under_invertible_recombination(self, seed):
        rng = np.random.default_rng(seed)
        fam = SectionFamily((sec(0, 1, 0), sec(0, 0, 1)))  # common zero at 0
        while True:
            U = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            if abs(np.linalg.det(U)) > 0.2:
                break
        before = family_vanishing_profile(fam)
        after = family_vanishing_profile(fam.transform(U))
        assert len(before) == len(after)
        for (p, o), (q, r) in zip(before, after):
            assert o == r
            assert p.at_infinity == q.at_infinity
            if not p.at_infinity:
                assert abs(p.z - q.z) <= 1e-8


class TestMinimalGenerating:
    def test_pair_one_and_top_monomial(self):
        for k in range(1, 6):
            fam = SectionFamily((SectionPoly.monomial(k, 0), SectionPoly.monomial(k, k)))
            assert is_minimal_generating(fam)

    def test_full_monomials_not_minimal(self):
        model = PolarizedModel(2)
        assert not is_minimal_generating(monomial_basis(model))

    def test_single_section_does_not_generate(self):
        fam = SectionFamily((sec(1, 0),))
        assert not is_minimal_generating(fam)

    def test_dependent_family_rejected(self):
        fam = SectionFamily((sec(1, 0), sec(2, 0)))
        with pytest.raises(ValueError):
            is_minimal_generating(fam)

    def test_generic_pencil_is_minimal(self):
        fam = SectionFamily((sec(1, 0, 1), sec(0, 1, 0)))  # 1 + z^2 and z
        assert is_minimal_generating(fam)


class TestSerialization:
    def test_point_roundtrip(self):
        for p in (Point.finite(1.5 - 0.25j), Point.infinity()):
            assert Point.from_json(p.to_json()) == p

    def test_family_roundtrip(self):
        fam = SectionFamily((sec(1, 2j, -0.5), sec(0, 1, 0)), label="probe")
        back = SectionFamily.from_json(fam.to_json())
        assert back.label == "probe"
        assert np.allclose(back.coeff_matrix(), fam.coeff_matrix())
