"""Numerical laboratory for the Hilbert map on (CP^1, O(k))."""

from .geometry import (Point, PolarizedModel, SectionFamily, SectionPoly,
                       eval_section, family_vanishing_profile,
                       is_minimal_generating, monomial_basis)
from .hilbert import (HermitianForm, QuadratureRule, default_rule, fs_gram,
                      hilb, hilb_from_measure, hilb_refined,
                      section_value_vector, unvectorize_hermitian,
                      vectorize_hermitian)
from .monge_ampere import (bump_density, bump_grid, convex_combination_f,
                           ma_density, solve_ma)
from .potentials import (GeneralPotential, GridMap, RadialFunction, RadialGrid,
                         RadialPotential, SumPotential, constant_potential,
                         default_grid, graded_grid, random_radial_potential,
                         zero_potential)
from .constraints import (HalfSpaceConstraint, check_membership, pairing,
                          prune_families, ratio_sup, reduce_constraint,
                          sample_outer_polytope)
from .cone import (ConeFit, approximate_hilb_by_points, cone_fit,
                   circle_points, default_point_set, h_independence_check,
                   point_gram)
from .linearization import (FunctionBasis, InversionResult, SpectrumResult,
                            invert_hilbert, laplacian_spectrum,
                            products_independence, tangent_map, tangent_rank)

__version__ = "0.1.0"
