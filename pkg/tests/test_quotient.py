import numpy as np
import pytest

from ce_lab.models import IdealCertificate, Tolerances
from ce_lab.models.errors import BlockSplitError
from ce_lab.services.construct import algebra_context, ideal_J
from ce_lab.services.linalg import matrix_unit, matrix_units, orthonormal_span
from ce_lab.services.quotient import (
    algebra_unit,
    center,
    order_iso_check,
    quotient_iso,
    unital_isometry_check,
    wedderburn,
)

from conftest import diag3

TOL = Tolerances()


def _iso(cp_map):
    ctx = algebra_context(cp_map, TOL)
    cert = ideal_J(ctx, TOL)
    return quotient_iso(ctx, cert, wedderburn(ctx.A0, TOL), TOL)


def test_diagonal_algebra_splits_into_scalars():
    A0 = orthonormal_span(np.stack([matrix_unit(3, i, i) for i in range(3)]), TOL)
    w = wedderburn(A0, TOL)
    assert sorted(w.block_dims) == [(1, 1), (1, 1), (1, 1)]
    assert w.dimension == 3
    assert np.allclose(w.unit, np.eye(3))


def test_full_matrix_algebra_is_one_block():
    A0 = orthonormal_span(matrix_units(2), TOL)
    assert center(A0, TOL).dim == 1
    w = wedderburn(A0, TOL)
    assert w.block_dims == ((2, 1),)


def test_repeated_block_has_multiplicity_two():
    A0 = orthonormal_span(np.stack([np.kron(np.eye(2), e) for e in matrix_units(2)]), TOL)
    w = wedderburn(A0, TOL)
    assert w.block_dims == ((2, 2),)
    assert np.allclose(w.central_projections[0], np.eye(4))


def test_mixed_blocks(pinch3):
    ctx = algebra_context(pinch3, TOL)
    w = wedderburn(ctx.A0, TOL, seed=3)
    assert sorted(w.block_dims) == [(1, 1), (2, 1)]
    assert w.projection_residual < 1e-10


def test_unit_of_a_corner_algebra():
    A0 = orthonormal_span(np.stack([matrix_unit(3, 0, 0), matrix_unit(3, 0, 1), matrix_unit(3, 1, 0), matrix_unit(3, 1, 1)]), TOL)
    assert np.allclose(algebra_unit(A0, TOL), np.diag([1.0, 1.0, 0.0]))


def test_wedderburn_is_deterministic_per_seed(pinch3):
    ctx = algebra_context(pinch3, TOL)
    first = wedderburn(ctx.A0, TOL, seed=5)
    second = wedderburn(ctx.A0, TOL, seed=5)
    assert first.block_dims == second.block_dims
    for p, q in zip(first.central_projections, second.central_projections):
        assert np.array_equal(p, q)


def test_identity_quotient_is_trivial(identity2):
    iso = _iso(identity2)
    assert iso.B.dim == 4
    assert iso.wedderburn.in_J == (False,)
    x = np.array([[1, 2j], [3, 4]], dtype=complex)
    assert np.allclose(iso.rho(x), x)
    assert np.allclose(iso.rho_inverse(x), x)


def test_absorbing_example_quotient(absorbing3):
    iso = _iso(absorbing3)
    assert sorted(iso.wedderburn.in_J) == [False, False, True]
    assert iso.B.dim == 2
    assert np.allclose(iso.kept_projection, np.diag([1.0, 1.0, 0.0]))
    assert np.allclose(iso.rho(matrix_unit(3, 0, 0)), diag3(1.0, 0.0, 0.5))
    assert np.allclose(iso.rho_inverse(diag3(1.0, 0.0, 0.5)), matrix_unit(3, 0, 0))
    assert iso.intertwining_residual < 1e-10


def test_block_meeting_the_ideal_is_rejected(identity2):
    ctx = algebra_context(identity2, TOL)
    corner = orthonormal_span(np.stack([matrix_unit(2, 0, 0)]), TOL)
    fake = IdealCertificate(
        J=corner,
        generator_count=0,
        generator_image_residual=0.0,
        right_closure_residual=1.0,
        left_closure_residual=1.0,
        kernel_gap=1.0,
    )
    with pytest.raises(BlockSplitError):
        quotient_iso(ctx, fake, wedderburn(ctx.A0, TOL), TOL)


@pytest.mark.parametrize("fixture", ["identity2", "pinch3", "absorbing3", "corner2"])
def test_order_isomorphism_up_to_level_three(fixture, request):
    iso = _iso(request.getfixturevalue(fixture))
    report = order_iso_check(iso, k_max=3, trials=10, seed=0, tol=TOL)
    assert [level.k for level in report.levels] == [1, 2, 3]
    assert report.passed
    assert report.min_eig >= -1e-8


def test_isometry_on_unital_example(absorbing3):
    report = unital_isometry_check(_iso(absorbing3), trials=20, seed=0, tol=TOL)
    assert report.gated
    assert report.trials == 20
    assert report.deviation < 1e-6


def test_isometry_is_not_gated_without_a_unit(corner2):
    report = unital_isometry_check(_iso(corner2), trials=5, seed=0, tol=TOL)
    assert not report.gated
