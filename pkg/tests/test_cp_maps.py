from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from ce_lab.models import Tolerances
from ce_lab.models.errors import DimensionError, NotPSD, UncertifiedMap
from ce_lab.services.builders import random_channel
from ce_lab.services.cp_maps import (
    CPMap,
    from_kraus,
    identity_map,
    kadison_schwarz_check,
    kraus_from_choi,
    trace_map,
    transpose_symmetrization,
    zero_map,
)
from ce_lab.services.linalg import adjoint, matrix_unit


def test_identity_map_applies_as_identity(identity2):
    x = np.array([[1, 2j], [3, 4]], dtype=complex)
    assert np.allclose(identity2.apply(x), x)


def test_choi_of_identity_is_rank_one():
    choi = identity_map(2).choi
    expected = np.zeros((4, 4))
    for i, a in ((0, 0), (0, 3), (3, 0), (3, 3)):
        expected[i, a] = 1.0
    assert np.allclose(choi, expected)


def test_pinching_kills_off_diagonal(pinch2):
    x = np.array([[1, 2], [3, 4]], dtype=complex)
    assert np.allclose(pinch2.apply(x), np.diag([1, 4]))


def test_function_and_kraus_constructions_agree():
    rng = np.random.default_rng(3)
    kraus = [rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)) for _ in range(2)]
    direct = from_kraus(kraus)
    sampled = CPMap.from_function(3, lambda x: sum(k @ x @ adjoint(k) for k in kraus))
    assert np.allclose(direct.choi, sampled.choi)


def test_kraus_from_choi_reproduces_the_map(tol):
    channel = random_channel(3, np.random.default_rng(8))
    original = from_kraus(channel.kraus)
    rebuilt = from_kraus(kraus_from_choi(original, tol))
    assert np.allclose(original.choi, rebuilt.choi)


def test_kraus_from_choi_of_zero_map_is_empty(tol):
    assert kraus_from_choi(zero_map(2), tol) == []


def test_identity_certificate(identity2, tol):
    cert = identity2.certificate(tol)
    assert cert.cp and cert.contractive and cert.idempotent
    assert cert.unital and cert.star_preserving
    assert cert.is_projection
    assert cert.failures() == []


def test_trace_map_certificate(tol):
    phi = trace_map(3)
    assert np.allclose(phi.apply(np.diag([1.0, 2.0, 3.0])), 2.0 * np.eye(3))
    assert phi.certificate(tol).is_projection
    assert phi.certificate(tol).unital


def test_zero_map_is_a_projection(tol):
    cert = zero_map(3).certificate(tol)
    assert cert.is_projection
    assert cert.norm_of_unit_image == 0.0


def test_transpose_symmetrization_is_not_cp(tol):
    cert = transpose_symmetrization(2).certificate(tol)
    assert not cert.cp
    assert cert.contractive is None
    assert cert.idempotent
    assert cert.choi_min_eig < -0.4
    assert cert.failures() == ["cp", "contractive"]


def test_random_channel_is_not_idempotent(tol):
    channel = from_kraus(random_channel(3, np.random.default_rng(1)).kraus)
    cert = channel.certificate(tol)
    assert cert.cp
    assert not cert.idempotent


def test_corner_map_is_not_unital(corner2, tol):
    cert = corner2.certificate(tol)
    assert cert.is_projection
    assert not cert.unital
    assert cert.norm_of_unit_image == pytest.approx(1.0)


def test_certificate_is_memoised(pinch3, tol):
    first = pinch3.certificate(tol)
    assert pinch3.certificate(tol) is first
    assert pinch3.certificate(Tolerances(eps_residual=1e-6)) is not first


def test_certificate_agrees_across_threads(pinch3, tol):
    with ThreadPoolExecutor(max_workers=4) as pool:
        certs = list(pool.map(lambda _: pinch3.certificate(tol), range(8)))
    assert all(c == certs[0] for c in certs)


def test_kadison_schwarz_holds_for_a_pinching(pinch3, tol):
    rng = np.random.default_rng(4)
    for _ in range(10):
        g = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        z = adjoint(g) @ g
        y = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        assert kadison_schwarz_check(pinch3, z / np.linalg.norm(z, 2), y / np.linalg.norm(y, 2), tol).holds


def test_kadison_schwarz_rejects_uncertified_map(tol):
    with pytest.raises(UncertifiedMap):
        kadison_schwarz_check(transpose_symmetrization(2), np.eye(2), np.eye(2), tol)


def test_kadison_schwarz_rejects_non_positive_z(identity2, tol):
    with pytest.raises(NotPSD):
        kadison_schwarz_check(identity2, np.diag([1.0, -1.0]), np.eye(2), tol)
    with pytest.raises(NotPSD):
        kadison_schwarz_check(identity2, matrix_unit(2, 0, 1), np.eye(2), tol)


def test_apply_checks_dimension(identity2):
    with pytest.raises(DimensionError):
        identity2.apply(np.eye(3))


def test_apply_many_accepts_an_empty_stack(pinch2):
    for phi in (pinch2, CPMap(pinch2.choi)):
        assert phi.apply_many(np.zeros((0, 2, 2))).shape == (0, 2, 2)
