import numpy as np
import pytest

from ce_lab.models import ChannelSpec, Partition
from ce_lab.models.errors import InvalidChannel, InvalidPartition, NotAGroup, NotUnitary
from ce_lab.services.builders import (
    BuilderKind,
    absorbing_channel,
    averaged_channel,
    cesaro_mean,
    cesaro_projection,
    conjugated_pinching,
    group_average,
    haar_unitary,
    pinching,
    random_channel,
    random_instance,
)
from ce_lab.services.construct import range_of
from ce_lab.services.cp_maps import from_kraus
from ce_lab.services.linalg import adjoint, is_unitary_residual, matrix_unit, orthonormal_span, subspace_equal

from conftest import absorbing_kraus, diag3


def test_partition_rejects_overlap_and_gaps():
    with pytest.raises(InvalidPartition):
        Partition(ambient_dim=3, blocks=((1, 2), (2, 3)))
    with pytest.raises(InvalidPartition):
        Partition(ambient_dim=3, blocks=((1,), (3,)))


def test_pinching_range_dimension(pinch3, tol):
    partition = Partition(ambient_dim=3, blocks=((1, 2), (3,)))
    assert partition.range_dim == 5
    assert range_of(pinch3, tol).dim == 5
    assert pinch3.certificate(tol).is_projection


def test_group_average_of_sign_flip_is_diagonal_pinching(pinch2, tol):
    phi = group_average([np.eye(2), np.diag([1.0, -1.0])], tol)
    assert np.allclose(phi.choi, pinch2.choi)


def test_group_average_rejects_non_groups(tol):
    with pytest.raises(NotAGroup):
        group_average([np.eye(2), np.diag([1.0, 1j])], tol)
    with pytest.raises(NotUnitary):
        group_average([np.eye(2), 2 * np.eye(2)], tol)
    with pytest.raises(NotAGroup):
        group_average([], tol)


def test_conjugated_pinching_is_a_projection(tol):
    u = haar_unitary(3, np.random.default_rng(2))
    phi = conjugated_pinching(u, Partition(ambient_dim=3, blocks=((1,), (2, 3))), tol)
    assert phi.certificate(tol).is_projection
    x = np.random.default_rng(3).standard_normal((3, 3))
    y = adjoint(u) @ phi.apply(x) @ u
    assert np.allclose(y[0, 1:], 0) and np.allclose(y[1:, 0], 0)


def test_conjugated_pinching_rejects_size_mismatch(tol):
    with pytest.raises(NotUnitary):
        conjugated_pinching(np.eye(2), Partition(ambient_dim=3, blocks=((1, 2, 3),)), tol)


def test_haar_unitary_is_unitary():
    assert is_unitary_residual(haar_unitary(5, np.random.default_rng(0))) < 1e-12


def test_cesaro_of_absorbing_channel(absorbing3, tol):
    x = np.arange(9, dtype=float).reshape(3, 3) + 1j
    assert np.allclose(absorbing3.apply(x), diag3(x[0, 0], x[1, 1], (x[0, 0] + x[1, 1]) / 2))
    cert = absorbing3.certificate(tol)
    assert cert.is_projection
    assert cert.unital


def test_cesaro_of_a_unitary_flip_is_the_commutant_pinching(pinch2, tol):
    channel = ChannelSpec(kraus=(np.diag([1.0, -1.0]),), trace_preserving=True)
    phi = cesaro_projection(channel, tol)
    assert np.allclose(phi.choi, pinch2.choi, atol=1e-10)


def test_cesaro_mean_of_an_idempotent_settles_at_once(pinch2, tol):
    limit, iterations = cesaro_mean(pinch2.transfer, tol)
    assert iterations == 1
    assert np.allclose(limit, pinch2.transfer)


def test_cesaro_mean_stops_once_the_window_absorbs_the_channel(tol):
    flip = np.diag([1.0, -1.0, -1.0, 1.0]).astype(complex)
    limit, iterations = cesaro_mean(flip, tol)
    assert iterations == 1
    assert np.allclose(limit, (flip + np.eye(4)) / 2)


def test_cesaro_of_a_rotation_averages_out_the_phase(pinch2, tol):
    u = np.diag([1.0, np.exp(2j * np.pi / 3)])
    _, iterations = cesaro_mean(from_kraus([u]).transfer, tol)
    assert iterations == 2
    phi = cesaro_projection(ChannelSpec(kraus=(u,), trace_preserving=True), tol)
    assert np.allclose(phi.choi, pinch2.choi, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_cesaro_range_matches_fixed_point_multiplicity(seed, tol):
    channel = random_channel(2, np.random.default_rng(seed))
    phi = cesaro_projection(channel, tol)
    assert phi.certificate(tol).is_projection
    eigs = np.linalg.eigvals(from_kraus(channel.kraus).transfer)
    assert range_of(phi, tol).dim == int(np.sum(np.abs(eigs - 1) < 1e-6))


@pytest.mark.parametrize("seed", range(3))
def test_cesaro_projection_absorbs_the_averaged_channel(seed, tol):
    channel = absorbing_channel(3, np.random.default_rng(seed))
    averaged = averaged_channel(channel, tol)
    phi = cesaro_projection(channel, tol)
    for composed in (phi.compose(averaged), averaged.compose(phi)):
        assert np.abs(composed.transfer - phi.transfer).max() < tol.eps_residual


def test_trace_preserving_channel_is_averaged_through_its_dual(absorbing3):
    kraus = absorbing_kraus()
    channel = from_kraus(kraus)
    dual = from_kraus([adjoint(k) for k in kraus])
    assert np.allclose(absorbing3.compose(dual).transfer, absorbing3.transfer)
    assert np.allclose(dual.compose(absorbing3).transfer, absorbing3.transfer)
    e22 = matrix_unit(3, 2, 2)
    assert np.allclose(absorbing3.apply(e22), 0)
    assert np.allclose(absorbing3.apply(channel.apply(e22)), np.eye(3) / 2)


def test_cesaro_rejects_expanding_channel(tol):
    with pytest.raises(InvalidChannel):
        cesaro_projection(ChannelSpec(kraus=(2 * np.eye(2),)), tol)


def test_trace_preserving_flag_is_validated():
    with pytest.raises(InvalidChannel):
        ChannelSpec(kraus=(2 * np.eye(2),), trace_preserving=True)
    assert ChannelSpec(kraus=absorbing_kraus(), trace_preserving=True).tp_residual < 1e-12


def test_absorbing_channel_is_trace_preserving():
    channel = absorbing_channel(4, np.random.default_rng(9))
    assert channel.trace_preserving
    assert channel.tp_residual < 1e-10


@pytest.mark.parametrize("kind", BuilderKind.list_values())
def test_random_instances_are_certified_projections(kind, tol):
    for seed in (0, 1):
        phi = random_instance(3, kind, seed, tol)
        assert phi.ambient_dim == 3
        assert phi.certificate(tol).is_projection


@pytest.mark.parametrize("n", [2, 4, 6])
def test_cesaro_instances_settle_at_every_size(n, tol):
    for seed in range(3):
        assert random_instance(n, "cesaro", seed, tol).certificate(tol).is_projection


def test_random_instance_is_deterministic(tol):
    first = random_instance(4, "cesaro", 5, tol)
    second = random_instance(4, "cesaro", 5, tol)
    assert np.array_equal(first.choi, second.choi)


def test_random_instance_rejects_bad_size_and_kind(tol):
    with pytest.raises(ValueError):
        random_instance(9, "pinch", 0, tol)
    with pytest.raises(ValueError):
        random_instance(3, "nonsense", 0, tol)


def test_pinching_of_single_block_is_identity(identity2):
    phi = pinching(Partition(ambient_dim=2, blocks=((1, 2),)))
    assert np.allclose(phi.choi, identity2.choi)


def _set_partitions(n):
    labellings = [[0]]
    for _ in range(n - 1):
        labellings = [labels + [k] for labels in labellings for k in range(max(labels) + 2)]
    return [Partition.from_labels(labels) for labels in labellings]


@pytest.mark.parametrize("n, count", [(2, 2), (3, 5), (4, 15)])
def test_pinching_range_dimension_for_every_partition(n, count, tol):
    partitions = _set_partitions(n)
    assert len(partitions) == count
    for partition in partitions:
        expected = sum(len(block) ** 2 for block in partition.blocks)
        assert partition.range_dim == expected
        assert range_of(pinching(partition), tol).dim == expected


def test_group_average_is_invariant_under_the_group(tol):
    rng = np.random.default_rng(6)
    v = haar_unitary(3, rng)
    shift = v @ np.roll(np.eye(3), 1, axis=0) @ adjoint(v)
    group = [np.eye(3, dtype=complex), shift, shift @ shift]
    phi = group_average(group, tol)
    for _ in range(5):
        x = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        for u in group:
            assert np.linalg.norm(phi.apply(u @ x @ adjoint(u)) - phi.apply(x)) < tol.eps_residual


@pytest.mark.parametrize("n, blocks", [(2, ((1,), (2,))), (3, ((1,), (2, 3))), (4, ((1, 3), (2, 4)))])
def test_conjugated_range_is_the_rotated_pinching_range(n, blocks, tol):
    partition = Partition(ambient_dim=n, blocks=blocks)
    u = haar_unitary(n, np.random.default_rng(8))
    rotated = orthonormal_span(
        np.stack([u @ b @ adjoint(u) for b in range_of(pinching(partition), tol).basis]), tol
    )
    conjugated = range_of(conjugated_pinching(u, partition, tol), tol)
    assert conjugated.dim == partition.range_dim
    assert subspace_equal(conjugated, rotated, tol).gap < tol.eps_residual
