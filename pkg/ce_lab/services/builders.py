"""
Generators of completely positive contractive idempotents.

Pinchings, finite group averages and their unitary conjugates give ranges that
are already algebras. Cesàro projections of channels with transient parts give
ranges that are not closed under the ordinary product, which is where the
Choi-Effros product carries real content.
"""

from __future__ import annotations

import enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ce_lab.models import ChannelSpec, ComplexMatrix, Partition, Tolerances
from ce_lab.models.errors import (
    IdempotencyFailed,
    InvalidChannel,
    NoConvergence,
    NotAGroup,
    NotUnitary,
)
from ce_lab.services.cp_maps import CPMap, from_kraus
from ce_lab.services.linalg import (
    adjoint,
    as_matrix,
    is_unitary_residual,
    operator_norm,
    orthonormal_columns,
)
from ce_lab.utils.log_util import configure_logger

log = configure_logger(__name__)

MAX_GROUP_ORDER = 48
CESARO_RETRIES = 16
DEFAULT_MAX_ITER = 40
POLISH_STEPS = 60
POLISH_BLOWUP = 1e6


class BuilderKind(str, enum.Enum):
    PINCH = "pinch"
    GROUP = "group"
    CONJUGATED = "conjugated"
    CESARO = "cesaro"

    @classmethod
    def list_values(cls) -> List[str]:
        return [kind.value for kind in cls]


def pinching(p: Partition) -> CPMap:
    """x ↦ Σ_b P_b x P_b over the coordinate projections of the partition blocks."""
    return from_kraus(p.projections(), label=f"pinch{list(p.blocks)}")


def _check_unitary(u: ComplexMatrix, tol: Tolerances) -> ComplexMatrix:
    u = as_matrix(u)
    residual = is_unitary_residual(u)
    if residual > tol.eps_residual:
        raise NotUnitary(f"||u*u - I|| = {residual:.3e}")
    return u


def _index_of(elements: np.ndarray, x: ComplexMatrix, tol: Tolerances) -> Optional[int]:
    distances = np.linalg.norm((elements - x).reshape(len(elements), -1), axis=1)
    idx = int(np.argmin(distances))
    return idx if distances[idx] <= tol.eps_residual else None


def group_average(unitaries: Sequence[ComplexMatrix], tol: Tolerances) -> CPMap:
    """
    Average of the conjugations x ↦ u x u* over a finite unitary group.

    Closure under products and inverses is checked through the full
    multiplication table; groups are capped at 48 elements.
    """
    if not unitaries:
        raise NotAGroup("empty list of unitaries")
    if len(unitaries) > MAX_GROUP_ORDER:
        raise NotAGroup(f"group order {len(unitaries)} exceeds the cap of {MAX_GROUP_ORDER}")
    checked = [_check_unitary(u, tol) for u in unitaries]
    n = checked[0].shape[0]
    if any(u.shape != (n, n) for u in checked):
        raise NotAGroup("group elements of different dimensions")
    elements = np.stack(checked)
    for g in elements:
        if _index_of(elements, adjoint(g), tol) is None:
            raise NotAGroup("list is not closed under inverses")
        for h in elements:
            if _index_of(elements, g @ h, tol) is None:
                raise NotAGroup("list is not closed under products")
    weight = 1.0 / np.sqrt(len(elements))
    return from_kraus([weight * u for u in elements], label=f"group_average[{len(elements)}]")


def conjugated_pinching(u: ComplexMatrix, p: Partition, tol: Optional[Tolerances] = None) -> CPMap:
    """x ↦ u · pinch(u* x u) · u*."""
    tol = tol or Tolerances()
    u = _check_unitary(u, tol)
    if u.shape[0] != p.ambient_dim:
        raise NotUnitary(f"unitary of size {u.shape[0]} for a partition of {p.ambient_dim}")
    return from_kraus([u @ proj @ adjoint(u) for proj in p.projections()], label=f"conjugated_pinch{list(p.blocks)}")


def averaged_channel(ch: ChannelSpec, tol: Tolerances) -> CPMap:
    """
    The map whose powers get averaged.

    A contractive channel (‖T(I)‖ <= 1) is averaged as given. A trace-preserving
    channel that is not contractive is averaged through its Heisenberg dual
    x ↦ Σ K* x K, which is unital, so the limit stays contractive.
    """
    kraus = [np.asarray(k) for k in ch.kraus]
    unit_norm = operator_norm(sum(k @ adjoint(k) for k in kraus))
    if unit_norm <= 1.0 + tol.eps_residual:
        return from_kraus(kraus, label="channel")
    if ch.trace_preserving:
        return from_kraus([adjoint(k) for k in kraus], label="channel_dual")
    raise InvalidChannel(f"channel is neither contractive (||T(I)|| = {unit_norm:.3e}) nor trace preserving")


def _polish_idempotent(transfer: np.ndarray, steps: int = POLISH_STEPS) -> np.ndarray:
    """
    Iterate P ↦ 3P² - 2P³.

    Eigenvalues near 1 go to 1 and eigenvalues near 0 go to 0, so a matrix that
    commutes with T ends on one of T's spectral projections. Iteration stops
    early once the matrix is idempotent or blows up.
    """
    p = transfer
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            scale = float(np.linalg.norm(p))
            if not np.isfinite(scale) or scale > POLISH_BLOWUP:
                break
            p2 = p @ p
            if np.linalg.norm(p2 - p) < 1e-15 * max(1.0, scale):
                break
            p = 3 * p2 - 2 * p2 @ p
    return p


def _absorption_residual(transfer: np.ndarray, candidate: np.ndarray) -> float:
    """Largest of ‖P² - P‖, ‖TP - P‖ and ‖PT - P‖ in HS norm; inf for a non-finite P."""
    if not np.all(np.isfinite(candidate)):
        return float("inf")
    residuals = (
        candidate @ candidate - candidate,
        transfer @ candidate - candidate,
        candidate @ transfer - candidate,
    )
    return max(float(np.linalg.norm(r)) for r in residuals)


def cesaro_mean(transfer: np.ndarray, tol: Tolerances, max_iter: int = DEFAULT_MAX_ITER) -> Tuple[np.ndarray, int]:
    """
    Limit of the Cesàro means (1/N) Σ_{k=1..N} T^k over doubling windows N = 2^m.

    Windows are combined as S_2N = (S_N + T^N S_N) / 2 with T^2N = (T^N)². Each
    window is polished to an idempotent P, and iteration stops when consecutive
    windows differ by less than eps_residual in operator norm, or earlier when
    P absorbs T on both sides (TP = PT = P = P² within eps_residual).

    :return: (idempotent limit, number of doublings).
    """
    t = np.array(transfer, dtype=complex)
    power = t.copy()
    mean = t.copy()
    best = float("inf")
    for iteration in range(1, max_iter + 1):
        doubled = (mean + power @ mean) / 2
        if not np.all(np.isfinite(doubled)):
            break
        difference = float(np.linalg.norm(doubled - mean, 2))
        mean = doubled
        power = power @ power
        candidate = _polish_idempotent(mean)
        residual = _absorption_residual(t, candidate)
        log.debug("Cesàro window 2^%d: difference %.3e, absorption %.3e", iteration, difference, residual)
        if difference < tol.eps_residual or residual < tol.eps_residual:
            return candidate, iteration
        best = min(best, residual)
    raise NoConvergence(max_iter, best)


def cesaro_projection(ch: ChannelSpec, tol: Tolerances, max_iter: int = DEFAULT_MAX_ITER) -> CPMap:
    """
    Projection onto the fixed points of a channel, as the limit of its Cesàro means.

    :param ch: channel; contractive, or trace preserving (then averaged in the Heisenberg picture).
    :param max_iter: maximum number of window doublings.
    :return: CPMap certified cp, contractive and idempotent.
    """
    channel = averaged_channel(ch, tol)
    limit_transfer, iterations = cesaro_mean(channel.transfer, tol, max_iter)
    limit = CPMap.from_transfer(limit_transfer, label="cesaro")
    certificate = limit.certificate(tol)
    if certificate.idem_residual > 10 * tol.eps_residual:
        raise IdempotencyFailed(f"Cesàro limit has idempotency residual {certificate.idem_residual:.3e}")
    log.info(
        "Cesàro projection settled after %d windows; idem_residual=%.2e, choi_min_eig=%.2e",
        iterations,
        certificate.idem_residual,
        certificate.choi_min_eig,
    )
    return limit


def haar_unitary(n: int, rng: np.random.Generator) -> ComplexMatrix:
    return orthonormal_columns((n, n), rng)


def random_partition(n: int, rng: np.random.Generator) -> Partition:
    return Partition.from_labels(rng.integers(0, n, size=n).tolist())


def random_channel(n: int, rng: np.random.Generator, n_kraus: int = 2) -> ChannelSpec:
    """Trace-preserving channel from a Haar-random isometry C^n -> C^n ⊗ C^n_kraus."""
    v = orthonormal_columns((n * n_kraus, n), rng)
    kraus = [v[k * n:(k + 1) * n, :] for k in range(n_kraus)]
    return ChannelSpec(kraus=tuple(kraus), trace_preserving=True)


def absorbing_channel(n: int, rng: np.random.Generator, n_kraus: int = 2) -> ChannelSpec:
    """
    Trace-preserving channel with a transient subspace.

    Recurrent coordinates are pinched into random blocks and never leave them;
    transient coordinates are sent anywhere through a random isometry, so their
    weight drains into the recurrent blocks. The Heisenberg dual then has a
    fixed-point space that is generically not closed under products.
    """
    recurrent = int(rng.integers(1, n))
    labels = rng.integers(0, recurrent, size=recurrent).tolist()
    blocks = Partition.from_labels(labels).blocks
    kraus: List[np.ndarray] = []
    for block in blocks:
        proj = np.zeros((n, n), dtype=complex)
        idx = [i - 1 for i in block]
        proj[idx, idx] = 1.0
        kraus.append(proj)
    transient = n - recurrent
    v = orthonormal_columns((n * n_kraus, transient), rng)
    for k in range(n_kraus):
        op = np.zeros((n, n), dtype=complex)
        op[:, recurrent:] = v[k * n:(k + 1) * n, :]
        kraus.append(op)
    u = haar_unitary(n, rng)
    return ChannelSpec(kraus=tuple(u @ k @ adjoint(u) for k in kraus), trace_preserving=True)


def _random_group(n: int, rng: np.random.Generator) -> List[ComplexMatrix]:
    """Cyclic unitary group: either phases diag(ω^k) or a random permutation, conjugated by a Haar unitary."""
    v = haar_unitary(n, rng)
    if rng.random() < 0.5:
        order = int(rng.integers(2, 7))
        exponents = rng.integers(0, order, size=n)
        generator = np.diag(np.exp(2j * np.pi * exponents / order))
    else:
        perm = rng.permutation(n)
        generator = np.eye(n, dtype=complex)[perm]
    generator = v @ generator @ adjoint(v)
    elements = [np.eye(n, dtype=complex)]
    current = generator
    while operator_norm(current - np.eye(n)) > 1e-9 and len(elements) < MAX_GROUP_ORDER:
        elements.append(current)
        current = current @ generator
    return elements


def random_instance(n: int, kind: str, seed: int, tol: Optional[Tolerances] = None) -> CPMap:
    """
    Deterministic random projection of the given kind on M_n, 2 <= n <= 8.

    Cesàro instances retry with fresh sub-seeds [seed, attempt] up to 16 times.
    """
    tol = tol or Tolerances()
    if not 2 <= n <= 8:
        raise ValueError(f"random instances need 2 <= n <= 8, got {n}")
    kind = BuilderKind(kind)
    if kind is BuilderKind.PINCH:
        rng = np.random.default_rng([seed, 0])
        return pinching(random_partition(n, rng))
    if kind is BuilderKind.GROUP:
        rng = np.random.default_rng([seed, 0])
        return group_average(_random_group(n, rng), tol)
    if kind is BuilderKind.CONJUGATED:
        rng = np.random.default_rng([seed, 0])
        partition = random_partition(n, rng)
        return conjugated_pinching(haar_unitary(n, rng), partition, tol)

    last_error: Optional[Exception] = None
    for attempt in range(CESARO_RETRIES):
        rng = np.random.default_rng([seed, attempt])
        channel = absorbing_channel(n, rng)
        try:
            result = cesaro_projection(channel, tol)
        except (NoConvergence, IdempotencyFailed, np.linalg.LinAlgError) as exc:
            log.warning("Cesàro instance n=%d seed=%d attempt %d failed: %s", n, seed, attempt, exc)
            last_error = exc
            continue
        if result.certificate(tol).is_projection:
            result.label = f"cesaro(n={n}, seed={seed}, attempt={attempt})"
            return result
        log.warning("Cesàro instance n=%d seed=%d attempt %d failed certification", n, seed, attempt)
    raise NoConvergence(CESARO_RETRIES, float("nan")) from last_error
