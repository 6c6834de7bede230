"""
Block structure of A0, the quotient B = A0/J and the map ρ: B -> R.

A finite-dimensional C*-algebra is a direct sum of full matrix blocks, and an
ideal is a sum of some of them, so B is realised concretely as the sum of the
blocks of A0 that J does not contain. ρ(x + J) = Φ(x) and ρ⁻¹(x) = q x, where
q is the sum of the kept central projections.
"""

from __future__ import annotations

import dataclasses
import math
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from ce_lab.models import (
    AlgebraContext,
    IdealCertificate,
    IsometryReport,
    OperatorSubspace,
    OrderIsoLevel,
    OrderIsoReport,
    QuotientIso,
    Tolerances,
    WedderburnDecomposition,
)
from ce_lab.models.errors import BlockSplitError, ClusterAmbiguity, IsomorphismFailed, NotAnAlgebra
from ce_lab.services.linalg import (
    adjoint,
    ampliate,
    block_entries,
    max_containment_residual,
    operator_norm,
    orthonormal_span,
    products,
    random_element,
)
from ce_lab.utils.log_util import configure_logger

log = configure_logger(__name__)

CLUSTER_GAP = 1e-6
MAX_RESEEDS = 8
MAX_SHIFT_STEPS = 100


def algebra_unit(A0: OperatorSubspace, tol: Tolerances) -> np.ndarray:
    """Least-squares solve for u in A0 with u a = a = a u on the basis."""
    d = A0.dim
    n = A0.ambient_dim
    prods = products(A0.basis, A0.basis).reshape(d, d, n * n)
    # left law: Σ_k c_k a_k a_i = a_i, right law: Σ_k c_k a_i a_k = a_i
    left = prods.transpose(1, 2, 0).reshape(d * n * n, d)
    right = prods.transpose(0, 2, 1).reshape(d * n * n, d)
    system = np.concatenate([left, right])
    target = np.concatenate([A0.coords.reshape(-1), A0.coords.reshape(-1)])
    coeffs, *_ = np.linalg.lstsq(system, target, rcond=None)
    residual = float(np.abs(system @ coeffs - target).max())
    if residual > tol.eps_residual:
        raise NotAnAlgebra(f"A0 has no unit (least-squares residual {residual:.3e})")
    return A0.combine(coeffs)


def center(A0: OperatorSubspace, tol: Tolerances) -> OperatorSubspace:
    """Z(A0): elements of A0 commuting with every basis vector."""
    d = A0.dim
    n = A0.ambient_dim
    prods = products(A0.basis, A0.basis).reshape(d, d, n * n)
    # column k holds the commutators [a_k, a_i] for every i
    system = (prods - prods.transpose(1, 0, 2)).transpose(1, 2, 0).reshape(d * n * n, d)
    _, sing, vh = np.linalg.svd(system, full_matrices=True)
    cutoff = tol.eps_rank * max(1.0, float(sing[0]) if sing.size else 0.0)
    rank = int(np.count_nonzero(sing > cutoff))
    coeffs = vh[rank:].conj()
    if coeffs.shape[0] == 0:
        return OperatorSubspace.zero(n)
    return OperatorSubspace(ambient_dim=n, basis=np.tensordot(coeffs, A0.basis, axes=(1, 0)))


def _cluster(eigs: np.ndarray) -> List[List[int]]:
    scale = max(1.0, float(np.abs(eigs).max()))
    clusters = [[0]]
    for idx in range(1, len(eigs)):
        if eigs[idx] - eigs[idx - 1] > CLUSTER_GAP * scale:
            clusters.append([idx])
        else:
            clusters[-1].append(idx)
    return clusters


def _split(Z: OperatorSubspace, support: np.ndarray, rng: np.random.Generator) -> List[np.ndarray]:
    """Spectral projections of a random Hermitian central element, restricted to the unit's range."""
    z = random_element(Z, rng)
    h = (z + adjoint(z)) / 2
    eigs, vecs = scipy.linalg.eigh(adjoint(support) @ h @ support)
    projections = []
    for cluster in _cluster(eigs):
        w = support @ vecs[:, cluster]
        projections.append(w @ adjoint(w))
    return projections


def _projection_residual(projections: List[np.ndarray], unit: np.ndarray, A0: OperatorSubspace) -> float:
    worst = operator_norm(sum(projections) - unit)
    for i, p in enumerate(projections):
        worst = max(worst, operator_norm(p @ p - p), operator_norm(p - adjoint(p)))
        commutators = products(p[None], A0.basis) - products(A0.basis, p[None])
        if A0.dim:
            worst = max(worst, float(np.linalg.norm(commutators.reshape(A0.dim, -1), axis=1).max()))
        for q in projections[i + 1:]:
            worst = max(worst, operator_norm(p @ q))
    return worst


def wedderburn(A0: OperatorSubspace, tol: Tolerances, seed: int = 0) -> WedderburnDecomposition:
    """
    Minimal central projections of A0 and the (block size, multiplicity) of each block.

    The number of minimal central projections equals dim Z(A0); a split with fewer
    clusters merged two blocks by chance and is redrawn with a fresh seed.
    """
    n = A0.ambient_dim
    if A0.dim == 0:
        return WedderburnDecomposition(
            central_projections=(),
            block_dims=(),
            blocks=(),
            unit=np.zeros((n, n), dtype=complex),
            projection_residual=0.0,
        )
    unit = algebra_unit(A0, tol)
    unit_eigs, unit_vecs = scipy.linalg.eigh((unit + adjoint(unit)) / 2)
    support = unit_vecs[:, unit_eigs > 0.5]
    Z = center(A0, tol)

    projections: Optional[List[np.ndarray]] = None
    reseeds = 0
    for reseeds in range(MAX_RESEEDS + 1):
        candidate = _split(Z, support, np.random.default_rng([seed, reseeds]))
        if len(candidate) == Z.dim:
            projections = candidate
            break
        log.debug("central split with seed [%d, %d] gave %d of %d blocks", seed, reseeds, len(candidate), Z.dim)
    if projections is None:
        raise ClusterAmbiguity(f"no split into {Z.dim} blocks after {MAX_RESEEDS} reseeds")

    residual = _projection_residual(projections, unit, A0)
    if residual > tol.eps_residual:
        raise NotAnAlgebra(f"central projections fail their identities by {residual:.3e}")

    block_dims: List[Tuple[int, int]] = []
    blocks: List[OperatorSubspace] = []
    for p in projections:
        block = orthonormal_span(products(p[None], A0.basis), tol, ambient_dim=n)
        size = math.isqrt(block.dim)
        rank = int(round(float(np.trace(p).real)))
        if size * size != block.dim or size == 0 or rank % size:
            raise NotAnAlgebra(f"block of dimension {block.dim} and rank {rank} is not a full matrix block")
        block_dims.append((size, rank // size))
        blocks.append(block)
    if sum(size * size for size, _ in block_dims) != A0.dim:
        raise NotAnAlgebra(f"blocks {block_dims} do not add up to dim A0 = {A0.dim}")
    log.info("Wedderburn blocks of A0 (dim %d): %s after %d reseeds", A0.dim, block_dims, reseeds)
    return WedderburnDecomposition(
        central_projections=tuple(projections),
        block_dims=tuple(block_dims),
        blocks=tuple(blocks),
        unit=unit,
        projection_residual=residual,
        reseeds=reseeds,
    )


def _block_in_ideal(block: OperatorSubspace, p: np.ndarray, J: OperatorSubspace, tol: Tolerances) -> bool:
    inside = max_containment_residual(J, block.basis) <= tol.eps_residual
    if inside:
        return True
    overlap = float(np.linalg.norm(products(p[None], J.basis).reshape(J.dim, -1), axis=1).max()) if J.dim else 0.0
    if overlap <= tol.eps_residual:
        return False
    raise BlockSplitError(f"block meets J without lying in it (overlap {overlap:.3e})")


def quotient_iso(
    ctx: AlgebraContext, cert: IdealCertificate, w: WedderburnDecomposition, tol: Tolerances
) -> QuotientIso:
    n = ctx.ambient_dim
    in_J = tuple(_block_in_ideal(b, p, cert.J, tol) for b, p in zip(w.blocks, w.central_projections))
    w = dataclasses.replace(w, in_J=in_J)
    kept = [p for p, dropped in zip(w.central_projections, in_J) if not dropped]
    kept_projection = sum(kept) if kept else np.zeros((n, n), dtype=complex)
    kept_blocks = [b.basis for b, dropped in zip(w.blocks, in_J) if not dropped]
    B = orthonormal_span(np.concatenate(kept_blocks), tol, ambient_dim=n) if kept_blocks else OperatorSubspace.zero(n)

    kept_dim = sum(size * size for (size, _), dropped in zip(w.block_dims, in_J) if not dropped)
    if kept_dim != ctx.R.dim or B.dim != ctx.R.dim:
        raise IsomorphismFailed(f"dim B = {B.dim} (blocks {kept_dim}) but dim R = {ctx.R.dim}")

    d = B.dim
    forward = np.zeros((0, 0), dtype=complex)
    inverse = np.zeros((0, 0), dtype=complex)
    forward_residual = inverse_residual = intertwining = 0.0
    if d:
        images = ctx.map.apply_many(B.basis)
        lifted = products(kept_projection[None], ctx.R.basis)
        forward = ctx.R.coords.conj() @ images.reshape(d, -1).T
        inverse = B.coords.conj() @ lifted.reshape(d, -1).T
        eye = np.eye(d)
        forward_residual = max(float(np.abs(forward @ inverse - eye).max()), max_containment_residual(ctx.R, images))
        inverse_residual = max(float(np.abs(inverse @ forward - eye).max()), max_containment_residual(B, lifted))
        # ρ(ab) against Φ(ρ(a)ρ(b)) over all basis pairs of B
        lhs = ctx.map.apply_many(products(B.basis, B.basis))
        rhs = ctx.map.apply_many(products(images, images))
        intertwining = float(np.linalg.norm((lhs - rhs).reshape(d * d, -1), axis=1).max())

    for name, value in (("ρ ρ⁻¹", forward_residual), ("ρ⁻¹ ρ", inverse_residual), ("intertwining", intertwining)):
        if value > tol.eps_residual:
            raise IsomorphismFailed(f"{name} residual {value:.3e} exceeds {tol.eps_residual:.1e}")
    log.info("Quotient B = A0/J: dim %d, blocks kept %s, intertwining %.2e", d, [not f for f in in_J], intertwining)
    return QuotientIso(
        context=ctx,
        wedderburn=w,
        B=B,
        kept_projection=kept_projection,
        forward=forward,
        inverse=inverse,
        forward_residual=forward_residual,
        inverse_residual=inverse_residual,
        intertwining_residual=intertwining,
    )


def _min_eig(x: np.ndarray) -> float:
    x = (x + adjoint(x)) / 2
    scale = max(1.0, operator_norm(x))
    return float(scipy.linalg.eigvalsh(x)[0]) / scale


def _entrywise(x: np.ndarray, k: int, fn) -> np.ndarray:
    grid = block_entries(x, k)
    return ampliate([[fn(grid[i, j]) for j in range(k)] for i in range(k)])


def _random_grid(S: OperatorSubspace, k: int, rng: np.random.Generator) -> np.ndarray:
    return ampliate([[random_element(S, rng) for _ in range(k)] for _ in range(k)])


def _hermitian_grid(S: OperatorSubspace, k: int, rng: np.random.Generator) -> np.ndarray:
    g = _random_grid(S, k, rng)
    return (g + adjoint(g)) / 2


def order_iso_check(iso: QuotientIso, k_max: int, trials: int, seed: int, tol: Tolerances) -> OrderIsoReport:
    """
    Push positive elements through id_k ⊗ ρ and id_k ⊗ ρ⁻¹ for k = 1..k_max.

    Positive elements of M_k(B) are drawn as Y*Y. Positive elements of M_k(R) come
    from a random Hermitian G shifted by λ (I_k ⊗ ρ(1)) in steps of 0.1 ‖G‖ until
    it is positive. Eigenvalues are reported relative to max(1, ‖X‖).
    """
    ctx = iso.context
    cp_map = ctx.map
    q = iso.kept_projection
    unit_image = cp_map.apply(q)
    levels: List[OrderIsoLevel] = []
    failures: List[str] = []
    if iso.B.dim == 0:
        return OrderIsoReport(levels=(), bound=tol.eps_psd)

    for k in range(1, k_max + 1):
        rng = np.random.default_rng([seed, k])
        forward_min = np.inf
        backward_min = np.inf
        shifted_unit = np.kron(np.eye(k), unit_image)
        for _ in range(trials):
            y = _random_grid(iso.B, k, rng)
            x = adjoint(y) @ y
            x = x / max(1.0, operator_norm(x))
            forward_min = min(forward_min, _min_eig(_entrywise(x, k, cp_map.apply)))

            g = _hermitian_grid(ctx.R, k, rng)
            g = g / max(operator_norm(g), 1e-300)
            step = 0.1 * operator_norm(g)
            candidate = g
            for _ in range(MAX_SHIFT_STEPS):
                if _min_eig(candidate) >= -tol.eps_psd:
                    break
                candidate = candidate + step * shifted_unit
            else:
                failures.append(f"k={k}: shifted Hermitian element never became positive")
                continue
            backward_min = min(backward_min, _min_eig(_entrywise(candidate, k, lambda r: q @ r)))

        level = OrderIsoLevel(
            k=k, min_eig_forward=float(forward_min), min_eig_backward=float(backward_min), trials=trials
        )
        for direction, value in (("forward", level.min_eig_forward), ("backward", level.min_eig_backward)):
            if value < -tol.eps_psd:
                failures.append(f"k={k}: {direction} min eigenvalue {value:.3e}")
                log.warning("order isomorphism fails at k=%d (%s): min eigenvalue %.3e", k, direction, value)
        levels.append(level)
    return OrderIsoReport(levels=tuple(levels), bound=tol.eps_psd, failures=tuple(failures))


def unital_isometry_check(iso: QuotientIso, trials: int, seed: int, tol: Tolerances) -> IsometryReport:
    """
    Ratio of the quotient norm of x + J to ‖x‖ for random x in R.

    Only gated when Φ is unital; otherwise the observed ratios are recorded as is.
    """
    gated = iso.context.map.certificate(tol).unital
    rng = np.random.default_rng([seed, 0])
    ratios = []
    for _ in range(trials):
        x = random_element(iso.context.R, rng)
        norm = operator_norm(x)
        if norm <= tol.eps_residual:
            continue
        ratios.append(iso.quotient_norm(x) / norm)
    if not ratios:
        return IsometryReport(ratio_min=1.0, ratio_max=1.0, gated=gated, trials=0)
    report = IsometryReport(ratio_min=min(ratios), ratio_max=max(ratios), gated=gated, trials=len(ratios))
    if gated and report.deviation > 1e-6:
        log.warning("unital Φ but quotient norm deviates from the operator norm by %.3e", report.deviation)
    return report
