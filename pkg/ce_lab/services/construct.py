"""
The kernel-ideal argument, executed on finite matrices.

Given a certified projection Φ on M_n this module builds its range R, the
C*-algebra A0 generated by R, the right ideal J of A0 generated by the
defects xy - Φ(xy) (x, y in R), and checks each step of the argument that
Ker(Φ|A0) = J: generators are killed by Φ, word defects land in J, and J is
stable under left multiplication. All closures are plain linear spans.
"""

from __future__ import annotations

from functools import reduce
from typing import Optional, Sequence

import numpy as np

from ce_lab.models import (
    AlgebraContext,
    BilateralCheck,
    ComplexMatrix,
    IdealCertificate,
    InductionCheck,
    Membership,
    OperatorSubspace,
    SubspaceComparison,
    Tolerances,
    WitnessCheck,
)
from ce_lab.models.errors import LetterNotInRange, MaxRoundsExceeded, NotAnAlgebra, NotInRange, UncertifiedMap
from ce_lab.services.cp_maps import CPMap
from ce_lab.services.linalg import (
    adjoint,
    contains,
    hs_norm,
    matrix_units,
    max_containment_residual,
    orthonormal_span,
    products,
    psd_check,
    subspace_equal,
)
from ce_lab.utils.log_util import configure_logger

log = configure_logger(__name__)


def _round_limit(n: int, max_rounds: Optional[int]) -> int:
    return max_rounds if max_rounds is not None else n * n + 2


def range_of(cp_map: CPMap, tol: Tolerances) -> OperatorSubspace:
    """span{Φ(e_ij)}; for an idempotent Φ each basis vector is a fixed point."""
    if not cp_map.certificate(tol).idempotent:
        raise UncertifiedMap(f"{cp_map!r} is not certified idempotent")
    n = cp_map.ambient_dim
    return orthonormal_span(cp_map.apply_many(matrix_units(n)), tol, ambient_dim=n)


def generated_algebra(R: OperatorSubspace, tol: Tolerances, max_rounds: Optional[int] = None) -> OperatorSubspace:
    """
    Smallest *-closed subspace containing R and closed under products.

    Each round multiplies all pairs of basis vectors, adds adjoints and
    re-orthonormalises; the loop ends once a round leaves the dimension unchanged.
    """
    n = R.ambient_dim
    if R.dim == 0:
        return OperatorSubspace.zero(n)
    limit = _round_limit(n, max_rounds)
    algebra = orthonormal_span(adjoint(R.basis), tol, base=R)
    for rounds in range(1, limit + 1):
        candidates = np.concatenate([products(algebra.basis, algebra.basis), adjoint(algebra.basis)])
        grown = orthonormal_span(candidates, tol, base=algebra)
        log.debug("generated_algebra round %d: dim %d -> %d", rounds, algebra.dim, grown.dim)
        stable = grown.dim == algebra.dim
        algebra = grown
        if stable:
            break
    else:
        raise MaxRoundsExceeded(f"generated algebra still growing after {limit} rounds (dim {algebra.dim})")

    residual = max_containment_residual(algebra, products(algebra.basis, algebra.basis))
    if residual > tol.eps_residual:
        raise NotAnAlgebra(f"span closure stabilised but products leave it by {residual:.3e}")
    return algebra


def algebra_context(cp_map: CPMap, tol: Tolerances, max_rounds: Optional[int] = None) -> AlgebraContext:
    """Certify Φ, then build R and A0 and check R ⊆ A0, A0·A0 ⊆ A0 and Φ(A0) ⊆ R."""
    certificate = cp_map.certificate(tol)
    if not certificate.is_projection:
        raise UncertifiedMap(f"{cp_map!r} fails hypotheses: {', '.join(certificate.failures())}")
    R = range_of(cp_map, tol)
    A0 = generated_algebra(R, tol, max_rounds)
    containment = max_containment_residual(A0, R.basis)
    closure = max(
        max_containment_residual(A0, products(A0.basis, A0.basis)),
        max_containment_residual(A0, adjoint(A0.basis)),
    )
    image = max_containment_residual(R, cp_map.apply_many(A0.basis)) if A0.dim else 0.0
    for name, value in (("R ⊆ A0", containment), ("A0 closure", closure), ("Φ(A0) ⊆ R", image)):
        if value > tol.eps_residual:
            raise NotAnAlgebra(f"{name} residual {value:.3e} exceeds {tol.eps_residual:.1e}")
    log.info("Context for %r: dim R = %d, dim A0 = %d", cp_map, R.dim, A0.dim)
    return AlgebraContext(
        ambient_dim=cp_map.ambient_dim,
        A0=A0,
        R=R,
        map=cp_map,
        range_containment_residual=containment,
        closure_residual=closure,
        image_residual=image,
    )


def kernel_subspace(ctx: AlgebraContext, tol: Tolerances) -> OperatorSubspace:
    """Ker(Φ|A0): null space of Φ written in the orthonormal basis of A0."""
    n = ctx.ambient_dim
    if ctx.A0.dim == 0:
        return OperatorSubspace.zero(n)
    images = ctx.map.apply_many(ctx.A0.basis).reshape(ctx.A0.dim, -1).T
    _, sing, vh = np.linalg.svd(images, full_matrices=True)
    cutoff = tol.eps_rank * max(1.0, float(sing[0]) if sing.size else 0.0)
    rank = int(np.count_nonzero(sing > cutoff))
    null_coeffs = vh[rank:].conj()
    if null_coeffs.shape[0] == 0:
        return OperatorSubspace.zero(n)
    basis = np.tensordot(null_coeffs, ctx.A0.basis, axes=(1, 0))
    return OperatorSubspace(ambient_dim=n, basis=basis)


def ideal_generators(ctx: AlgebraContext) -> np.ndarray:
    """All defects b_i b_j - Φ(b_i b_j) over the range basis."""
    prods = products(ctx.R.basis, ctx.R.basis)
    if prods.shape[0] == 0:
        return prods
    return prods - ctx.map.apply_many(prods)


def generator_images(ctx: AlgebraContext, tol: Tolerances) -> float:
    """Largest ‖Φ(g)‖_HS over the ideal generators: the one-sided step J ⊆ Ker Φ."""
    generators = ideal_generators(ctx)
    if generators.shape[0] == 0:
        return 0.0
    worst = float(np.linalg.norm(ctx.map.apply_many(generators).reshape(generators.shape[0], -1), axis=1).max())
    if worst > tol.eps_residual:
        log.warning("an ideal generator survives Φ with norm %.3e", worst)
    return worst


def ideal_J(ctx: AlgebraContext, tol: Tolerances, max_rounds: Optional[int] = None) -> IdealCertificate:
    """
    Right ideal of A0 generated by the defects xy - Φ(xy), built right-first.

    The left-closure residual is recorded but not enforced: bilaterality is a
    consequence checked by ``verify_bilateral``.
    """
    n = ctx.ambient_dim
    generators = ideal_generators(ctx)
    ideal = orthonormal_span(generators, tol, ambient_dim=n)
    limit = _round_limit(n, max_rounds)
    rounds = 0
    if ideal.dim:
        for rounds in range(1, limit + 1):
            grown = orthonormal_span(products(ideal.basis, ctx.A0.basis), tol, base=ideal)
            log.debug("ideal_J round %d: dim %d -> %d", rounds, ideal.dim, grown.dim)
            stable = grown.dim == ideal.dim
            ideal = grown
            if stable:
                break
        else:
            raise MaxRoundsExceeded(f"right ideal still growing after {limit} rounds (dim {ideal.dim})")

    right = max_containment_residual(ideal, products(ideal.basis, ctx.A0.basis)) if ideal.dim else 0.0
    left = max_containment_residual(ideal, products(ctx.A0.basis, ideal.basis)) if ideal.dim else 0.0
    gap = subspace_equal(ideal, kernel_subspace(ctx, tol), tol).gap
    log.info(
        "J: dim %d from %d generators in %d rounds; kernel gap %.2e", ideal.dim, generators.shape[0], rounds, gap
    )
    return IdealCertificate(
        J=ideal,
        generator_count=int(generators.shape[0]),
        generator_image_residual=generator_images(ctx, tol),
        right_closure_residual=right,
        left_closure_residual=left,
        kernel_gap=gap,
        rounds=rounds,
    )


def verify_kernel_equals_ideal(ctx: AlgebraContext, cert: IdealCertificate, tol: Tolerances) -> SubspaceComparison:
    comparison = subspace_equal(cert.J, kernel_subspace(ctx, tol), tol)
    if not comparison.equal:
        log.warning("Ker(Φ|A0) and J differ: gap %.3e", comparison.gap)
    return comparison


def verify_bilateral(ctx: AlgebraContext, cert: IdealCertificate, tol: Tolerances) -> BilateralCheck:
    """Largest distance from a·j to J over A0-basis x J-basis pairs."""
    if cert.J.dim == 0 or ctx.A0.dim == 0:
        return BilateralCheck(bilateral=True, left_residual=0.0)
    residual = max_containment_residual(cert.J, products(ctx.A0.basis, cert.J.basis))
    return BilateralCheck(bilateral=residual <= tol.eps_residual, left_residual=residual)


def _check_letters(ctx: AlgebraContext, word: Sequence[ComplexMatrix], tol: Tolerances) -> None:
    if len(word) == 0:
        raise LetterNotInRange("words need at least one letter")
    for position, letter in enumerate(word):
        membership = contains(ctx.R, np.asarray(letter, dtype=complex), tol)
        if not membership.member:
            raise LetterNotInRange(f"letter {position} is {membership.residual:.3e} away from the range")


def word_defect(
    ctx: AlgebraContext, cert: IdealCertificate, word: Sequence[ComplexMatrix], tol: Tolerances
) -> Membership:
    """For u = x_1⋯x_k with letters in R, test u - Φ(u) ∈ J."""
    _check_letters(ctx, word, tol)
    u = reduce(np.matmul, [np.asarray(x, dtype=complex) for x in word])
    return contains(cert.J, u - ctx.map.apply(u), tol)


def induction_step(
    ctx: AlgebraContext, cert: IdealCertificate, word: Sequence[ComplexMatrix], tol: Tolerances
) -> InductionCheck:
    """
    Check the split u = u1 + u2 that reduces a word of length k >= 3 to length k - 1.

    u1 = (x1 x2 - Φ(x1 x2)) x3⋯xk must lie in J with Φ(u1) = 0, and
    u2 = Φ(x1 x2) x3⋯xk must satisfy u2 - Φ(u2) ∈ J.
    """
    if len(word) < 3:
        raise ValueError(f"the induction step needs a word of length >= 3, got {len(word)}")
    _check_letters(ctx, word, tol)
    letters = [np.asarray(x, dtype=complex) for x in word]
    head = letters[0] @ letters[1]
    head_image = ctx.map.apply(head)
    tail = reduce(np.matmul, letters[2:])
    u1 = (head - head_image) @ tail
    u1_member = contains(cert.J, u1, tol)
    u1_image = hs_norm(ctx.map.apply(u1))
    shorter = word_defect(ctx, cert, [head_image] + letters[2:], tol)
    holds = u1_member.member and shorter.member and u1_image <= tol.eps_residual * max(1.0, hs_norm(u1))
    return InductionCheck(
        holds=bool(holds),
        u1_residual=u1_member.residual,
        u1_image=u1_image,
        u2_residual=shorter.residual,
    )


def positive_kernel_witness(cp_map: CPMap, x: ComplexMatrix, y: ComplexMatrix, tol: Tolerances) -> WitnessCheck:
    """
    For x in the range, z = Φ(x*x) - x*x is positive and killed by Φ; the
    Kadison-Schwarz estimate then forces Φ(zy) = 0 for every y.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    range_residual = hs_norm(cp_map.apply(x) - x)
    if range_residual > tol.eps_residual * max(1.0, hs_norm(x)):
        raise NotInRange(f"x is not fixed by Φ (residual {range_residual:.3e})")
    xx = adjoint(x) @ x
    z = cp_map.apply(xx) - xx
    positivity = psd_check(z, tol)
    kernel_residual = hs_norm(cp_map.apply(z))
    product_residual = hs_norm(cp_map.apply(z @ y))
    scale = tol.eps_residual * max(1.0, hs_norm(z) * max(1.0, hs_norm(y)))
    holds = positivity.is_psd and kernel_residual <= scale and product_residual <= scale
    return WitnessCheck(
        holds=bool(holds),
        psd_min_eig=positivity.min_eig,
        kernel_residual=kernel_residual,
        product_residual=product_residual,
    )
