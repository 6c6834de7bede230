"""The Choi-Effros product x ∘ y = Φ(xy) on the range of a projection, as structure constants."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ce_lab.models import AlgebraContext, CEAlgebra, ComplexMatrix, Tolerances
from ce_lab.models.errors import AssociativityFailed, NoUnit, NotAnAlgebra, NotInRange
from ce_lab.services.cp_maps import CPMap
from ce_lab.services.linalg import adjoint, hs_norm, max_containment_residual, products
from ce_lab.utils.log_util import configure_logger

log = configure_logger(__name__)


def ce_product(cp_map: CPMap, x: ComplexMatrix, y: ComplexMatrix, tol: Optional[Tolerances] = None) -> ComplexMatrix:
    """Φ(xy) for x and y fixed by Φ."""
    tol = tol or Tolerances()
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    for name, value in (("x", x), ("y", y)):
        residual = hs_norm(cp_map.apply(value) - value)
        if residual > tol.eps_residual * max(1.0, hs_norm(value)):
            raise NotInRange(f"{name} is not in the range of Φ (residual {residual:.3e})")
    return cp_map.apply(x @ y)


def _solve_unit(structure: np.ndarray) -> tuple:
    """Least-squares c with Σ_k c_k b_k ∘ b_i = b_i = b_i ∘ Σ_k c_k b_k for every i."""
    d = structure.shape[0]
    # rows indexed by (i, l): left law uses structure[k, i, l], right law structure[i, k, l]
    left = structure.transpose(1, 2, 0).reshape(d * d, d)
    right = structure.transpose(0, 2, 1).reshape(d * d, d)
    system = np.concatenate([left, right])
    target = np.concatenate([np.eye(d).reshape(-1), np.eye(d).reshape(-1)]).astype(complex)
    coeffs, *_ = np.linalg.lstsq(system, target, rcond=None)
    residual = float(np.abs(system @ coeffs - target).max())
    return coeffs, residual


def _associativity_residual(structure: np.ndarray) -> float:
    worst = 0.0
    for i in range(structure.shape[0]):
        # (b_i ∘ b_j) ∘ b_k against b_i ∘ (b_j ∘ b_k), one row of triples at a time
        lhs = np.einsum("jl,lkm->jkm", structure[i], structure)
        rhs = np.einsum("jkl,lm->jkm", structure, structure[i])
        worst = max(worst, float(np.linalg.norm(lhs - rhs, axis=-1).max()))
    return worst


def build_ce_algebra(ctx: AlgebraContext, tol: Tolerances) -> CEAlgebra:
    """
    Structure constants of (R, ∘) in the orthonormal basis of R, plus its unit.

    Checks closure, associativity on all basis triples, the unit law and
    (b_i ∘ b_j)* = b_j* ∘ b_i*. Also records how far R is from being closed
    under the ordinary product.
    """
    R = ctx.R
    n = ctx.ambient_dim
    d = R.dim
    if d == 0:
        return CEAlgebra(
            R=R,
            structure=np.zeros((0, 0, 0), dtype=complex),
            unit=np.zeros((n, n), dtype=complex),
            unit_coefficients=np.zeros(0, dtype=complex),
            closure_residual=0.0,
            associativity_residual=0.0,
            unit_residual=0.0,
            star_residual=0.0,
            ordinary_closure_residual=0.0,
        )

    prods = products(R.basis, R.basis)
    images = ctx.map.apply_many(prods)
    closure = max_containment_residual(R, images)
    if closure > tol.eps_residual:
        raise NotAnAlgebra(f"Φ(b_i b_j) leaves the range by {closure:.3e}")
    structure = (images.reshape(d * d, -1) @ R.coords.conj().T).reshape(d, d, d)

    associativity = _associativity_residual(structure)
    if associativity > tol.eps_residual:
        raise AssociativityFailed(f"associativity residual {associativity:.3e} exceeds {tol.eps_residual:.1e}")

    unit_coefficients, unit_residual = _solve_unit(structure)
    if unit_residual > tol.eps_residual:
        raise NoUnit(f"no two-sided unit for ∘ (least-squares residual {unit_residual:.3e})")
    unit = R.combine(unit_coefficients)

    # index j*d + i of the adjoint products holds b_j* b_i*
    star_images = ctx.map.apply_many(products(adjoint(R.basis), adjoint(R.basis)))
    star_images = star_images.reshape(d, d, n, n).swapaxes(0, 1)
    star = float(np.linalg.norm((adjoint(images.reshape(d, d, n, n)) - star_images).reshape(d * d, -1), axis=1).max())

    ordinary = max_containment_residual(R, prods)
    if ctx.map.certificate(tol).unital:
        gap = hs_norm(unit - np.eye(n))
        if gap > tol.eps_residual:
            log.warning("Φ is unital but the ∘-unit is %.3e away from the identity", gap)
    log.info(
        "CE algebra on R (dim %d): associativity %.2e, unit %.2e, star %.2e, ordinary closure %.2e",
        d,
        associativity,
        unit_residual,
        star,
        ordinary,
    )
    return CEAlgebra(
        R=R,
        structure=structure,
        unit=unit,
        unit_coefficients=unit_coefficients,
        closure_residual=closure,
        associativity_residual=associativity,
        unit_residual=unit_residual,
        star_residual=star,
        ordinary_closure_residual=ordinary,
    )
