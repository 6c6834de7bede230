from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np

from ce_lab.models.types import ComplexMatrix, OperatorSubspace

if TYPE_CHECKING:  # pragma: no cover
    from ce_lab.services.cp_maps import CPMap


@dataclass(frozen=True, eq=False)
class AlgebraContext:
    """Φ together with its range R and the C*-algebra A0 that R generates."""

    ambient_dim: int
    A0: OperatorSubspace
    R: OperatorSubspace
    map: "CPMap"
    range_containment_residual: float = 0.0
    closure_residual: float = 0.0
    image_residual: float = 0.0


@dataclass(frozen=True, eq=False)
class IdealCertificate:
    J: OperatorSubspace
    generator_count: int
    generator_image_residual: float
    right_closure_residual: float
    left_closure_residual: float
    kernel_gap: float
    rounds: int = 0


@dataclass(frozen=True)
class BilateralCheck:
    bilateral: bool
    left_residual: float


@dataclass(frozen=True)
class InductionCheck:
    """Residuals of the split u = u1 + u2 used to pass from words of length k-1 to k."""

    holds: bool
    u1_residual: float
    u1_image: float
    u2_residual: float


@dataclass(frozen=True)
class WitnessCheck:
    holds: bool
    psd_min_eig: float
    kernel_residual: float
    product_residual: float


@dataclass(frozen=True, eq=False)
class CEAlgebra:
    R: OperatorSubspace
    # structure[i, j, k]: coefficient of b_k in b_i ∘ b_j = Φ(b_i b_j)
    structure: np.ndarray
    unit: ComplexMatrix
    unit_coefficients: np.ndarray
    closure_residual: float
    associativity_residual: float
    unit_residual: float
    star_residual: float
    ordinary_closure_residual: float

    @property
    def dim(self) -> int:
        return self.R.dim

    def multiply_coefficients(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.einsum("i,j,ijk->k", a, b, self.structure)

    def multiply(self, x: ComplexMatrix, y: ComplexMatrix) -> ComplexMatrix:
        """x ∘ y computed from the structure constants, for x and y in R."""
        coeffs = self.multiply_coefficients(self.R.coefficients(x), self.R.coefficients(y))
        return self.R.combine(coeffs)


@dataclass(frozen=True, eq=False)
class WedderburnDecomposition:
    central_projections: Tuple[np.ndarray, ...]
    # (block size n_i, multiplicity m_i) per minimal central projection
    block_dims: Tuple[Tuple[int, int], ...]
    blocks: Tuple[OperatorSubspace, ...]
    unit: ComplexMatrix
    projection_residual: float
    reseeds: int = 0
    in_J: Optional[Tuple[bool, ...]] = None

    @property
    def dimension(self) -> int:
        return sum(size * size for size, _ in self.block_dims)


@dataclass(frozen=True, eq=False)
class QuotientIso:
    """ρ: B = A0/J -> R, with B realised as the sum of the blocks of A0 outside J."""

    context: AlgebraContext
    wedderburn: WedderburnDecomposition
    B: OperatorSubspace
    kept_projection: ComplexMatrix
    forward: np.ndarray
    inverse: np.ndarray
    forward_residual: float
    inverse_residual: float
    intertwining_residual: float

    def rho(self, b: ComplexMatrix) -> ComplexMatrix:
        return self.context.R.combine(self.forward @ self.B.coefficients(b))

    def rho_inverse(self, r: ComplexMatrix) -> ComplexMatrix:
        return self.B.combine(self.inverse @ self.context.R.coefficients(r))

    def quotient_norm(self, x: ComplexMatrix) -> float:
        """Norm of x + J in A0/J: the largest block norm over blocks outside J."""
        kept = [p for p, dropped in zip(self.wedderburn.central_projections, self.wedderburn.in_J or ()) if not dropped]
        if not kept:
            return 0.0
        return max(float(np.linalg.norm(p @ x, 2)) for p in kept)


@dataclass(frozen=True)
class OrderIsoLevel:
    k: int
    min_eig_forward: float
    min_eig_backward: float
    trials: int


@dataclass(frozen=True)
class OrderIsoReport:
    levels: Tuple[OrderIsoLevel, ...]
    bound: float
    failures: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def min_eig(self) -> float:
        if not self.levels:
            return 0.0
        return min(min(level.min_eig_forward, level.min_eig_backward) for level in self.levels)

    @property
    def passed(self) -> bool:
        return not self.failures and self.min_eig >= -self.bound


@dataclass(frozen=True)
class IsometryReport:
    ratio_min: float
    ratio_max: float
    gated: bool
    trials: int

    @property
    def deviation(self) -> float:
        return max(abs(1.0 - self.ratio_min), abs(self.ratio_max - 1.0))
