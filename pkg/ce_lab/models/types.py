from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from ce_lab.models.errors import DimensionError, InvalidChannel, InvalidPartition

# Dense square complex matrix; every operator in the package is one of these.
ComplexMatrix = npt.NDArray[np.complex128]


def _frozen_array(values, dtype=complex) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Tolerances:
    eps_herm: float = 1e-8
    eps_psd: float = 1e-8
    eps_rank: float = 1e-10
    eps_residual: float = 1e-8

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ValueError(f"Tolerance {f.name} must be strictly positive, got {value!r}")

    @classmethod
    def from_mapping(cls, overrides: Mapping[str, object], base: Optional["Tolerances"] = None) -> "Tolerances":
        """Build Tolerances from ``base`` (defaults when omitted) with the given keys replaced."""
        base = base or cls()
        allowed = {f.name for f in fields(cls)}
        unknown = set(overrides) - allowed
        if unknown:
            raise ValueError(f"Unknown tolerance keys: {sorted(unknown)}")
        values = {name: getattr(base, name) for name in allowed}
        values.update({k: float(v) for k, v in overrides.items()})  # type: ignore[arg-type]
        return cls(**values)

    def with_residual(self, eps: float) -> "Tolerances":
        """The ``--tol`` override: one knob for Hermiticity, PSD and residual bounds."""
        return Tolerances(eps_herm=eps, eps_psd=eps, eps_rank=self.eps_rank, eps_residual=eps)

    def as_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, eq=False)
class OperatorSubspace:
    """Linear span of matrices, kept as a Hilbert-Schmidt orthonormal basis of shape (dim, n, n)."""

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self) -> None:
        basis = np.asarray(self.basis, dtype=complex)
        if basis.size == 0:
            basis = np.zeros((0, self.ambient_dim, self.ambient_dim), dtype=complex)
        if basis.ndim != 3 or basis.shape[1:] != (self.ambient_dim, self.ambient_dim):
            raise DimensionError(
                f"basis of shape {basis.shape} does not match ambient dimension {self.ambient_dim}"
            )
        if basis.shape[0] > self.ambient_dim ** 2:
            raise DimensionError(f"{basis.shape[0]} basis vectors exceed n^2 = {self.ambient_dim ** 2}")
        object.__setattr__(self, "basis", _frozen_array(basis))

    @classmethod
    def zero(cls, n: int) -> "OperatorSubspace":
        return cls(ambient_dim=n, basis=np.zeros((0, n, n), dtype=complex))

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def coords(self) -> np.ndarray:
        """Basis vectors as rows of flattened entries, shape (dim, n*n)."""
        return self.basis.reshape(self.dim, self.ambient_dim * self.ambient_dim)

    def __len__(self) -> int:
        return self.dim

    def __iter__(self):
        return iter(self.basis)

    def coefficients(self, x: ComplexMatrix) -> np.ndarray:
        """Coordinates of the orthogonal projection of ``x`` in this basis."""
        return self.coords.conj() @ np.asarray(x, dtype=complex).reshape(-1)

    def combine(self, coefficients: Sequence[complex]) -> ComplexMatrix:
        return np.tensordot(np.asarray(coefficients, dtype=complex), self.basis, axes=(0, 0))


@dataclass(frozen=True)
class PSDCheck:
    is_psd: bool
    min_eig: float


@dataclass(frozen=True)
class Membership:
    member: bool
    residual: float


@dataclass(frozen=True)
class SubspaceComparison:
    equal: bool
    gap: float


@dataclass(frozen=True)
class ProjectionCertificate:
    cp: bool
    choi_min_eig: float
    # None when cp fails: the cb-norm shortcut ||Φ(I)|| only decides contractivity for CP maps.
    contractive: Optional[bool]
    norm_of_unit_image: float
    idempotent: bool
    idem_residual: float
    unital: bool
    unit_residual: float
    star_preserving: bool
    star_residual: float

    @property
    def is_projection(self) -> bool:
        """True when all three hypotheses of the structure theorem hold."""
        return bool(self.cp and self.contractive and self.idempotent)

    def failures(self) -> List[str]:
        failed = []
        if not self.cp:
            failed.append("cp")
        if self.contractive is not True:
            failed.append("contractive")
        if not self.idempotent:
            failed.append("idempotent")
        return failed

    def as_dict(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class KadisonSchwarzCheck:
    holds: bool
    min_eig: float


@dataclass(frozen=True)
class Partition:
    """Disjoint blocks of 1-based coordinates covering {1..n}."""

    ambient_dim: int
    blocks: Tuple[Tuple[int, ...], ...]

    def __post_init__(self) -> None:
        blocks = tuple(tuple(int(i) for i in block) for block in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if self.ambient_dim < 1:
            raise InvalidPartition(f"ambient dimension must be positive, got {self.ambient_dim}")
        seen: List[int] = []
        for block in blocks:
            if not block:
                raise InvalidPartition("partition blocks must be nonempty")
            seen.extend(block)
        if len(seen) != len(set(seen)):
            raise InvalidPartition(f"partition blocks overlap: {blocks}")
        if sorted(seen) != list(range(1, self.ambient_dim + 1)):
            raise InvalidPartition(f"blocks {blocks} do not cover 1..{self.ambient_dim}")

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "Partition":
        """Group coordinates by label, blocks ordered by first appearance."""
        order: Dict[int, List[int]] = {}
        for index, label in enumerate(labels, start=1):
            order.setdefault(int(label), []).append(index)
        return cls(ambient_dim=len(labels), blocks=tuple(tuple(b) for b in order.values()))

    def projections(self) -> List[ComplexMatrix]:
        projections = []
        for block in self.blocks:
            p = np.zeros((self.ambient_dim, self.ambient_dim), dtype=complex)
            idx = [i - 1 for i in block]
            p[idx, idx] = 1.0
            projections.append(p)
        return projections

    @property
    def range_dim(self) -> int:
        return sum(len(block) ** 2 for block in self.blocks)


@dataclass(frozen=True, eq=False)
class ChannelSpec:
    kraus: Tuple[np.ndarray, ...]
    trace_preserving: bool = False
    tp_residual: float = field(init=False, default=float("nan"))

    def __post_init__(self) -> None:
        if not self.kraus:
            raise DimensionError("a channel needs at least one Kraus operator")
        kraus = tuple(_frozen_array(k) for k in self.kraus)
        n = kraus[0].shape[0]
        for k in kraus:
            if k.shape != (n, n):
                raise DimensionError(f"Kraus operator of shape {k.shape} in a channel on M_{n}")
        object.__setattr__(self, "kraus", kraus)
        residual = float(np.linalg.norm(sum(k.conj().T @ k for k in kraus) - np.eye(n), 2))
        object.__setattr__(self, "tp_residual", residual)
        if self.trace_preserving and residual > Tolerances().eps_residual:
            raise InvalidChannel(f"channel flagged trace preserving but ||sum K*K - I|| = {residual:.3e}")

    @classmethod
    def certified(cls, kraus: Sequence[np.ndarray], tol: Tolerances) -> "ChannelSpec":
        """Build a spec whose trace_preserving flag is decided from the Kraus sum."""
        spec = cls(kraus=tuple(kraus))
        if spec.tp_residual <= tol.eps_residual:
            spec = cls(kraus=tuple(kraus), trace_preserving=True)
        return spec

    @property
    def ambient_dim(self) -> int:
        return int(self.kraus[0].shape[0])
