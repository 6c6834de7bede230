"""
Linear maps on M_n stored through their Choi matrix.

Conventions: matrices are vectorised row-major, so the transfer matrix T
satisfies vec(Φ(x)) = T vec(x), and the Choi matrix is Σ_ij e_ij ⊗ Φ(e_ij).
A Kraus family K_k acts as x ↦ Σ_k K_k x K_k*.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from cachetools import LRUCache, cachedmethod

from ce_lab.models import ComplexMatrix, KadisonSchwarzCheck, ProjectionCertificate, Tolerances
from ce_lab.models.errors import DimensionError, NotCP, NotHermitian, NotPSD, UncertifiedMap
from ce_lab.services.linalg import (
    adjoint,
    as_matrix,
    hermitian_residual,
    matrix_units,
    operator_norm,
    psd_check,
    psd_sqrt,
)
from ce_lab.utils.log_util import configure_logger

log = configure_logger(__name__)


def _choi_to_transfer(choi: np.ndarray, n: int) -> np.ndarray:
    return choi.reshape(n, n, n, n).transpose(1, 3, 0, 2).reshape(n * n, n * n)


def _transfer_to_choi(transfer: np.ndarray, n: int) -> np.ndarray:
    return transfer.reshape(n, n, n, n).transpose(2, 0, 3, 1).reshape(n * n, n * n)


class CPMap:
    """
    Immutable linear map Φ: M_n -> M_n.

    The Choi matrix is the stored representation; an explicit Kraus family is kept
    when the map was built from one. Certificates are memoised per Tolerances in a
    lock-guarded cache. The lock covers cache access only: concurrent first
    requests may each compute the certificate, and since certification is a pure
    function of (map, tol) they all get equal results.
    """

    def __init__(self, choi: ComplexMatrix, kraus: Optional[Sequence[ComplexMatrix]] = None, label: str = ""):
        choi = np.array(as_matrix(choi), copy=True)
        n = math.isqrt(choi.shape[0])
        if n * n != choi.shape[0]:
            raise DimensionError(f"Choi matrix of size {choi.shape[0]} is not n^2 x n^2")
        choi.setflags(write=False)
        self._n = n
        self._choi = choi
        self._kraus: Optional[Tuple[np.ndarray, ...]] = None
        if kraus is not None:
            frozen = []
            for k in kraus:
                k = np.array(as_matrix(k), copy=True)
                if k.shape != (n, n):
                    raise DimensionError(f"Kraus operator of shape {k.shape} for a map on M_{n}")
                k.setflags(write=False)
                frozen.append(k)
            self._kraus = tuple(frozen)
        transfer = _choi_to_transfer(choi, n)
        transfer.setflags(write=False)
        self._transfer = transfer
        self.label = label
        self._cache: LRUCache = LRUCache(maxsize=8)
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"CPMap(n={self._n}, label={self.label!r}, kraus={'yes' if self._kraus else 'no'})"

    @classmethod
    def from_transfer(cls, transfer: np.ndarray, label: str = "") -> "CPMap":
        transfer = np.asarray(transfer, dtype=complex)
        n = math.isqrt(transfer.shape[0])
        if transfer.shape != (n * n, n * n):
            raise DimensionError(f"transfer matrix of shape {transfer.shape} is not n^2 x n^2")
        return cls(_transfer_to_choi(transfer, n), label=label)

    @classmethod
    def from_function(cls, n: int, fn: Callable[[ComplexMatrix], ComplexMatrix], label: str = "") -> "CPMap":
        """Tabulate a linear function on the matrix units."""
        images = np.stack([np.asarray(fn(np.array(e)), dtype=complex) for e in matrix_units(n)])
        if images.shape[1:] != (n, n):
            raise DimensionError(f"function maps M_{n} to matrices of shape {images.shape[1:]}")
        transfer = images.reshape(n * n, n * n).T
        return cls.from_transfer(transfer, label=label)

    @property
    def ambient_dim(self) -> int:
        return self._n

    @property
    def choi(self) -> np.ndarray:
        return self._choi

    @property
    def kraus(self) -> Optional[Tuple[np.ndarray, ...]]:
        return self._kraus

    @property
    def transfer(self) -> np.ndarray:
        return self._transfer

    def apply(self, x: ComplexMatrix) -> ComplexMatrix:
        x = np.asarray(x, dtype=complex)
        if x.shape != (self._n, self._n):
            raise DimensionError(f"cannot apply a map on M_{self._n} to a matrix of shape {x.shape}")
        return self.apply_many(x[None])[0]

    def apply_many(self, xs: np.ndarray) -> np.ndarray:
        """Φ applied to a stack of matrices of shape (m, n, n)."""
        xs = np.asarray(xs, dtype=complex)
        if xs.ndim != 3 or xs.shape[1:] != (self._n, self._n):
            raise DimensionError(f"expected a stack of {self._n}x{self._n} matrices, got {xs.shape}")
        if self._kraus is not None:
            ks = np.stack(self._kraus)
            return np.einsum("kab,mbc,kdc->mad", ks, xs, ks.conj())
        m = xs.shape[0]
        return (xs.reshape(m, self._n * self._n) @ self._transfer.T).reshape(m, self._n, self._n)

    def compose(self, other: "CPMap", label: str = "") -> "CPMap":
        """self ∘ other."""
        if other.ambient_dim != self._n:
            raise DimensionError("composing maps on different matrix algebras")
        return CPMap.from_transfer(self._transfer @ other.transfer, label=label)

    @cachedmethod(lambda self: self._cache, lock=lambda self: self._lock)
    def certificate(self, tol: Tolerances) -> ProjectionCertificate:
        return certify_projection(self, tol)


def from_kraus(kraus: Sequence[ComplexMatrix], label: str = "") -> CPMap:
    if len(kraus) == 0:
        raise DimensionError("from_kraus needs at least one operator")
    ks = [as_matrix(k) for k in kraus]
    n = ks[0].shape[0]
    if any(k.shape != (n, n) for k in ks):
        raise DimensionError("Kraus operators must share one dimension")
    vecs = np.stack([k.T.reshape(-1) for k in ks])
    choi = vecs.T @ vecs.conj()
    return CPMap(choi, kraus=ks, label=label)


def apply(cp_map: CPMap, x: ComplexMatrix) -> ComplexMatrix:
    return cp_map.apply(x)


def choi_of(cp_map: CPMap) -> ComplexMatrix:
    return np.array(cp_map.choi)


def kraus_from_choi(cp_map: CPMap, tol: Tolerances) -> list:
    """
    Kraus operators from the eigendecomposition of the Choi matrix.

    :param cp_map: map whose Choi matrix is PSD within eps_psd.
    :param tol: eps_rank drops negligible eigenvalues.
    :return: list of n x n Kraus operators (empty for the zero map).
    """
    choi = cp_map.choi
    residual = hermitian_residual(choi)
    if residual > tol.eps_herm:
        raise NotCP(float("nan"))
    eigs, vecs = scipy.linalg.eigh((choi + adjoint(choi)) / 2)
    if eigs[0] < -tol.eps_psd:
        raise NotCP(float(eigs[0]))
    n = cp_map.ambient_dim
    return [
        np.sqrt(lam) * vecs[:, idx].reshape(n, n).T
        for idx, lam in enumerate(eigs)
        if lam > tol.eps_rank
    ]


def certify_projection(cp_map: CPMap, tol: Tolerances) -> ProjectionCertificate:
    n = cp_map.ambient_dim
    choi = cp_map.choi
    choi_herm = hermitian_residual(choi)
    choi_min_eig = float(scipy.linalg.eigvalsh((choi + adjoint(choi)) / 2)[0])
    cp = choi_herm <= tol.eps_herm and choi_min_eig >= -tol.eps_psd

    identity = np.eye(n, dtype=complex)
    unit_image = cp_map.apply(identity)
    norm_unit = operator_norm(unit_image)
    contractive = (norm_unit <= 1.0 + tol.eps_residual) if cp else None
    unit_residual = operator_norm(unit_image - identity)

    units = matrix_units(n)
    images = cp_map.apply_many(units)
    twice = cp_map.apply_many(images)
    idem_residual = float(np.linalg.norm((twice - images).reshape(n * n, -1), axis=1).max())

    # Φ(e_ij*) = Φ(e_ji) sits at index j*n + i.
    swapped = images.reshape(n, n, n, n).swapaxes(0, 1).reshape(n * n, n, n)
    star_residual = float(np.linalg.norm((swapped - adjoint(images)).reshape(n * n, -1), axis=1).max())
    star_preserving = star_residual <= tol.eps_residual

    certificate = ProjectionCertificate(
        cp=bool(cp),
        choi_min_eig=choi_min_eig,
        contractive=contractive,
        norm_of_unit_image=norm_unit,
        idempotent=idem_residual <= tol.eps_residual,
        idem_residual=idem_residual,
        unital=unit_residual <= tol.eps_residual,
        unit_residual=unit_residual,
        star_preserving=star_preserving,
        star_residual=star_residual,
    )
    if certificate.cp and not certificate.star_preserving:
        log.warning("%r: PSD Choi matrix but star residual %.3e", cp_map, star_residual)
    log.debug("Certified %r: %s", cp_map, certificate)
    return certificate


def kadison_schwarz_check(
    cp_map: CPMap, z: ComplexMatrix, y: ComplexMatrix, tol: Tolerances
) -> KadisonSchwarzCheck:
    """
    Check ‖z^{1/2} y‖² Φ(z) - Φ(zy)Φ(zy)* >= 0 for z >= 0.

    Only meaningful for completely positive contractive maps; anything else raises
    UncertifiedMap.
    """
    certificate = cp_map.certificate(tol)
    if not certificate.cp or not certificate.contractive:
        raise UncertifiedMap(f"{cp_map!r} is not certified completely positive and contractive")
    z = as_matrix(z)
    y = as_matrix(y)
    try:
        root = psd_sqrt(z, tol)
    except NotHermitian as exc:
        raise NotPSD(float("nan"), tol.eps_psd) from exc
    scale = operator_norm(root @ y) ** 2
    zy_image = cp_map.apply(z @ y)
    gap = scale * cp_map.apply(z) - zy_image @ adjoint(zy_image)
    result = psd_check(gap, tol)
    return KadisonSchwarzCheck(holds=result.is_psd, min_eig=result.min_eig)


def identity_map(n: int) -> CPMap:
    return from_kraus([np.eye(n)], label=f"identity_{n}")


def trace_map(n: int) -> CPMap:
    """x ↦ trace(x) I / n."""
    units = matrix_units(n)
    return from_kraus([e / np.sqrt(n) for e in units], label=f"trace_{n}")


def zero_map(n: int) -> CPMap:
    return CPMap(np.zeros((n * n, n * n)), label=f"zero_{n}")


def transpose_symmetrization(n: int) -> CPMap:
    """x ↦ (x + xᵀ)/2: idempotent and positive, not completely positive."""
    return CPMap.from_function(n, lambda x: (x + x.T) / 2, label=f"transpose_sym_{n}")
