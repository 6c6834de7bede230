"""
Dense complex matrix arithmetic and Hilbert-Schmidt subspace geometry.

Matrices are plain ``numpy`` complex arrays of shape (n, n); subspaces are
``OperatorSubspace`` values holding an HS-orthonormal basis. Every routine
here is a pure function.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
from cachetools import LRUCache, cached

from ce_lab.models import (
    ComplexMatrix,
    Membership,
    OperatorSubspace,
    PSDCheck,
    SubspaceComparison,
    Tolerances,
)
from ce_lab.models.errors import DimensionError, NotHermitian, NotPSD

MatrixStack = Union[np.ndarray, Sequence[ComplexMatrix]]


def as_matrix(x) -> ComplexMatrix:
    """Coerce ``x`` to a complex square matrix, rejecting anything else."""
    arr = np.asarray(x, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionError(f"expected a nonempty square matrix, got shape {arr.shape}")
    return arr


def adjoint(x: ComplexMatrix) -> ComplexMatrix:
    return np.conj(np.swapaxes(x, -1, -2))


def _stack(mats: MatrixStack, ambient_dim: Optional[int] = None) -> np.ndarray:
    if isinstance(mats, np.ndarray) and mats.ndim == 3:
        stack = mats.astype(complex, copy=False)
    else:
        items = [np.asarray(m, dtype=complex) for m in mats]
        if not items:
            if ambient_dim is None:
                raise DimensionError("cannot infer the ambient dimension of an empty matrix list")
            return np.zeros((0, ambient_dim, ambient_dim), dtype=complex)
        shapes = {m.shape for m in items}
        if len(shapes) != 1:
            raise DimensionError(f"matrices of mixed shapes {sorted(shapes)}")
        stack = np.stack(items)
    if stack.shape[1] != stack.shape[2]:
        raise DimensionError(f"matrices of shape {stack.shape[1:]} are not square")
    if ambient_dim is not None and stack.shape[1] != ambient_dim:
        raise DimensionError(f"matrices live in M_{stack.shape[1]}, expected M_{ambient_dim}")
    return stack


@cached(LRUCache(maxsize=32))
def matrix_units(n: int) -> np.ndarray:
    """All matrix units e_ij of M_n, stacked in row-major order (index i*n + j)."""
    units = np.eye(n * n, dtype=complex).reshape(n * n, n, n)
    units.setflags(write=False)
    return units


def matrix_unit(n: int, i: int, j: int) -> ComplexMatrix:
    """The 0-based matrix unit e_ij in M_n."""
    return np.array(matrix_units(n)[i * n + j])


def hs_inner(a: ComplexMatrix, b: ComplexMatrix) -> complex:
    """Hilbert-Schmidt inner product trace(a* b)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionError(f"hs_inner of shapes {a.shape} and {b.shape}")
    return complex(np.vdot(a, b))


def hs_norm(a: ComplexMatrix) -> float:
    return float(np.linalg.norm(np.asarray(a).reshape(-1)))


def operator_norm(a: ComplexMatrix) -> float:
    """Largest singular value."""
    a = np.asarray(a, dtype=complex)
    if a.size == 0 or not np.any(a):
        return 0.0
    return float(scipy.linalg.svdvals(a)[0])


def hermitian_residual(a: ComplexMatrix) -> float:
    a = np.asarray(a, dtype=complex)
    return operator_norm(a - adjoint(a))


def hermitian_eigvals(a: ComplexMatrix, tol: Tolerances) -> np.ndarray:
    """Eigenvalues of ``a`` after certifying Hermiticity; the solver sees (a + a*)/2 only."""
    a = np.asarray(a, dtype=complex)
    residual = hermitian_residual(a)
    if residual > tol.eps_herm:
        raise NotHermitian(residual, tol.eps_herm)
    return scipy.linalg.eigvalsh((a + adjoint(a)) / 2)


def psd_check(a: ComplexMatrix, tol: Tolerances) -> PSDCheck:
    eigs = hermitian_eigvals(a, tol)
    min_eig = float(eigs[0])
    return PSDCheck(is_psd=min_eig >= -tol.eps_psd, min_eig=min_eig)


def psd_sqrt(z: ComplexMatrix, tol: Tolerances) -> ComplexMatrix:
    """
    Square root of a numerically PSD matrix.

    Eigenvalues in [-eps_psd, 0) are clamped to zero; anything lower raises NotPSD.
    """
    z = np.asarray(z, dtype=complex)
    residual = hermitian_residual(z)
    if residual > tol.eps_herm:
        raise NotHermitian(residual, tol.eps_herm)
    eigs, vecs = scipy.linalg.eigh((z + adjoint(z)) / 2)
    if eigs[0] < -tol.eps_psd:
        raise NotPSD(float(eigs[0]), tol.eps_psd)
    roots = np.sqrt(np.clip(eigs, 0.0, None))
    return (vecs * roots) @ adjoint(vecs)


def orthonormal_span(
    mats: MatrixStack,
    tol: Tolerances,
    ambient_dim: Optional[int] = None,
    base: Optional[OperatorSubspace] = None,
) -> OperatorSubspace:
    """
    HS-orthonormal basis of span(base ∪ mats).

    The basis of ``base`` is kept as is and extended by the directions of ``mats``
    orthogonal to it. Rank decisions use an SVD of the projected residuals with
    singular-value cutoff eps_rank.
    """
    if base is not None:
        ambient_dim = base.ambient_dim if ambient_dim is None else ambient_dim
        if base.ambient_dim != ambient_dim:
            raise DimensionError(f"base lives in M_{base.ambient_dim}, expected M_{ambient_dim}")
    stack = _stack(mats, ambient_dim)
    n = stack.shape[1]
    rows = stack.reshape(stack.shape[0], n * n)
    known = base.coords if base is not None else np.zeros((0, n * n), dtype=complex)

    if rows.shape[0] == 0:
        return base if base is not None else OperatorSubspace.zero(n)

    residual = rows
    if known.shape[0]:
        # Two projection passes keep the new directions orthogonal to the base at roundoff level.
        for _ in range(2):
            residual = residual - (residual @ known.conj().T) @ known
    _, sing, vh = np.linalg.svd(residual, full_matrices=False)
    rank = int(np.count_nonzero(sing > tol.eps_rank))
    basis = np.concatenate([known, vh[:rank]], axis=0)
    return OperatorSubspace(ambient_dim=n, basis=basis.reshape(-1, n, n))


def containment_residuals(S: OperatorSubspace, mats: MatrixStack) -> np.ndarray:
    """HS distance from each matrix to ``S``."""
    stack = _stack(mats, S.ambient_dim)
    n = S.ambient_dim
    rows = stack.reshape(stack.shape[0], n * n)
    if S.dim:
        rows = rows - (rows @ S.coords.conj().T) @ S.coords
    return np.linalg.norm(rows, axis=1)


def contains(S: OperatorSubspace, x: ComplexMatrix, tol: Tolerances) -> Membership:
    x = np.asarray(x, dtype=complex)
    if x.shape != (S.ambient_dim, S.ambient_dim):
        raise DimensionError(f"matrix of shape {x.shape} tested against a subspace of M_{S.ambient_dim}")
    residual = float(containment_residuals(S, x[None])[0])
    return Membership(member=residual <= tol.eps_residual * max(1.0, hs_norm(x)), residual=residual)


def max_containment_residual(S: OperatorSubspace, mats: MatrixStack) -> float:
    residuals = containment_residuals(S, mats)
    return float(residuals.max()) if residuals.size else 0.0


def subspace_equal(S: OperatorSubspace, T: OperatorSubspace, tol: Tolerances) -> SubspaceComparison:
    if S.ambient_dim != T.ambient_dim:
        raise DimensionError(f"comparing subspaces of M_{S.ambient_dim} and M_{T.ambient_dim}")
    gap = max(max_containment_residual(T, S.basis), max_containment_residual(S, T.basis))
    return SubspaceComparison(equal=gap <= tol.eps_residual, gap=gap)


def ampliate(blocks: Sequence[Sequence[ComplexMatrix]]) -> ComplexMatrix:
    """Assemble the (kn)x(kn) block matrix whose (i, j) block is blocks[i][j]."""
    k = len(blocks)
    if k == 0 or any(len(row) != k for row in blocks):
        raise DimensionError("ampliate expects a nonempty k x k array of blocks")
    shapes = {np.shape(b) for row in blocks for b in row}
    if len(shapes) != 1:
        raise DimensionError(f"ragged blocks of shapes {sorted(shapes)}")
    (shape,) = shapes
    if len(shape) != 2 or shape[0] != shape[1]:
        raise DimensionError(f"blocks must be square matrices, got shape {shape}")
    return np.block([[np.asarray(b, dtype=complex) for b in row] for row in blocks])


def block_entries(x: ComplexMatrix, k: int) -> np.ndarray:
    """Split a (kn)x(kn) matrix into its k x k grid of n x n blocks, shape (k, k, n, n)."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[0] // k
    return x.reshape(k, n, k, n).swapaxes(1, 2)


def products(left: MatrixStack, right: MatrixStack) -> np.ndarray:
    """All products a @ b for a in ``left`` and b in ``right``, shape (len(left) * len(right), n, n)."""
    lhs = _stack(left)
    rhs = _stack(right, lhs.shape[1])
    n = lhs.shape[1]
    return np.einsum("iab,jbc->ijac", lhs, rhs).reshape(-1, n, n)


def random_element(S: OperatorSubspace, rng: np.random.Generator, real: bool = False) -> ComplexMatrix:
    """Random combination of the basis of ``S``: real coefficients in [-1, 1], or complex Gaussian."""
    if S.dim == 0:
        return np.zeros((S.ambient_dim, S.ambient_dim), dtype=complex)
    if real:
        coeffs = rng.uniform(-1.0, 1.0, size=S.dim)
    else:
        coeffs = rng.standard_normal(S.dim) + 1j * rng.standard_normal(S.dim)
    return S.combine(coeffs)


def random_matrix(n: int, rng: np.random.Generator) -> ComplexMatrix:
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


def is_unitary_residual(u: ComplexMatrix) -> float:
    u = np.asarray(u, dtype=complex)
    return operator_norm(adjoint(u) @ u - np.eye(u.shape[0]))


def orthonormal_columns(shape: tuple, rng: np.random.Generator) -> np.ndarray:
    """Random isometry: QR of a complex Gaussian matrix with phases fixed so the law is Haar."""
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    q, r = np.linalg.qr(g)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def subspace_adjoint_residual(S: OperatorSubspace) -> float:
    """How far ``S`` is from being closed under the adjoint."""
    return max_containment_residual(S, adjoint(S.basis)) if S.dim else 0.0

