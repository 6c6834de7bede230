"""Exception hierarchy shared by every ce_lab service."""

from __future__ import annotations

from typing import Optional


class CELabError(Exception):
    """Base class for all domain errors raised by ce_lab."""


class DimensionError(CELabError, ValueError):
    """Operands live in different ambient dimensions, or a matrix is not square."""


class NotHermitian(CELabError, ValueError):
    def __init__(self, residual: float, bound: float):
        self.residual = residual
        self.bound = bound
        super().__init__(f"matrix is not Hermitian: ||a - a*|| = {residual:.3e} > {bound:.1e}")


class NotPSD(CELabError, ValueError):
    def __init__(self, min_eig: float, bound: float):
        self.min_eig = min_eig
        self.bound = bound
        super().__init__(f"matrix is not positive semidefinite: min eigenvalue {min_eig:.3e} < -{bound:.1e}")


class NotCP(CELabError, ValueError):
    def __init__(self, min_eig: float):
        self.min_eig = min_eig
        super().__init__(f"map is not completely positive: Choi min eigenvalue {min_eig:.3e}")


class UncertifiedMap(CELabError):
    """The map lacks a certificate flag the operation depends on."""


class InvalidPartition(CELabError, ValueError):
    pass


class NotUnitary(CELabError, ValueError):
    pass


class NotAGroup(CELabError, ValueError):
    pass


class InvalidChannel(CELabError, ValueError):
    """Channel is neither contractive nor trace preserving, so its Cesàro means need not converge."""


class NoConvergence(CELabError):
    def __init__(self, max_iter: int, last_difference: float):
        self.max_iter = max_iter
        self.last_difference = last_difference
        super().__init__(
            f"Cesàro averages did not settle within {max_iter} windows (last difference {last_difference:.3e})"
        )


class IdempotencyFailed(CELabError):
    pass


class MaxRoundsExceeded(CELabError):
    pass


class LetterNotInRange(CELabError, ValueError):
    pass


class NotInRange(CELabError, ValueError):
    pass


class NoUnit(CELabError):
    pass


class AssociativityFailed(CELabError):
    pass


class ClusterAmbiguity(CELabError):
    pass


class NotAnAlgebra(CELabError):
    pass


class BlockSplitError(CELabError):
    pass


class IsomorphismFailed(CELabError):
    pass


class ParseError(CELabError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class AmbiguousMapSpec(ParseError):
    pass
