from .types import (
    ChannelSpec,
    ComplexMatrix,
    KadisonSchwarzCheck,
    Membership,
    OperatorSubspace,
    Partition,
    ProjectionCertificate,
    PSDCheck,
    SubspaceComparison,
    Tolerances,
)
from .algebra import (
    AlgebraContext,
    BilateralCheck,
    CEAlgebra,
    IdealCertificate,
    InductionCheck,
    IsometryReport,
    OrderIsoLevel,
    OrderIsoReport,
    QuotientIso,
    WedderburnDecomposition,
    WitnessCheck,
)

from .report import (
    CHECK_NAMES,
    FAIL,
    PASS,
    PROOF_STEP_CHECKS,
    SKIPPED,
    BuilderSpec,
    CertificateReport,
    CheckResult,
    ProblemFile,
)

__all__ = [
    "CHECK_NAMES",
    "FAIL",
    "PASS",
    "PROOF_STEP_CHECKS",
    "SKIPPED",
    "BuilderSpec",
    "CertificateReport",
    "CheckResult",
    "ProblemFile",
    "AlgebraContext",
    "BilateralCheck",
    "CEAlgebra",
    "ChannelSpec",
    "ComplexMatrix",
    "IdealCertificate",
    "InductionCheck",
    "IsometryReport",
    "KadisonSchwarzCheck",
    "Membership",
    "OperatorSubspace",
    "OrderIsoLevel",
    "OrderIsoReport",
    "Partition",
    "ProjectionCertificate",
    "PSDCheck",
    "QuotientIso",
    "SubspaceComparison",
    "Tolerances",
    "WedderburnDecomposition",
    "WitnessCheck",
]
