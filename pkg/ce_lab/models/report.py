from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

PASS = "pass"
FAIL = "fail"
SKIPPED = "skipped"


@dataclass(frozen=True)
class BuilderSpec:
    kind: str
    # None means "draw a random instance of this kind from the seed"
    params: Optional[object] = None
    seed: Optional[int] = None


@dataclass(frozen=True, eq=False)
class ProblemFile:
    ambient_dim: int
    kraus: Optional[Tuple[np.ndarray, ...]] = None
    choi: Optional[np.ndarray] = None
    builder: Optional[BuilderSpec] = None
    tolerances: Dict[str, float] = field(default_factory=dict)
    checks: Tuple[str, ...] = ()
    seed: Optional[int] = None
    label: str = ""

    @property
    def map_kind(self) -> str:
        if self.kraus is not None:
            return "kraus"
        if self.choi is not None:
            return "choi"
        return "builder"


@dataclass
class CheckResult:
    name: str
    verdict: str
    residual: Optional[float] = None
    bound: Optional[float] = None
    detail: str = ""

    def as_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "residual": self.residual,
            "bound": self.bound,
            "detail": self.detail,
        }


@dataclass
class CertificateReport:
    """Everything needed to re-derive each verdict: residuals, bounds, seeds and tolerances."""

    label: str
    ambient_dim: int
    tolerances: Dict[str, float]
    seed: int
    projection_certificate: Optional[Dict[str, object]] = None
    dims: Dict[str, object] = field(default_factory=dict)
    checks: List[CheckResult] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    # extra measurements that are recorded but not gated (order-iso per k, isometry ratios, ...)
    observations: Dict[str, object] = field(default_factory=dict)
    problem: Dict[str, object] = field(default_factory=dict)

    def check(self, name: str) -> Optional[CheckResult]:
        for result in self.checks:
            if result.name == name:
                return result
        return None

    def verdicts(self) -> Dict[str, str]:
        return {result.name: result.verdict for result in self.checks}

    @property
    def passed(self) -> bool:
        return all(result.verdict != FAIL for result in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


# Verdict names in pipeline order.
CHECK_NAMES: Tuple[str, ...] = (
    "cp",
    "contractive",
    "idempotent",
    "kadison_schwarz",
    "generator_images",
    "kernel_equals_ideal",
    "bilateral",
    "word_defect",
    "induction_step",
    "positive_kernel_witness",
    "associativity",
    "unit",
    "star",
    "wedderburn",
    "intertwining",
    "order_iso",
    "unital_isometry",
)

PROOF_STEP_CHECKS: Tuple[str, ...] = (
    "generator_images",
    "kernel_equals_ideal",
    "bilateral",
    "word_defect",
    "induction_step",
    "positive_kernel_witness",
)
