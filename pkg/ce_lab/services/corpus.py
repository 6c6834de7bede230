"""Seeded corpora of builder instances, certified in parallel and summarised with pandas."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from ce_lab.core.config import Settings, load_settings
from ce_lab.models import CHECK_NAMES, FAIL, PASS, BuilderSpec, CertificateReport, ProblemFile
from ce_lab.services.builders import BuilderKind
from ce_lab.services.pipeline import run_pipeline
from ce_lab.utils.log_util import configure_logger

log = configure_logger(__name__)

CONTENT_THRESHOLD = 1e-4
CORPUS_CAP = 200
# checks that must pass for a cesaro instance to count as a content demonstration
CONTENT_CHECKS = ("associativity", "unit", "star", "intertwining", "order_iso")


@dataclass
class CorpusResult:
    frame: pd.DataFrame
    summary: Dict[str, object]
    reports: List[CertificateReport]

    @property
    def exit_code(self) -> int:
        return 0 if all(report.exit_code == 0 for report in self.reports) else 1


def corpus_problems(count: int, n_max: int, seed: int, start: int = 0, kinds: Optional[List[str]] = None) -> List[ProblemFile]:
    """Round-robin over builder kinds and n = 2..n_max, one sub-seed per instance."""
    if n_max < 2:
        raise ValueError(f"n_max must be at least 2, got {n_max}")
    kinds = kinds or BuilderKind.list_values()
    sizes = list(range(2, min(n_max, 8) + 1))
    problems = []
    for index in range(start, start + count):
        kind = kinds[index % len(kinds)]
        n = sizes[(index // len(kinds)) % len(sizes)]
        sub_seed = int(np.random.default_rng([seed, index]).integers(0, 2**31 - 1))
        problems.append(
            ProblemFile(
                ambient_dim=n,
                builder=BuilderSpec(kind=kind, seed=sub_seed),
                seed=sub_seed,
                label=f"{kind}-n{n}-{index}",
            )
        )
    return problems


def _row(problem: ProblemFile, report: CertificateReport) -> Dict[str, object]:
    row: Dict[str, object] = {
        "label": report.label,
        "kind": problem.builder.kind if problem.builder else problem.map_kind,
        "n": problem.ambient_dim,
        "seed": problem.seed,
        "passed": report.passed,
        "dim_R": report.dims.get("dim_R"),
        "dim_A0": report.dims.get("dim_A0"),
        "dim_J": report.dims.get("dim_J"),
        "ordinary_closure_residual": report.observations.get("ordinary_closure_residual"),
    }
    for result in report.checks:
        row[result.name] = result.verdict
        row[f"{result.name}_residual"] = result.residual
    row["content"] = bool(
        row["kind"] == BuilderKind.CESARO.value
        and (row["ordinary_closure_residual"] or 0.0) > CONTENT_THRESHOLD
        and all(row.get(name) == PASS for name in CONTENT_CHECKS)
    )
    return row


def summarize(frame: pd.DataFrame) -> Dict[str, object]:
    """Pass and fail counts plus the largest recorded residual for every check."""
    if frame.empty:
        return {"instances": 0, "passed": 0, "content_instances": 0, "checks": {}}
    checks: Dict[str, Dict[str, object]] = {}
    for name in CHECK_NAMES:
        verdicts = frame[name]
        residuals = pd.to_numeric(frame[f"{name}_residual"], errors="coerce").abs()
        checks[name] = {
            "pass": int((verdicts == PASS).sum()),
            "fail": int((verdicts == FAIL).sum()),
            "max_residual": None if residuals.isna().all() else float(residuals.max()),
        }
    by_kind = frame.groupby("kind")["passed"].agg(["count", "sum"])
    return {
        "instances": int(len(frame)),
        "passed": int(frame["passed"].sum()),
        "content_instances": int(frame["content"].sum()),
        "by_kind": {kind: {"count": int(r["count"]), "passed": int(r["sum"])} for kind, r in by_kind.iterrows()},
        "checks": checks,
    }


def _certify_all(
    problems: List[ProblemFile], settings: Settings, tol_override: Optional[float], k_max: Optional[int]
) -> List[CertificateReport]:
    workers = settings.threads or min(4, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: run_pipeline(p, settings, tol_override, k_max), problems))


def run_corpus(
    count: int,
    n_max: int,
    seed: int,
    settings: Optional[Settings] = None,
    tol_override: Optional[float] = None,
    k_max: Optional[int] = None,
) -> CorpusResult:
    """
    Certify ``count`` instances; if none of them shows a non-product-closed range,
    keep adding cesaro instances until one does or the corpus reaches 200.
    """
    settings = settings or load_settings()
    problems = corpus_problems(count, n_max, seed)
    log.info("Certifying a corpus of %d instances (n <= %d, seed %d)", len(problems), n_max, seed)
    reports = _certify_all(problems, settings, tol_override, k_max)
    rows = [_row(p, r) for p, r in zip(problems, reports)]

    while not any(row["content"] for row in rows) and len(problems) < CORPUS_CAP:
        batch = min(10, CORPUS_CAP - len(problems))
        extra = corpus_problems(batch, n_max, seed, start=len(problems), kinds=[BuilderKind.CESARO.value])
        log.info("No content instance among %d; adding %d cesaro instances", len(problems), batch)
        extra_reports = _certify_all(extra, settings, tol_override, k_max)
        problems.extend(extra)
        reports.extend(extra_reports)
        rows.extend(_row(p, r) for p, r in zip(extra, extra_reports))

    frame = pd.DataFrame(rows)
    summary = summarize(frame)
    summary.update({"seed": seed, "n_max": n_max, "requested": count})
    if not summary["content_instances"]:
        log.warning("no content instance found within %d instances", len(problems))
    log.info(
        "Corpus done: %d/%d passed, %d content", summary["passed"], summary["instances"], summary["content_instances"]
    )
    return CorpusResult(frame=frame, summary=summary, reports=reports)
