"""
End-to-end certification of one problem.

Stages run in a fixed order and each one records verdicts for the checks it
owns. A failed hypothesis (Φ not cp, contractive and idempotent) ends the run
with every later check marked skipped; a failed theorem check is recorded and
the run carries on so the report has full diagnostics.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ce_lab.core.config import Settings, load_settings
from ce_lab.models import (
    CHECK_NAMES,
    FAIL,
    PASS,
    PROOF_STEP_CHECKS,
    SKIPPED,
    CertificateReport,
    CheckResult,
    ProblemFile,
    Tolerances,
)
from ce_lab.models.errors import CELabError, NoUnit
from ce_lab.services import ce_algebra, construct, quotient
from ce_lab.services.cp_maps import CPMap, kadison_schwarz_check
from ce_lab.services.linalg import operator_norm, random_element, random_matrix
from ce_lab.services.problem_io import EMBED_MAX_DIM, build_map, choi_digest, problem_document
from ce_lab.utils.log_util import configure_logger

log = configure_logger(__name__)

HYPOTHESIS_CHECKS: Tuple[str, ...] = ("cp", "contractive", "idempotent")
ISOMETRY_BOUND = 1e-6


class _Recorder:
    """Collects verdicts and per-stage wall-clock for one report."""

    def __init__(self, report: CertificateReport, wanted: Sequence[str]):
        self.report = report
        self.wanted = set(wanted)
        self._decided: Dict[str, CheckResult] = {}

    def wants(self, *names: str) -> bool:
        return any(name in self.wanted for name in names)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        log.info("Stage %s started", name)
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.report.timings[name] = round(elapsed, 6)
            log.info("Stage %s finished in %.3fs", name, elapsed)

    def record(
        self,
        name: str,
        passed: bool,
        residual: Optional[float] = None,
        bound: Optional[float] = None,
        detail: str = "",
    ) -> None:
        if name in self._decided:
            return
        if name not in self.wanted:
            self._decided[name] = CheckResult(name, SKIPPED, residual, bound, "not requested")
            return
        verdict = PASS if passed else FAIL
        if not passed:
            log.warning("Check %s failed: residual=%s bound=%s %s", name, residual, bound, detail)
        self._decided[name] = CheckResult(name, verdict, residual, bound, detail)

    def fail(self, name: str, exc: Exception) -> None:
        log.error("Check %s raised %s: %s", name, type(exc).__name__, exc)
        if name not in self.wanted:
            self._decided.setdefault(name, CheckResult(name, SKIPPED, detail="not requested"))
            return
        self._decided.setdefault(name, CheckResult(name, FAIL, detail=f"{type(exc).__name__}: {exc}"))

    def skip(self, names: Sequence[str], reason: str) -> None:
        for name in names:
            self._decided.setdefault(name, CheckResult(name, SKIPPED, detail=reason))

    def finish(self) -> None:
        self.skip(CHECK_NAMES, "not requested")
        self.report.checks = [self._decided[name] for name in CHECK_NAMES]


def _after(name: str) -> Tuple[str, ...]:
    return CHECK_NAMES[CHECK_NAMES.index(name) + 1:]


def resolve_tolerances(problem: ProblemFile, settings: Settings, tol_override: Optional[float] = None) -> Tolerances:
    """Config file, then the problem's overrides, then ``--tol``."""
    tol = Tolerances.from_mapping(problem.tolerances, base=settings.tolerances)
    return tol.with_residual(tol_override) if tol_override is not None else tol


def _embedded_problem(problem: ProblemFile, cp_map: Optional[CPMap], seed: int) -> Dict[str, object]:
    if cp_map is not None and problem.ambient_dim <= EMBED_MAX_DIM:
        return problem_document(
            problem.ambient_dim,
            cp_map=cp_map,
            tolerances=problem.tolerances,
            checks=problem.checks,
            seed=seed,
            label=problem.label,
        )
    document = problem_document(
        problem.ambient_dim,
        builder=problem.builder,
        tolerances=problem.tolerances,
        checks=problem.checks,
        seed=seed,
        label=problem.label,
    )
    if cp_map is not None:
        document["choi_sha256"] = choi_digest(cp_map.choi)
    return document


def _kadison_schwarz_sweep(cp_map: CPMap, probes: int, seed: int, tol: Tolerances) -> float:
    """Smallest eigenvalue of ‖z^½y‖²Φ(z) - Φ(zy)Φ(zy)* over random z = g*g and y."""
    rng = np.random.default_rng([seed, 1])
    n = cp_map.ambient_dim
    worst = np.inf
    for _ in range(probes):
        g = random_matrix(n, rng)
        z = g.conj().T @ g
        z = z / operator_norm(z)
        y = random_matrix(n, rng)
        y = y / operator_norm(y)
        worst = min(worst, kadison_schwarz_check(cp_map, z, y, tol).min_eig)
    return float(worst)


def _words(ctx, lengths: Sequence[int], per_length: int, seed: int) -> List[List[np.ndarray]]:
    rng = np.random.default_rng([seed, 2])
    return [
        [random_element(ctx.R, rng, real=True) for _ in range(length)]
        for length in lengths
        for _ in range(per_length)
    ]


def run_pipeline(
    problem: ProblemFile,
    settings: Optional[Settings] = None,
    tol_override: Optional[float] = None,
    k_max: Optional[int] = None,
    checks: Optional[Sequence[str]] = None,
) -> CertificateReport:
    """
    Certify one problem and return its report; nothing raises past this call.

    :param checks: verdicts to compute; defaults to the problem's list, or all checks.
    """
    settings = settings or load_settings()
    knobs = settings.pipeline
    tol = resolve_tolerances(problem, settings, tol_override)
    seed = problem.seed if problem.seed is not None else knobs.seed
    k_max = k_max if k_max is not None else knobs.k_max
    # the hypotheses are always reported
    wanted = tuple(checks or problem.checks or CHECK_NAMES) + HYPOTHESIS_CHECKS

    report = CertificateReport(
        label=problem.label or problem.map_kind,
        ambient_dim=problem.ambient_dim,
        tolerances=tol.as_dict(),
        seed=seed,
    )
    rec = _Recorder(report, wanted)
    try:
        _run_stages(problem, rec, tol, seed, k_max, settings)
    finally:
        rec.finish()
    passed = sum(result.verdict == PASS for result in report.checks)
    log.info("Report %s: exit %d, %d checks passed", report.label, report.exit_code, passed)
    return report


def run_proof_steps(
    problem: ProblemFile, settings: Optional[Settings] = None, tol_override: Optional[float] = None
) -> CertificateReport:
    """Only the steps of the kernel-ideal argument, after the hypotheses."""
    return run_pipeline(problem, settings, tol_override, checks=HYPOTHESIS_CHECKS + PROOF_STEP_CHECKS)


def _guarded(rec: _Recorder, name: str, fn: Callable[[], object]) -> Optional[object]:
    try:
        return fn()
    except (CELabError, ValueError) as exc:
        rec.fail(name, exc)
        return None


def _run_stages(
    problem: ProblemFile, rec: _Recorder, tol: Tolerances, seed: int, k_max: int, settings: Settings
) -> None:
    knobs = settings.pipeline
    report = rec.report

    cp_map: Optional[CPMap] = None
    with rec.stage("certify_projection"):
        cp_map = _guarded(rec, "cp", lambda: build_map(problem, tol))  # type: ignore[assignment]
        report.problem = _embedded_problem(problem, cp_map, seed)
        if cp_map is None:
            rec.skip(_after("cp"), "map could not be built")
            return
        certificate = cp_map.certificate(tol)
        report.projection_certificate = certificate.as_dict()
        rec.record("cp", certificate.cp, certificate.choi_min_eig, -tol.eps_psd)
        if certificate.contractive is None:
            rec.skip(("contractive",), "undecided: map is not cp")
        else:
            rec.record("contractive", certificate.contractive, certificate.norm_of_unit_image, 1.0 + tol.eps_residual)
        rec.record("idempotent", certificate.idempotent, certificate.idem_residual, tol.eps_residual)
        if not certificate.is_projection:
            rec.skip(_after("idempotent"), f"hypothesis failed: {', '.join(certificate.failures())}")
            return

    if rec.wants("kadison_schwarz"):
        with rec.stage("kadison_schwarz"):
            worst = _guarded(rec, "kadison_schwarz", lambda: _kadison_schwarz_sweep(cp_map, knobs.ks_probes, seed, tol))
            if worst is not None:
                rec.record("kadison_schwarz", worst >= -tol.eps_psd, worst, -tol.eps_psd, f"{knobs.ks_probes} probes")

    with rec.stage("range_and_algebra"):
        ctx = _guarded(rec, "generator_images", lambda: construct.algebra_context(cp_map, tol, knobs.max_rounds))
    if ctx is None:
        rec.skip(_after("kadison_schwarz"), "range or generated algebra could not be built")
        return
    report.dims.update({"n": ctx.ambient_dim, "dim_R": ctx.R.dim, "dim_A0": ctx.A0.dim})

    with rec.stage("ideal_J"):
        cert = _guarded(rec, "generator_images", lambda: construct.ideal_J(ctx, tol, knobs.max_rounds))
        if cert is not None:
            report.dims["dim_J"] = cert.J.dim
            report.observations.update(
                {
                    "generator_count": cert.generator_count,
                    "ideal_rounds": cert.rounds,
                    "right_closure_residual": cert.right_closure_residual,
                }
            )
            rec.record("generator_images", cert.generator_image_residual <= tol.eps_residual,
                       cert.generator_image_residual, tol.eps_residual)
            comparison = construct.verify_kernel_equals_ideal(ctx, cert, tol)
            report.dims["dim_kernel"] = construct.kernel_subspace(ctx, tol).dim
            rec.record("kernel_equals_ideal", comparison.equal, comparison.gap, tol.eps_residual)
            bilateral = construct.verify_bilateral(ctx, cert, tol)
            rec.record("bilateral", bilateral.bilateral, bilateral.left_residual, tol.eps_residual)
    if cert is None:
        rec.skip(_after("generator_images"), "ideal J could not be built")
        return

    if rec.wants("word_defect", "induction_step", "positive_kernel_witness"):
        with rec.stage("proof_steps"):
            _word_checks(rec, ctx, cert, tol, seed, knobs.word_lengths, knobs.words_per_length)

    if rec.wants("associativity", "unit", "star"):
        with rec.stage("ce_algebra"):
            try:
                algebra = ce_algebra.build_ce_algebra(ctx, tol)
            except NoUnit as exc:
                rec.fail("unit", exc)
                rec.skip(("associativity", "star"), "no unit")
            except CELabError as exc:
                rec.fail("associativity", exc)
                rec.skip(("unit", "star"), "structure constants rejected")
            else:
                report.observations["ordinary_closure_residual"] = algebra.ordinary_closure_residual
                rec.record("associativity", algebra.associativity_residual <= tol.eps_residual,
                           algebra.associativity_residual, tol.eps_residual)
                rec.record("unit", algebra.unit_residual <= tol.eps_residual, algebra.unit_residual, tol.eps_residual)
                rec.record("star", algebra.star_residual <= tol.eps_residual, algebra.star_residual, tol.eps_residual)

    if not rec.wants("wedderburn", "intertwining", "order_iso", "unital_isometry"):
        return

    with rec.stage("wedderburn"):
        w = _guarded(rec, "wedderburn", lambda: quotient.wedderburn(ctx.A0, tol, seed))
        if w is not None:
            report.observations["wedderburn_reseeds"] = w.reseeds
            rec.record("wedderburn", w.projection_residual <= tol.eps_residual, w.projection_residual,
                       tol.eps_residual, f"blocks {list(w.block_dims)}")
    if w is None:
        rec.skip(_after("wedderburn"), "Wedderburn decomposition failed")
        return

    with rec.stage("quotient_iso"):
        iso = _guarded(rec, "intertwining", lambda: quotient.quotient_iso(ctx, cert, w, tol))
        if iso is not None:
            report.dims.update(
                {
                    "block_dims": [list(b) for b in iso.wedderburn.block_dims],
                    "in_J": list(iso.wedderburn.in_J or ()),
                    "dim_B": iso.B.dim,
                }
            )
            worst = max(iso.forward_residual, iso.inverse_residual, iso.intertwining_residual)
            rec.record("intertwining", worst <= tol.eps_residual, iso.intertwining_residual, tol.eps_residual)
    if iso is None:
        rec.skip(_after("intertwining"), "quotient isomorphism failed")
        return

    if rec.wants("order_iso"):
        with rec.stage("order_iso"):
            order = quotient.order_iso_check(iso, k_max, knobs.order_trials, seed, tol)
            report.observations["order_iso"] = [
                {"k": lv.k, "min_eig_forward": lv.min_eig_forward, "min_eig_backward": lv.min_eig_backward}
                for lv in order.levels
            ]
            rec.record("order_iso", order.passed, order.min_eig, -order.bound, "; ".join(order.failures))

    if rec.wants("unital_isometry"):
        with rec.stage("unital_isometry"):
            iso_report = quotient.unital_isometry_check(iso, knobs.isometry_trials, seed, tol)
            report.observations["isometry_ratio"] = [iso_report.ratio_min, iso_report.ratio_max]
            if iso_report.gated:
                rec.record("unital_isometry", iso_report.deviation <= ISOMETRY_BOUND, iso_report.deviation, ISOMETRY_BOUND)
            else:
                rec.skip(("unital_isometry",), "Φ is not unital; ratios recorded only")


def _word_checks(rec: _Recorder, ctx, cert, tol: Tolerances, seed: int, lengths, per_length: int) -> None:
    words = _words(ctx, lengths, per_length, seed)
    try:
        memberships = [construct.word_defect(ctx, cert, word, tol) for word in words]
        worst = max((m.residual for m in memberships), default=0.0)
        rec.record("word_defect", all(m.member for m in memberships), worst, tol.eps_residual, f"{len(words)} words")
    except CELabError as exc:
        rec.fail("word_defect", exc)

    try:
        long_words = [word for word in words if len(word) >= 3]
        steps = [construct.induction_step(ctx, cert, word, tol) for word in long_words]
        worst = max((max(s.u1_residual, s.u1_image, s.u2_residual) for s in steps), default=0.0)
        rec.record("induction_step", all(s.holds for s in steps), worst, tol.eps_residual, f"{len(steps)} words")
    except CELabError as exc:
        rec.fail("induction_step", exc)

    rng = np.random.default_rng([seed, 3])
    try:
        witnesses = []
        for _ in range(per_length):
            x = random_element(ctx.R, rng)
            y = random_matrix(ctx.ambient_dim, rng)
            witnesses.append(construct.positive_kernel_witness(ctx.map, x, y / operator_norm(y), tol))
        worst = max((max(w.kernel_residual, w.product_residual, -w.psd_min_eig) for w in witnesses), default=0.0)
        rec.record("positive_kernel_witness", all(w.holds for w in witnesses), worst, tol.eps_residual)
    except CELabError as exc:
        rec.fail("positive_kernel_witness", exc)
