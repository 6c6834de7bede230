"""
JSON problem files and certificate reports.

A problem names the ambient dimension ``n`` and exactly one of ``kraus``,
``choi`` or ``builder``. Matrices are row-major nested arrays whose entries are
either bare reals or ``[re, im]`` pairs. The full grammar lives in
docs/problem_format.md.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import IO, Dict, List, Optional, Sequence, Union

import numpy as np

from ce_lab.models import (
    CHECK_NAMES,
    BuilderSpec,
    CertificateReport,
    ChannelSpec,
    ProblemFile,
    Partition,
    Tolerances,
)
from ce_lab.models.errors import AmbiguousMapSpec, DimensionError, InvalidChannel, InvalidPartition, ParseError
from ce_lab.services.builders import (
    BuilderKind,
    cesaro_projection,
    conjugated_pinching,
    group_average,
    pinching,
    random_instance,
)
from ce_lab.services.cp_maps import CPMap, from_kraus
from ce_lab.utils.log_util import configure_logger

log = configure_logger(__name__)

MAP_KEYS = ("kraus", "choi", "builder")
# reports embed the Choi matrix up to this ambient dimension, a digest above it
EMBED_MAX_DIM = 8

Source = Union[str, Path, IO[str]]


def _read_text(source: Source) -> str:
    if hasattr(source, "read"):
        return source.read()  # type: ignore[union-attr]
    try:
        return Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read problem file: {exc}") from exc


def load_document(source: Source) -> Dict[str, object]:
    text = _read_text(source)
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(document, dict):
        raise ParseError("top level must be an object", line=1)
    return document


def _entry(value, field: str) -> complex:
    if isinstance(value, bool):
        raise ParseError(f"boolean {value!r} is not a matrix entry", field=field)
    if isinstance(value, (int, float)):
        return complex(float(value), 0.0)
    if isinstance(value, list) and len(value) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return complex(float(value[0]), float(value[1]))
    raise ParseError(f"entry {value!r} is neither a real number nor an [re, im] pair", field=field)


def parse_matrix(value, field: str, size: Optional[int] = None) -> np.ndarray:
    """Row-major nested array -> complex square matrix, optionally of a required size."""
    if not isinstance(value, list) or not value or not all(isinstance(row, list) for row in value):
        raise ParseError("matrix must be a nonempty list of rows", field=field)
    rows = len(value)
    if any(len(row) != rows for row in value):
        raise DimensionError(f"{field}: matrix is not square ({rows} rows, row lengths {[len(r) for r in value]})")
    if size is not None and rows != size:
        raise DimensionError(f"{field}: expected a {size}x{size} matrix, got {rows}x{rows}")
    return np.array(
        [[_entry(v, f"{field}[{i}][{j}]") for j, v in enumerate(row)] for i, row in enumerate(value)],
        dtype=complex,
    )


def _matrix_list(value, field: str, size: int) -> List[np.ndarray]:
    if not isinstance(value, list) or not value:
        raise ParseError("expected a nonempty list of matrices", field=field)
    return [parse_matrix(m, f"{field}[{idx}]", size) for idx, m in enumerate(value)]


def _partition(value, field: str, n: int) -> Partition:
    if not isinstance(value, list) or not all(isinstance(b, list) for b in value):
        raise ParseError("partition must be a list of blocks of 1-based indices", field=field)
    try:
        partition = Partition(ambient_dim=n, blocks=tuple(tuple(b) for b in value))
    except (InvalidPartition, TypeError, ValueError) as exc:
        raise ParseError(str(exc), field=field) from exc
    return partition


def _builder(value, n: int) -> BuilderSpec:
    if not isinstance(value, dict) or "kind" not in value:
        raise ParseError("builder must be an object with a 'kind'", field="builder")
    try:
        kind = BuilderKind(value["kind"])
    except ValueError as exc:
        raise ParseError(
            f"unknown builder kind {value['kind']!r}; expected one of {BuilderKind.list_values()}", field="builder.kind"
        ) from exc
    seed = value.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ParseError("seed must be an integer", field="builder.seed")
    raw = value.get("params")
    if raw is None:
        if seed is None:
            raise ParseError("builder needs params or a seed", field="builder")
        return BuilderSpec(kind=kind.value, params=None, seed=seed)

    field = "builder.params"
    if kind is BuilderKind.PINCH:
        params: object = _partition(raw, field, n)
    elif kind is BuilderKind.GROUP:
        params = tuple(_matrix_list(raw, field, n))
    elif kind is BuilderKind.CONJUGATED:
        if not isinstance(raw, dict) or "unitary" not in raw or "partition" not in raw:
            raise ParseError("conjugated params need 'unitary' and 'partition'", field=field)
        params = (parse_matrix(raw["unitary"], f"{field}.unitary", n), _partition(raw["partition"], f"{field}.partition", n))
    else:
        if not isinstance(raw, dict) or "kraus" not in raw:
            raise ParseError("cesaro params need the channel's 'kraus' operators", field=field)
        kraus = _matrix_list(raw["kraus"], f"{field}.kraus", n)
        try:
            params = ChannelSpec(kraus=tuple(kraus), trace_preserving=bool(raw.get("trace_preserving", False)))
        except InvalidChannel as exc:
            raise ParseError(str(exc), field=f"{field}.trace_preserving") from exc
    return BuilderSpec(kind=kind.value, params=params, seed=seed)


def parse_problem(source: Source) -> ProblemFile:
    """
    Read and validate a problem document.

    A certificate report is accepted as well: its embedded ``problem`` object is used.

    :raises ParseError: malformed JSON (with line) or invalid field (with field name).
    :raises DimensionError: a matrix does not match ``n``.
    :raises AmbiguousMapSpec: not exactly one of kraus, choi, builder.
    """
    document = load_document(source)
    if isinstance(document.get("problem"), dict):
        document = document["problem"]  # type: ignore[assignment]

    n = document.get("n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ParseError(f"'n' must be a positive integer, got {n!r}", field="n")

    present = [key for key in MAP_KEYS if key in document]
    if len(present) != 1:
        raise AmbiguousMapSpec(f"expected exactly one of {list(MAP_KEYS)}, found {present}", field="map")

    kraus = choi = builder = None
    if present[0] == "kraus":
        kraus = tuple(_matrix_list(document["kraus"], "kraus", n))
    elif present[0] == "choi":
        choi = parse_matrix(document["choi"], "choi", n * n)
    else:
        builder = _builder(document["builder"], n)

    raw_tol = document.get("tolerances", {})
    if not isinstance(raw_tol, dict):
        raise ParseError("tolerances must be an object", field="tolerances")
    try:
        tolerances = Tolerances.from_mapping(raw_tol).as_dict() if raw_tol else {}
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), field="tolerances") from exc
    if raw_tol:
        tolerances = {key: tolerances[key] for key in raw_tol}

    checks = document.get("checks", [])
    if not isinstance(checks, list) or not all(isinstance(c, str) for c in checks):
        raise ParseError("checks must be a list of names", field="checks")
    unknown = sorted(set(checks) - set(CHECK_NAMES))
    if unknown:
        raise ParseError(f"unknown checks {unknown}; known: {list(CHECK_NAMES)}", field="checks")

    seed = document.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ParseError("seed must be an integer", field="seed")
    label = document.get("label", "")
    return ProblemFile(
        ambient_dim=n,
        kraus=kraus,
        choi=choi,
        builder=builder,
        tolerances=tolerances,
        checks=tuple(checks),
        seed=seed,
        label=str(label),
    )


def build_map(problem: ProblemFile, tol: Tolerances) -> CPMap:
    """Materialise the map a problem describes."""
    n = problem.ambient_dim
    if problem.kraus is not None:
        return from_kraus(problem.kraus, label=problem.label or "kraus")
    if problem.choi is not None:
        return CPMap(problem.choi, label=problem.label or "choi")
    spec = problem.builder
    if spec is None:
        raise AmbiguousMapSpec("problem carries no map", field="map")
    kind = BuilderKind(spec.kind)
    if spec.params is None:
        return random_instance(n, kind.value, int(spec.seed or 0), tol)
    if kind is BuilderKind.PINCH:
        return pinching(spec.params)  # type: ignore[arg-type]
    if kind is BuilderKind.GROUP:
        return group_average(spec.params, tol)  # type: ignore[arg-type]
    if kind is BuilderKind.CONJUGATED:
        unitary, partition = spec.params  # type: ignore[misc]
        return conjugated_pinching(unitary, partition, tol)
    return cesaro_projection(spec.params, tol)  # type: ignore[arg-type]


def matrix_to_json(x: np.ndarray) -> list:
    """Bare reals when the matrix is real, [re, im] pairs otherwise."""
    x = np.asarray(x, dtype=complex)
    if not np.any(x.imag):
        return x.real.tolist()
    return [[[float(v.real), float(v.imag)] for v in row] for row in x]


def builder_to_json(spec: BuilderSpec) -> Dict[str, object]:
    entry: Dict[str, object] = {"kind": spec.kind}
    if spec.seed is not None:
        entry["seed"] = spec.seed
    params = spec.params
    if params is None:
        return entry
    if isinstance(params, Partition):
        entry["params"] = [list(block) for block in params.blocks]
    elif isinstance(params, ChannelSpec):
        entry["params"] = {
            "kraus": [matrix_to_json(k) for k in params.kraus],
            "trace_preserving": params.trace_preserving,
        }
    elif spec.kind == BuilderKind.CONJUGATED.value:
        unitary, partition = params  # type: ignore[misc]
        entry["params"] = {"unitary": matrix_to_json(unitary), "partition": [list(b) for b in partition.blocks]}
    else:
        entry["params"] = [matrix_to_json(u) for u in params]  # type: ignore[union-attr]
    return entry


def choi_digest(choi: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(choi, dtype=np.complex128).tobytes()).hexdigest()


def problem_document(
    n: int,
    cp_map: Optional[CPMap] = None,
    builder: Optional[BuilderSpec] = None,
    tolerances: Optional[Dict[str, float]] = None,
    checks: Sequence[str] = (),
    seed: Optional[int] = None,
    label: str = "",
) -> Dict[str, object]:
    """A problem document carrying either an explicit map (as its Choi matrix) or a seeded builder."""
    document: Dict[str, object] = {"n": n}
    if label:
        document["label"] = label
    if cp_map is not None:
        document["choi"] = matrix_to_json(cp_map.choi)
    elif builder is not None:
        document["builder"] = builder_to_json(builder)
    if tolerances:
        document["tolerances"] = dict(tolerances)
    if checks:
        document["checks"] = list(checks)
    if seed is not None:
        document["seed"] = seed
    return document


def _finite(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    if isinstance(value, np.generic):
        return _finite(value.item())
    return value


def report_to_dict(report: CertificateReport) -> Dict[str, object]:
    return _finite(
        {
            "label": report.label,
            "n": report.ambient_dim,
            "passed": report.passed,
            "exit_code": report.exit_code,
            "seed": report.seed,
            "tolerances": report.tolerances,
            "projection_certificate": report.projection_certificate,
            "dims": report.dims,
            "checks": [result.as_dict() for result in report.checks],
            "observations": report.observations,
            "timings": report.timings,
            "problem": report.problem,
        }
    )


def write_json(document: Dict[str, object], path: Union[str, Path]) -> None:
    target = Path(path)
    if target.parent and not target.parent.exists():
        target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    log.info("Wrote %s", target)


def write_report(report: CertificateReport, path: Union[str, Path]) -> None:
    write_json(report_to_dict(report), path)
