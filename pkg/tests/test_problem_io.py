import io
import json
import os

import numpy as np
import pytest

from ce_lab.models import BuilderSpec, Partition, Tolerances
from ce_lab.models.errors import AmbiguousMapSpec, DimensionError, ParseError
from ce_lab.services.problem_io import (
    build_map,
    choi_digest,
    matrix_to_json,
    parse_matrix,
    parse_problem,
    problem_document,
    report_to_dict,
    write_json,
)

from conftest import PROBLEMS_DIR

TOL = Tolerances()


def _source(document):
    return io.StringIO(json.dumps(document))


def test_entries_may_be_real_or_pairs():
    x = parse_matrix([[[0, 1], 0], [0, [0, -1]]], "x")
    assert np.allclose(x, np.diag([1j, -1j]))


def test_boolean_entries_are_rejected():
    with pytest.raises(ParseError) as exc:
        parse_matrix([[True]], "x")
    assert exc.value.field == "x[0][0]"


def test_non_square_matrix_is_a_dimension_error():
    with pytest.raises(DimensionError):
        parse_matrix([[1, 2, 3], [4, 5, 6]], "x")


@pytest.mark.parametrize("name", sorted(os.listdir(PROBLEMS_DIR)))
def test_sample_problems_parse(name):
    problem = parse_problem(os.path.join(PROBLEMS_DIR, name))
    assert problem.ambient_dim >= 2


def test_pinch_builder_and_kraus_files_agree():
    from_builder = build_map(parse_problem(os.path.join(PROBLEMS_DIR, "pinch2.json")), TOL)
    from_kraus = build_map(parse_problem(os.path.join(PROBLEMS_DIR, "pinch2_kraus.json")), TOL)
    assert np.allclose(from_builder.choi, from_kraus.choi)


def test_pinch_partition_is_parsed():
    problem = parse_problem(os.path.join(PROBLEMS_DIR, "pinch3.json"))
    assert problem.builder.kind == "pinch"
    assert problem.builder.params == Partition(ambient_dim=3, blocks=((1, 2), (3,)))
    assert problem.label == "pinch3"


@pytest.mark.parametrize("keys", [(), ("kraus", "choi"), ("kraus", "builder")])
def test_exactly_one_map_key(keys):
    document = {"n": 1}
    values = {"kraus": [[[1]]], "choi": [[1]], "builder": {"kind": "pinch", "params": [[1]]}}
    document.update({key: values[key] for key in keys})
    with pytest.raises(AmbiguousMapSpec):
        parse_problem(_source(document))


def test_malformed_json_reports_the_line():
    text = '{\n  "n": 2,\n  "kraus": [\n}\n'
    with pytest.raises(ParseError) as exc:
        parse_problem(io.StringIO(text))
    assert exc.value.line == 4


def test_kraus_of_wrong_size():
    with pytest.raises(DimensionError):
        parse_problem(_source({"n": 2, "kraus": [np.eye(3).tolist()]}))


def test_unknown_check_is_rejected():
    with pytest.raises(ParseError) as exc:
        parse_problem(_source({"n": 1, "kraus": [[[1]]], "checks": ["cp", "magic"]}))
    assert exc.value.field == "checks"


def test_bad_tolerance_is_rejected():
    with pytest.raises(ParseError):
        parse_problem(_source({"n": 1, "kraus": [[[1]]], "tolerances": {"eps_psd": -1}}))
    with pytest.raises(ParseError):
        parse_problem(_source({"n": 1, "kraus": [[[1]]], "tolerances": {"eps_other": 1e-3}}))


def test_builder_needs_params_or_seed():
    with pytest.raises(ParseError):
        parse_problem(_source({"n": 3, "builder": {"kind": "cesaro"}}))
    with pytest.raises(ParseError):
        parse_problem(_source({"n": 3, "builder": {"kind": "shuffle", "seed": 1}}))


def test_seeded_builder_document_round_trips_through_the_builder():
    document = problem_document(3, builder=BuilderSpec(kind="conjugated", seed=4), seed=9, label="c3")
    problem = parse_problem(_source(document))
    assert problem.builder == BuilderSpec(kind="conjugated", params=None, seed=4)
    assert problem.seed == 9
    assert build_map(problem, TOL).certificate(TOL).is_projection


def test_materialised_document_keeps_the_map(absorbing3):
    document = problem_document(3, cp_map=absorbing3, checks=("cp", "bilateral"))
    problem = parse_problem(_source(document))
    assert problem.map_kind == "choi"
    assert problem.checks == ("cp", "bilateral")
    assert np.allclose(build_map(problem, TOL).choi, absorbing3.choi)


def test_embedded_problem_of_a_report_is_used(tmp_path, pinch3):
    path = tmp_path / "nested" / "report.json"
    write_json({"label": "x", "checks": [], "problem": problem_document(3, cp_map=pinch3)}, path)
    problem = parse_problem(path)
    assert np.allclose(build_map(problem, TOL).choi, pinch3.choi)


def test_matrix_to_json_uses_pairs_only_for_complex():
    assert matrix_to_json(np.eye(2)) == [[1.0, 0.0], [0.0, 1.0]]
    assert matrix_to_json(np.diag([1j, 1])) == [[[0.0, 1.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]


def test_choi_digest_is_stable(pinch3):
    assert choi_digest(pinch3.choi) == choi_digest(np.array(pinch3.choi))
    assert len(choi_digest(pinch3.choi)) == 64


def test_report_serialisation_drops_non_finite_values():
    from ce_lab.models import CertificateReport, CheckResult

    report = CertificateReport(label="r", ambient_dim=2, tolerances=TOL.as_dict(), seed=0)
    report.checks = [CheckResult("cp", "fail", float("nan"), -1e-8)]
    report.observations["ratio"] = [float("inf"), np.float64(1.0)]
    data = report_to_dict(report)
    assert data["checks"][0]["residual"] is None
    assert data["observations"]["ratio"] == [None, 1.0]
    assert data["exit_code"] == 1
    json.dumps(data)
