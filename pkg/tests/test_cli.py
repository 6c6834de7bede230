import json
import os

import pytest

from ce_lab.cli.main import EXIT_OK, EXIT_USAGE, main
from ce_lab.services.problem_io import parse_problem

from conftest import PROBLEMS_DIR


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "ce_lab.toml"
    path.write_text(
        "[pipeline]\norder_trials = 4\nks_probes = 8\nwords_per_length = 2\nisometry_trials = 4\n",
        encoding="utf-8",
    )
    return str(path)


def _problem(name):
    return os.path.join(PROBLEMS_DIR, name)


def test_certify_pinch_exits_zero(fast_config, tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["certify", _problem("pinch3.json"), "--config", fast_config, "--k-max", "2", "--json-out", str(out)])
    assert code == EXIT_OK
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["exit_code"] == 0
    assert report["dims"]["dim_R"] == 5
    assert [c["name"] for c in report["checks"]][:3] == ["cp", "contractive", "idempotent"]
    assert "pinch3 (n=3): exit 0" in capsys.readouterr().out


def test_certify_report_can_be_certified_again(fast_config, tmp_path):
    out = tmp_path / "report.json"
    assert main(["certify", _problem("absorbing3.json"), "--config", fast_config, "--json-out", str(out), "--quiet"]) == 0
    again = tmp_path / "again.json"
    assert main(["certify", str(out), "--config", fast_config, "--json-out", str(again), "--quiet"]) == 0
    assert json.loads(again.read_text())["dims"] == json.loads(out.read_text())["dims"]


def test_certify_non_cp_map_exits_one(fast_config, capsys):
    assert main(["certify", _problem("transpose.json"), "--config", fast_config]) == 1
    assert "cp: fail" in capsys.readouterr().out


def test_proof_steps_command(fast_config, capsys):
    assert main(["proof-steps", _problem("absorbing3.json"), "--config", fast_config]) == 0
    out = capsys.readouterr().out
    assert "kernel_equals_ideal: pass" in out
    assert "associativity" not in out


def test_tol_override_is_reported(fast_config, tmp_path):
    out = tmp_path / "report.json"
    main(["certify", _problem("pinch2.json"), "--config", fast_config, "--tol", "1e-6", "--json-out", str(out)])
    tolerances = json.loads(out.read_text())["tolerances"]
    assert tolerances["eps_residual"] == 1e-6
    assert tolerances["eps_rank"] == 1e-10


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["certify"],
        ["frobnicate"],
        ["certify", "missing.json"],
        ["corpus", "--count", "0"],
        ["certify", "x.json", "--tol", "-1"],
    ],
)
def test_usage_errors_exit_two(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_malformed_problem_exits_two(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"n": 2, "kraus": [[[1, 0], [0, 1]]], "choi": [[1]]}', encoding="utf-8")
    assert main(["certify", str(path)]) == EXIT_USAGE
    assert "exactly one of" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK


def test_build_emits_a_seeded_problem(tmp_path):
    out = tmp_path / "built.json"
    assert main(["build", "--kind", "cesaro", "--n", "3", "--seed", "2", "-o", str(out)]) == EXIT_OK
    problem = parse_problem(out)
    assert problem.builder.kind == "cesaro"
    assert problem.builder.seed == 2
    assert problem.label == "cesaro-n3-s2"


def test_build_materialize_embeds_the_choi_matrix(tmp_path):
    out = tmp_path / "built.json"
    assert main(["build", "--kind", "pinch", "--n", "4", "--seed", "1", "--materialize", "-o", str(out)]) == EXIT_OK
    assert parse_problem(out).map_kind == "choi"


def test_build_rejects_unsupported_size(capsys):
    assert main(["build", "--kind", "pinch", "--n", "12"]) == EXIT_USAGE
    assert "2 <= n <= 8" in capsys.readouterr().err


def test_build_prints_to_stdout(capsys):
    assert main(["build", "--kind", "group", "--n", "2"]) == EXIT_OK
    document = json.loads(capsys.readouterr().out)
    assert document["builder"] == {"kind": "group", "seed": 0}


def test_small_corpus(fast_config, tmp_path, capsys):
    summary_path = tmp_path / "summary.json"
    csv_path = tmp_path / "corpus.csv"
    code = main(
        [
            "corpus", "--count", "4", "--n-max", "3", "--seed", "1", "--config", fast_config,
            "--k-max", "2", "--json-out", str(summary_path), "--csv", str(csv_path), "--quiet",
        ]
    )
    assert code == EXIT_OK
    summary = json.loads(summary_path.read_text())
    assert summary["instances"] >= 4
    assert summary["passed"] == summary["instances"]
    assert csv_path.read_text().startswith("label,")
