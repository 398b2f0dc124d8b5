"""Command-line interface tests: schemas, determinism, exit codes."""

import json

import numpy as np
import pytest

from memn import __version__
from memn.cli import main
from memn.core import GameParams, StrategyVector, build_payoff_vector
from memn.markov import decompose_payoff, payoff


@pytest.fixture
def strategy_files(tmp_path):
    p = tmp_path / "p.json"
    q = tmp_path / "q.json"
    p.write_text(json.dumps({"n": 1, "probs": [0.8, 0.2, 0.8, 0.2]}))
    q.write_text(json.dumps({"n": 1, "probs": [0.6, 0.3, 0.6, 0.3]}))
    return p, q


def test_matrix_command(strategy_files, tmp_path, capsys):
    p, q = strategy_files
    out = tmp_path / "matrix.json"
    assert main(["matrix", "--n", "1", "--p", str(p), "--q", str(q), "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["version"] == __version__
    assert payload["n"] == 1
    assert len(payload["rows"]) == 4
    row_cd = payload["rows"][1]
    assert [col for col, _ in row_cd] == [0, 1, 2, 3]
    # p_CD = 0.2 and the co-player cooperates after DC with 0.6
    assert row_cd[0][1] == pytest.approx(0.2 * 0.6)


def test_matrix_permutation_rows_for_unit_strategies(tmp_path):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"n": 1, "probs": [1, 1, 1, 1]}))
    out = tmp_path / "m.json"
    assert main(["matrix", "--n", "1", "--p", str(p), "--q", str(p), "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    for row in payload["rows"]:
        values = sorted(v for _, v in row)
        assert values == [0.0, 0.0, 0.0, 1.0]


def test_payoff_command(strategy_files, capsys):
    p, q = strategy_files
    assert main(["payoff", "--n", "1", "--p", str(p), "--q", str(q), "--b", "2", "--c", "1"]) == 0
    payload = json.loads(capsys.readouterr().out)
    f = build_payoff_vector(GameParams.donation(2, 1), 1)
    ps = StrategyVector(1, np.array([0.8, 0.2, 0.8, 0.2]))
    qs = StrategyVector(1, np.array([0.6, 0.3, 0.6, 0.3]))
    assert payload["A"] == pytest.approx(payoff(ps, qs, f), abs=1e-12)
    a_s, a_a = decompose_payoff(ps, qs, f)
    assert payload["A_s"] == pytest.approx(a_s, abs=1e-12)
    assert payload["A_a"] == pytest.approx(a_a, abs=1e-12)
    assert payload["A"] == pytest.approx(payload["A_s"] + payload["A_a"], abs=1e-10)


def test_field_command(strategy_files, capsys):
    p, _ = strategy_files
    assert main(["field", "--at", str(p), "--variant", "antisym", "--b", "2", "--c", "1"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["variant"] == "antisymmetric"
    assert len(payload["field"]) == 4


def test_integrate_deterministic(tmp_path, capsys):
    x0 = tmp_path / "x0.json"
    x0.write_text(json.dumps({"n": 1, "probs": [0.6, 0.45, 0.5, 0.4]}))
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    flags = ["integrate", "--x0", str(x0), "--variant", "antisym",
             "--n", "1", "--b", "2", "--c", "1", "--dt", "1e-3",
             "--tmax", "0.5"]
    assert main(flags + ["--out", str(out1)]) == 0
    assert main(flags + ["--out", str(out2)]) == 0
    text = out1.read_text()
    assert text == out2.read_text()
    lines = text.splitlines()
    assert lines[0].startswith(f"# memn {__version__}")
    assert lines[1] == "t,p0,p1,p2,p3,G1,G2,G3,field_norm"
    assert len(lines) == 503  # header comment + column row + 501 states


def test_verify_suite_and_exit_codes(tmp_path):
    report_path = tmp_path / "report.json"
    code = main([
        "verify", "symmetry", "--trials", "5", "--seed", "7",
        "--out", str(report_path),
    ])
    assert code == 0
    payload = json.loads(report_path.read_text())
    assert payload["passed"] is True
    assert payload["version"] == __version__
    ids = [c["check_id"] for c in payload["checks"]]
    assert ids == [
        "permutation-group",
        "conjugation-identities",
        "admissibility",
        "payoff-reflection",
        "j2-multiplicities",
    ]
    for check in payload["checks"]:
        assert set(check) == {
            "check_id", "claim", "max_residual", "tolerance",
            "passed", "wall_time", "detail",
        }


def test_verify_two_seeds_same_verdicts(tmp_path):
    verdicts = {}
    for seed in (7, 8):
        path = tmp_path / f"r{seed}.json"
        main(["verify", "symmetry", "--trials", "5", "--seed", str(seed),
              "--out", str(path)])
        payload = json.loads(path.read_text())
        verdicts[seed] = [(c["check_id"], c["passed"]) for c in payload["checks"]]
    assert verdicts[7] == verdicts[8]


def test_verify_fault_injection_fails(tmp_path):
    path = tmp_path / "fault.json"
    code = main([
        "verify", "--trials", "3", "--inject-fault", "--out", str(path),
    ])
    assert code == 1
    payload = json.loads(path.read_text())
    ids = [c["check_id"] for c in payload["checks"]]
    assert len(ids) == len(set(ids))  # every check id appears exactly once
    assert ids == [
        "matrix-structure",
        "permutation-group",
        "conjugation-identities",
        "admissibility",
        "payoff-methods",
        "reactive-closed-form",
        "constant-shift",
        "payoff-decomposition",
        "payoff-reflection",
        "gradient-consistency",
        "closed-form-fields",
        "field-decomposition",
        "counting-consistency",
        "reactive-fields",
        "conserved-drift",
        "tft-stationarity",
        "z2-mirror",
        "j2-multiplicities",
        "perturbation-envelope",
    ]
    assert payload["passed"] == all(c["passed"] for c in payload["checks"])
    failed = [c for c in payload["checks"] if not c["passed"]]
    assert [c["check_id"] for c in failed] == ["matrix-structure"]


def test_usage_errors_exit_two(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["payoff", "--n", "1"])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["verify", "--n-max", "3", "--trials", "1"])
    assert err.value.code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SystemExit) as err:
        main(["field", "--at", str(bad)])
    assert err.value.code == 2
    missing_field = tmp_path / "missing.json"
    missing_field.write_text(json.dumps({"probs": [1, 0, 1, 0]}))
    with pytest.raises(SystemExit) as err:
        main(["field", "--at", str(missing_field)])
    assert err.value.code == 2
    wrong_n = tmp_path / "n2.json"
    wrong_n.write_text(json.dumps({"n": 2, "probs": [0.5] * 16}))
    with pytest.raises(SystemExit) as err:
        main(["matrix", "--n", "1", "--p", str(wrong_n), "--q", str(wrong_n)])
    assert err.value.code == 2


def test_tolerance_override_env(tmp_path, monkeypatch):
    overrides = tmp_path / "tol.json"
    overrides.write_text(json.dumps({"payoff_methods": 1e-30}))
    monkeypatch.setenv("MEMN_TOLERANCES", str(overrides))
    path = tmp_path / "strict.json"
    code = main(["verify", "--trials", "3", "--out", str(path)])
    assert code == 1
    payload = json.loads(path.read_text())
    failing = {c["check_id"] for c in payload["checks"] if not c["passed"]}
    assert failing == {"payoff-methods"}
    monkeypatch.delenv("MEMN_TOLERANCES")
    baseline = json.loads((tmp_path / "strict.json").read_text())
    assert baseline["tolerance_hash"]


def test_tolerance_override_rejects_unknown_names(tmp_path, monkeypatch):
    overrides = tmp_path / "tol.json"
    overrides.write_text(json.dumps({"no_such_tolerance": 1.0}))
    monkeypatch.setenv("MEMN_TOLERANCES", str(overrides))
    with pytest.raises(KeyError):
        main(["verify", "--trials", "2"])
