import csv
import json
import math

import pytest

from supersim.cli import main


def test_predict_json(capsys):
    assert main(["predict", "--n", "100000", "--lambda", "0.7", "--d", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["m_d"] == 3
    assert out["predicted_mode"] == 5
    assert out["predicted_tails"][1] == pytest.approx(0.7)


def test_predict_csv_format(capsys):
    assert main(["predict", "--n", "100", "--lambda", "0.5", "--d", "1",
                 "--format", "csv"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["quantity", "value"]
    assert any(r[0] == "predicted_mode" for r in rows)


def test_simulate_csv_shape(capsys):
    assert main(["simulate", "--n", "20", "--lambda", "0.5", "--d", "2",
                 "--samples", "8", "--interval", "1", "--seed", "5"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    header, data = rows[0], rows[1:]
    assert header[:3] == ["t", "total", "max"]
    assert header[3] == "ell_0"
    assert len(data) == 8
    for row in data:
        ell = [int(v) for v in row[3:]]
        assert ell[0] == 20  # ell_0 is always n
        assert int(row[1]) == sum(ell[1:])
        assert int(row[2]) == max((k for k, c in enumerate(ell) if c > 0),
                                  default=0)


def test_simulate_json_summary(capsys):
    assert main(["simulate", "--n", "10", "--lambda", "0.5", "--d", "2",
                 "--samples", "50", "--interval", "1", "--seed", "3",
                 "--format", "json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["params"]["n"] == 10
    assert out["plan"]["count"] == 50
    assert out["u"][0] == pytest.approx(1.0)
    assert len(out["u"]) == len(out["se"])
    assert sum(out["max_hist"].values()) == 50


def test_seed_env_fallback(capsys, monkeypatch):
    monkeypatch.setenv("SUPERSIM_SEED", "1234")
    main(["simulate", "--n", "10", "--lambda", "0.5", "--d", "2",
          "--samples", "5", "--interval", "1"])
    first = capsys.readouterr().out
    main(["simulate", "--n", "10", "--lambda", "0.5", "--d", "2",
          "--samples", "5", "--interval", "1"])
    assert capsys.readouterr().out == first
    # explicit flag beats environment
    main(["simulate", "--n", "10", "--lambda", "0.5", "--d", "2",
          "--samples", "5", "--interval", "1", "--seed", "9"])
    assert capsys.readouterr().out != first


def test_out_writes_file(tmp_path):
    path = tmp_path / "snaps.csv"
    assert main(["simulate", "--n", "10", "--lambda", "0.5", "--d", "2",
                 "--samples", "4", "--interval", "1", "--seed", "2",
                 "--out", str(path)]) == 0
    rows = list(csv.reader(path.read_text().splitlines()))
    assert len(rows) == 5


def test_couple_one_column_csv(capsys):
    assert main(["couple", "--n", "15", "--lambda", "0.5", "--d", "2",
                 "--samples", "6", "--seed", "11"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "coalescence_time"
    assert len(rows) == 7
    for r in rows[1:]:
        assert r == "nan" or float(r) >= 0.0


def test_mix_csv_columns(capsys):
    assert main(["mix", "--n", "20", "--lambda", "0.5", "--d", "2",
                 "--samples", "120", "--horizon", "2", "--interval", "1",
                 "--warmup", "0", "--seed", "4"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["t", "pr_neq", "se_neq", "deficit", "se_deficit",
                       "bound_lower"]
    assert len(rows) == 4
    assert float(rows[1][3]) == pytest.approx(0.5)  # deficit at t=0 is lam


def test_meanfield_trajectory_and_fixed_point(capsys):
    assert main(["meanfield", "--lambda", "0.5", "--d", "2", "--K", "6",
                 "--horizon", "5", "--samples", "10"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["t", "v1", "v2", "v3", "v4", "v5", "v6"]
    assert float(rows[1][1]) == 0.0
    assert float(rows[-1][0]) == pytest.approx(5.0)

    assert main(["meanfield", "--lambda", "0.5", "--d", "2", "--K", "6",
                 "--fixed-point"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["v"][0] == pytest.approx(0.5)
    assert out["residual"] < 1e-12


def test_oracle_stationary_csv(capsys):
    assert main(["oracle", "--n", "2", "--lambda", "0.5", "--d", "2",
                 "--cap", "3"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["state_index", "x1", "x2", "prob"]
    assert len(rows) == 17
    total = sum(float(r[-1]) for r in rows[1:])
    assert total == pytest.approx(1.0, abs=1e-9)


def test_oracle_transient_json(capsys):
    assert main(["oracle", "--n", "2", "--lambda", "0.5", "--d", "2",
                 "--cap", "3", "--transient-t", "1.5", "--format",
                 "json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kind"] == "transient"
    assert sum(out["prob"]) == pytest.approx(1.0, abs=1e-9)


def test_verify_single_check_verdict(capsys):
    rc = main(["verify", "--check", "chernoff"])
    captured = capsys.readouterr()
    assert rc == 0
    verdicts = json.loads(captured.out)
    assert len(verdicts) == 1
    assert set(verdicts[0]) == {"check", "passed", "observed", "expected",
                                "tolerance"}
    assert verdicts[0]["check"] == "chernoff"
    assert verdicts[0]["passed"] is True
    assert "[PASS] chernoff" in captured.err


def test_verify_rejects_unknown_check():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--check", "not-a-check"])
    assert exc.value.code != 0
