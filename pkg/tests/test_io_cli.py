import csv
import io as stdio
import json

import numpy as np
import pytest

from mdpsense import FiniteMdm, TransitionFunction, bellman
from mdpsense import io
from mdpsense.cli import main
from mdpsense.inventory import builtin_spec
from mdpsense.random_models import random_direction, random_mdm


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_model_round_trip_random(rng):
    for _ in range(10):
        mdm = random_mdm(rng, 3, 4, 3, sparsity=0.3, sense=str(rng.choice(["max", "min"])))
        text = io.dumps(io.model_to_dict(mdm))
        back = io.model_from_dict(json.loads(text))
        assert back == mdm
        assert io.dumps(io.model_to_dict(back)) == text


def test_round_trip_with_tuple_and_string_labels():
    rows = {(0, 0, "up"): [0.25, 0.75], (0, 1, (1, 2)): [1.0, 0.0]}
    mdm = FiniteMdm(1, ((0, "a"), 2.5), ((("up",), ((1, 2),)),), TransitionFunction(rows),
                    {(0, 0, "up"): 1.0, (0, 1, (1, 2)): -1.0}, [0.0, 3.0], "min")
    doc = io.model_to_dict(mdm)
    assert "0/0,a/up" in doc["transitions"] and "0/2.5/1,2" in doc["transitions"]
    assert io.model_from_dict(json.loads(json.dumps(doc))) == mdm


def test_unknown_keys_rejected(rng):
    doc = io.model_to_dict(random_mdm(rng, 1, 2, 2))
    doc["comment"] = "x"
    with pytest.raises(io.ParseError):
        io.model_from_dict(doc)
    with pytest.raises(io.ParseError):
        io.measure_from_dict({"points": [1.0], "weights": [1.0]})
    with pytest.raises(io.ParseError):
        io.direction_from_dict({"kind": "inventory-demand", "j": 0, "extra": 1})


def test_unknown_row_keys_become_validation_issues(rng):
    doc = io.model_to_dict(random_mdm(rng, 1, 2, 1))
    doc["transitions"]["0/7/0"] = [1.0, 0.0]
    doc["stage_rewards"]["0/1/9"] = 0.0
    kinds = sorted(i.kind for i in io.model_from_dict(doc).report)
    assert kinds == ["admissibility", "index"]


def test_display_rounding_is_half_up():
    assert io.rounded([16.53125, -34.09375, 0.5]) == [16.5313, -34.0938, 0.5]
    assert io.numeric_fields("v", 1 / 3) == {"v": 0.3333, "v_full": 1 / 3}


def test_validate_command(tmp_path, capsys, rng):
    good = write(tmp_path / "m.json", io.model_to_dict(random_mdm(rng, 2, 2, 2)))
    code, out, _ = run(capsys, "validate", good)
    assert code == 0 and json.loads(out)["valid"]
    doc = io.model_to_dict(random_mdm(rng, 2, 2, 2))
    doc["transitions"][next(iter(doc["transitions"]))] = [0.9, 0.0]
    code, out, _ = run(capsys, "validate", write(tmp_path / "bad.json", doc))
    assert code == 1 and json.loads(out)["issues"][0]["kind"] == "row_sum"
    code, _, err = run(capsys, "solve", tmp_path / "bad.json")
    assert code == 1 and json.loads(err)["error"] == "validation"


def test_io_errors_exit_3(tmp_path, capsys):
    code, _, err = run(capsys, "solve", tmp_path / "missing.json")
    assert code == 3 and json.loads(err)["error"] == "io"
    (tmp_path / "broken.json").write_text("{")
    assert run(capsys, "solve", tmp_path / "broken.json")[0] == 3
    assert run(capsys, "solve", "--no-such-flag")[0] == 3
    assert run(capsys, "nonsense")[0] == 3


def test_cap_exit_2(tmp_path, capsys, monkeypatch):
    d = write(tmp_path / "d.json", {"kind": "inventory-demand", "j": 0})
    code, _, err = run(capsys, "sense", "--builtin-paper", d, "--no-prefilter")
    assert code == 2 and json.loads(err)["error"] == "cap_exceeded"
    monkeypatch.setenv("MDPSENSE_ENUM_CAP", "0")
    assert run(capsys, "sense", "--builtin-paper", d)[0] == 2


def test_solve_eval_sense_fd(tmp_path, capsys, rng):
    mdm = random_mdm(rng, 2, 3, 2, integer_rewards=True)
    m = write(tmp_path / "m.json", io.model_to_dict(mdm))
    code, out, _ = run(capsys, "solve", m)
    doc = json.loads(out)
    V, _ = bellman(mdm)
    assert code == 0 and doc["values_full"] == V.tolist()
    assert doc["n_optimal_strategies"] == len(doc["optimal_strategies"]) >= 1

    s = write(tmp_path / "s.json", {"rules": doc["optimal_strategies"][0]})
    code, out, _ = run(capsys, "eval", m, s)
    assert np.allclose(json.loads(out)["values_full"][0], V[0])

    Q = random_direction(rng, mdm)
    qdoc = {"transitions": {io.row_key(n, mdm.states[i], a): Q[(n, i, a)].tolist() for (n, i, a) in Q}}
    q = write(tmp_path / "q.json", qdoc)
    code, out, _ = run(capsys, "sense", m, q, "--breakdown")
    sense = json.loads(out)
    assert code == 0 and len(sense["derivative_full"]) == 3 and sense["breakdown"]

    code, out, _ = run(capsys, "fd", m, q, "--eps-grid", "1e-3,1e-6", "--x0", "1")
    rows = list(csv.DictReader(stdio.StringIO(out)))
    assert [r["eps"] for r in rows] == ["0.001", "1e-06"]
    assert float(rows[1]["quotient"]) == pytest.approx(sense["derivative_full"][1], abs=1e-4)


def test_fd_with_base_direction_gives_zero_columns(tmp_path, capsys, rng):
    doc = io.model_to_dict(random_mdm(rng, 2, 3, 2))
    m = write(tmp_path / "m.json", doc)
    q = write(tmp_path / "q.json", {"transitions": doc["transitions"]})
    code, out, _ = run(capsys, "fd", m, q)
    rows = list(csv.DictReader(stdio.StringIO(out)))
    assert code == 0 and len(rows) == 15
    assert all(float(r["quotient"]) == 0.0 and float(r["error"]) == 0.0 for r in rows)


def test_metric_command(tmp_path, capsys):
    a = write(tmp_path / "a.json", {"points": [0, 1, 2], "masses": [0.2, 0.3, 0.5]})
    b = write(tmp_path / "b.json", {"points": [0.5, 2]})
    code, out, _ = run(capsys, "metric", a, b, "--metric", "wass1")
    assert code == 0 and json.loads(out)["value_full"] == pytest.approx(0.25)
    code, out, _ = run(capsys, "metric", a, b, "--metric", "hoelder", "--alpha", "1")
    assert json.loads(out)["value_full"] == pytest.approx(0.25, abs=1e-12)


def test_inventory_command(tmp_path, capsys):
    code, out, _ = run(capsys, "inventory", "--builtin-paper", "--csv-dir", tmp_path)
    doc = json.loads(out)
    assert code == 0
    assert doc["V0"] == [16.5313, 18.5313, 23.125, 26.1094, 28.5313]
    assert doc["V0_full"] == [16.53125, 18.53125, 23.125, 26.109375, 28.53125]
    assert doc["derivative_q4"] == [16.0313, 16.0313, 14.0, 15.6094, 16.0313]
    assert doc["n_optimal_strategies"] == 1
    assert (tmp_path / "values.csv").read_text().splitlines()[0] == "y0,V0,derivative_q0,derivative_q4"
    assert len((tmp_path / "strategy.csv").read_text().splitlines()) == 1 + 3 * 25
    spec = write(tmp_path / "spec.json", io.inventory_spec_to_dict(builtin_spec()))
    code, out2, _ = run(capsys, "inventory", spec)
    assert json.loads(out2)["V0_full"] == doc["V0_full"]


def test_sense_on_builtin_inventory(tmp_path, capsys):
    d = write(tmp_path / "d.json", {"kind": "inventory-demand", "j": 0})
    code, out, _ = run(capsys, "sense", "--builtin-paper", d)
    doc = json.loads(out)
    starts = [0, 5, 10, 15, 20]
    assert [doc["derivative"][i] for i in starts] == [-34.0938, -34.0938, -39.8125, -37.3906, -34.0938]


def test_finance_command_and_sweep(tmp_path, capsys):
    code, out, _ = run(capsys, "finance", "--builtin-bsm", "--nu", "0.01", "--delta", "0.5", "--periods", "3")
    doc = json.loads(out)
    assert code == 0 and doc["gamma"] == [1.0] * 12 and doc["derivative_full"] < 0
    assert doc["quantile_lower"][2] == 0.8088
    code, out, _ = run(capsys, "finance", "--builtin-crr")
    assert code == 0 and 0 < json.loads(out)["gamma_full"][0] < 1
    sweep = write(tmp_path / "sw.json", {"alpha": [0.25, 0.5], "nu": [0.01], "delta": [0.5],
                                         "mode": "tau", "values": [0, 11]})
    code, out, _ = run(capsys, "finance", "--builtin-bsm", "--sweep", sweep)
    rows = list(csv.reader(stdio.StringIO(out)))
    assert rows[0] == ["alpha", "nu", "delta", "tau_or_ell", "N", "derivative"] and len(rows) == 5
    assert run(capsys, "finance", "--builtin-bsm", "--builtin-crr")[0] == 3
    bad = write(tmp_path / "bad.json", {"alpha": [0.5], "nu": [0.01], "delta": [0.5], "values": [0], "x": 1})
    assert run(capsys, "finance", "--builtin-bsm", "--sweep", bad)[0] == 1


def test_finance_spec_file_and_direction(tmp_path, capsys):
    spec = write(tmp_path / "f.json", {"kind": "crr", "p": 0.6, "u": 1.5, "d": 0.5, "r": 1.0,
                                       "alpha": 0.5, "N": 3})
    d = write(tmp_path / "d.json", {"kind": "finance-jump", "delta": 0.7, "periods": [0, 2]})
    code, out, _ = run(capsys, "finance", spec, "--direction", d)
    assert code == 0 and json.loads(out)["horizon"] == 3


def test_output_is_deterministic(tmp_path, capsys):
    d = write(tmp_path / "d.json", {"kind": "inventory-demand", "j": 4})
    first = run(capsys, "sense", "--builtin-paper", d)[1]
    assert run(capsys, "sense", "--builtin-paper", d)[1] == first
