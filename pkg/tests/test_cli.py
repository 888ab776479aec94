import json
from pathlib import Path

import pytest

from ddu_dro.cli import main
from ddu_dro.generator import generate_tiny, minimal_instance
from ddu_dro.instance import instance_to_json, save_instance


@pytest.fixture(scope="module")
def tiny_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "tiny.json"
    save_instance(generate_tiny(1, hardenable=True, plan_grid=True), p)
    return p


def test_generate_and_plan_roundtrip(tmp_path, tiny_path):
    out = tmp_path / "run"
    code = main(["plan", str(tiny_path), "--algorithm", "ccg-dro",
                 "--gap", "1e-4", "--out", str(out)])
    assert code == 0
    for f in ("report.json", "report.md", "cg_log.csv", "plan.json"):
        assert (out / f).exists(), f
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "optimal"
    assert rep["gap"] <= 1e-4 + 1e-9


def test_cross_algorithm_value(tmp_path, tiny_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert main(["plan", str(tiny_path), "--algorithm", "ccg-dro",
                 "--out", str(out1)]) == 0
    assert main(["plan", str(tiny_path), "--algorithm", "basic-ccg",
                 "--out", str(out2)]) == 0
    a = json.loads((out1 / "report.json").read_text())
    b = json.loads((out2 / "report.json").read_text())
    assert abs(a["upper_bound"] - b["upper_bound"]) <= \
        2e-4 * max(1, abs(a["upper_bound"]))


def test_evaluate_plan(tmp_path, tiny_path):
    out = tmp_path / "run"
    assert main(["plan", str(tiny_path), "--out", str(out)]) == 0
    code = main(["evaluate", str(tiny_path), str(out / "plan.json"),
                 "--out", str(out)])
    assert code == 0
    rows = (out / "voll_by_level.csv").read_text().splitlines()
    assert rows[0] == "level,probability,expected_voll_kusd"
    total = rows[-1].split(",")
    assert total[0] == "total"
    assert float(total[1]) == pytest.approx(1.0, abs=1e-6)


def test_plan_instance_mismatch_exit_code(tmp_path, tiny_path):
    out = tmp_path / "run"
    assert main(["plan", str(tiny_path), "--out", str(out)]) == 0
    other = tmp_path / "other.json"
    save_instance(generate_tiny(9, vessel=True), other)
    assert main(["evaluate", str(other), str(out / "plan.json"),
                 "--out", str(out)]) == 1


def test_empty_ambiguity_exit_code(tmp_path, capsys):
    d = minimal_instance().to_dict()
    d["wind_levels"] = [dict(d["wind_levels"][0]) for _ in range(2)]
    d["wind_levels"][1]["id"] = "L2"
    for lv in d["wind_levels"]:
        lv["prob_bounds"] = [0.6, 0.8]
    p = tmp_path / "empty-ambiguity.json"
    p.write_text(json.dumps(d))
    assert main(["plan", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "ambiguity set empty" in capsys.readouterr().err


def test_malformed_input_exit_code(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{broken")
    assert main(["plan", str(p), "--out", str(tmp_path / "o")]) == 1


def test_generate_kinds(tmp_path):
    for kind in ("tiny", "minimal", "golden"):
        f = tmp_path / f"{kind}.json"
        assert main(["generate", kind, str(f)]) == 0
        assert f.exists()
    f = tmp_path / "bench.json"
    assert main(["generate", "benchmark", str(f), "--buses", "5",
                 "--load-level", "0.5", "--seed", "42"]) == 0
    assert f.exists()


def test_oracle_check_command(tmp_path, tiny_path):
    assert main(["oracle-check", str(tiny_path), "--seed", "3",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "oracle_check.json").read_text())
    assert all(doc[mode]["agree"] for mode in doc)
