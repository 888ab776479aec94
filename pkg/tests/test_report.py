import json

from ddu_dro.ccg import RunReport, Settings, run_ccg_dro
from ddu_dro.compiler import compile_instance
from ddu_dro.generator import generate_tiny
from ddu_dro.report import (
    render_csv_table, render_level_breakdown_csv, render_markdown_table,
    render_report_markdown,
)
from ddu_dro.wcev import CgLog


def test_cg_log_csv_format():
    log = CgLog()
    log.add(1, 10.0, 2.5, "L1#abc", 12.34)
    log.add(2, 11.0, 0.0, "L2#def", 5.0)
    lines = log.to_csv().splitlines()
    assert lines[0] == "iter,pmp_value,reduced_cost,scenario_id,ms"
    assert lines[1] == "1,10,2.5,L1#abc,12.34"


def test_table_columns_and_failure_rows(tiny_grid_model):
    rep = run_ccg_dro(tiny_grid_model, Settings(gap=1e-4, max_iters=50),
                      post_eval=True)
    md = render_markdown_table([("5 / 0.5", "ccg-dro", rep),
                                ("5 / 0.7", "basic-ccg", "infeasible")])
    header = md.splitlines()[0]
    for col in ("LB", "UB", "Gap", "Iter.", "Scen.", "Time (s)"):
        assert col in header
    assert "infeasible" in md
    csv = render_csv_table([("5 / 0.5", "ccg-dro", rep)])
    assert csv.splitlines()[0].startswith("system,algorithm,lb,ub,gap")
    level_csv = render_level_breakdown_csv(rep.per_level)
    assert level_csv.splitlines()[0] == "level,probability,expected_voll_kusd"
    page = render_report_markdown(rep, "tiny")
    assert "Worst-case lost load by wind level" in page
    doc = json.loads(rep.to_json())
    assert doc["status"] == "optimal"


def test_model_debug_dump(tiny_model):
    dump = tiny_model.dump_triplets()
    assert "# first-stage rows" in dump
    assert "# moment rows" in dump
    assert "# rows" in dump  # dispatch triplet manifest


def test_iteration_limit_exit_code(tmp_path):
    from ddu_dro.cli import main
    from ddu_dro.instance import save_instance

    p = tmp_path / "tiny.json"
    save_instance(generate_tiny(1, hardenable=True, plan_grid=True), p)
    assert main(["plan", str(p), "--max-iters", "1",
                 "--out", str(tmp_path / "o")]) == 3
    assert (tmp_path / "o" / "report.json").exists()
