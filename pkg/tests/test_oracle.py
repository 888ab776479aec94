import numpy as np
import pytest

from ddu_dro.compiler import (
    FirstStageDecision, Scenario, VertexCapExceeded, compile_instance,
    enumerate_vertices, predict_vertex_count,
)
from ddu_dro.generator import generate_tiny
from ddu_dro.oracle import (
    enumerate_lambda_grid, oracle_plan, oracle_wcev, recourse_value,
    sample_first_stage,
)
from ddu_dro.wcev import solve_wcev


def test_vertex_count_level_budget_pattern():
    # two levels over one hardenable line with budgets (0, 1):
    # level 1 contributes the intact pattern, level 2 adds the outage
    inst = generate_tiny(1, hardenable=True, periods=2, levels=2,
                         free_load_boxes=0)
    m = compile_instance(inst)
    assert predict_vertex_count(m) == 3
    verts = enumerate_vertices(m)
    assert len(verts) == 3
    assert len({v.key() for v in verts}) == 3


def test_vertex_count_box_corners():
    # one level, no disruptions, a single open demand box: its two corners
    inst = generate_tiny(1, hardenable=False, periods=1, levels=1,
                         free_load_boxes=1)
    m = compile_instance(inst)
    assert predict_vertex_count(m) == 2
    assert len(enumerate_vertices(m)) == 2


def test_zero_budgets_mean_everything_intact(tiny_model, tiny_vertices):
    m = tiny_model
    calm = [w.id for w in m.instance.wind_levels
            if w.line_outage_budget == 0]
    for s in tiny_vertices:
        level = next(name[4:-1] for name, i in m.xi_index.items()
                     if name.startswith("lvl[") and s.values[i] > 0.5)
        if level in calm:
            for name, i in m.xi_index.items():
                if name.startswith(("line_ok", "ves_ok")):
                    assert s.values[i] == 1.0


def test_vertex_cap_enforced(tiny_model):
    with pytest.raises(VertexCapExceeded):
        enumerate_vertices(tiny_model, cap=1)


def test_single_vertex_value(minimal_model, rng):
    # degenerate ambiguity (one level, probability pinned to 1) reduces the
    # worst case to the single extreme point's dispatch value
    m = minimal_model
    verts = enumerate_vertices(m)
    assert len(verts) == 1
    lam = sample_first_stage(m, rng, verts)
    res = oracle_wcev(m, lam, "voll", verts)
    assert res.value == pytest.approx(
        recourse_value(m, lam, verts[0], "voll"), abs=1e-7)


def test_interior_points_never_increase_value(tiny_model, tiny_vertices,
                                              rng):
    """Worst-case mass never needs the interior: appending random interior
    mixtures cannot raise the oracle value."""
    m = tiny_model
    lam = sample_first_stage(m, rng, tiny_vertices)
    base = oracle_wcev(m, lam, "voll", tiny_vertices)
    interior = []
    for _ in range(50):
        a, b = rng.integers(0, len(tiny_vertices), size=2)
        t = rng.uniform(0.2, 0.8)
        mix = (t * tiny_vertices[a].values
               + (1 - t) * tiny_vertices[b].values)
        interior.append(Scenario(mix))
    widened = oracle_wcev(m, lam, "voll", tiny_vertices + interior)
    assert widened.value <= base.value + 1e-6 * max(1, abs(base.value))


def test_oracle_matches_engine_all_modes(tiny_model, tiny_vertices, rng):
    m = tiny_model
    lam = sample_first_stage(m, rng, tiny_vertices)
    for mode in ("infeasibility", "voll"):
        o = oracle_wcev(m, lam, mode, tiny_vertices)
        w = solve_wcev(m, lam, mode)
        assert abs(o.value - w.value) <= 1e-5 * max(1, abs(o.value))


def test_lambda_grid_and_plan(tiny_grid_model):
    m = tiny_grid_model
    grid = enumerate_lambda_grid(m)
    assert grid, "grid must contain completions"
    for lam in grid:
        ok, why = m.first_stage_feasible(lam)
        assert ok, why
    best, value = oracle_plan(m, grid)
    assert np.isfinite(value)
    feas = oracle_wcev(m, best, "infeasibility")
    assert feas.value <= 1e-6


def test_oracle_plan_infeasible_grid(tiny_grid_model):
    from ddu_dro.oracle import OracleError

    m = tiny_grid_model
    # restrict to the empty build, which cannot satisfy calm-level caps
    empty = [lam for lam in enumerate_lambda_grid(m)
             if m.investment_cost(lam) == 0.0]
    with pytest.raises(OracleError, match="feasibility"):
        oracle_plan(m, empty)
