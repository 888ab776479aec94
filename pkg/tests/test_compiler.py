import itertools

import numpy as np
import pytest

from ddu_dro.compiler import (
    CAP_SLACK, CompileError, FirstStageDecision, Scenario, compile_instance,
    enumerate_vertices, recourse_lp,
)
from ddu_dro.generator import generate_tiny, golden_instance, minimal_instance
from ddu_dro.instance import (
    Economics, Instance, Limits, LoadIsland, LoadNode, ResourceIsland,
    ResourceNode, TimeGrid, UncertaintyBounds, WindLevel,
)
from ddu_dro.generator import _box, _catalog, _const
from ddu_dro.kernel import EQ, GE, LE, LinearProblem, solve_lp, solve_milp
from ddu_dro.oracle import complete_first_stage, sample_first_stage


def lam_by_name(model, **overrides):
    lam = complete_first_stage(model, overrides)
    assert lam is not None
    return lam


# -- index/counting contracts -------------------------------------------------


def test_vessel_block_sizes(tiny_vessel_model):
    m = tiny_vessel_model
    T = m.instance.time.n
    n_islands = 2  # one resource, one load
    routes = [n for n in m.lam_index if n.startswith("route[")]
    # ordered pairs, no self loops, no load->load legs
    assert len(routes) == n_islands * (n_islands - 1)
    arrs = [n for n in m.lam_index if n.startswith("arr[")]
    deps = [n for n in m.lam_index if n.startswith("dep[")]
    # resource arrivals on the single trip plus the closing return
    assert len(arrs) == T + T
    assert len(deps) == n_islands * T
    mus = [n for n in m.lam_index if n.startswith("mu[")]
    assert len(mus) == n_islands * T


def test_gamma2_rows_golden():
    m = compile_instance(golden_instance())
    rows = [(r.name, r.gamma2) for r in m.moment_rows if r.gamma2]
    assert len(rows) == 2
    names = {n for n, _ in rows}
    assert names == {"E_line_ok[E2-5].lo", "E_line_ok[E11-12].lo"}
    for _, g2 in rows:
        ((lam_idx, eps),) = g2.items()
        assert m.lam_vars[lam_idx].name.startswith("harden[")
        assert eps == pytest.approx(0.3)


def test_mask_degenerates_without_generation_candidates():
    inst = minimal_instance()
    d = inst.to_dict()
    d["resource_islands"][0]["nodes"][0]["wt_mw"] = [0.0, 0.0]
    from ddu_dro.instance import instance_from_dict

    m = compile_instance(instance_from_dict(d))
    # indicator is forced to zero, so the projection is constant in the plan
    xi = np.zeros(m.n_xi)
    for name, i in m.xi_index.items():
        if name.startswith("dem_p[Rn"):
            xi[i] = 0.15
    s = Scenario(xi)
    lam0 = FirstStageDecision(np.zeros(m.n_lam))
    masked = m.mask_scenario(lam0, s)
    assert all(masked.values[i] == 0.0 for i in m.mask_map)


def test_mask_scenario_projection(tiny_model):
    m = tiny_model
    lam_on = lam_by_name(m, **{"a_wt[R1n1]": 1.0})
    lam_off = lam_by_name(m, **{"a_wt[R1n1]": 0.0})
    xi = np.zeros(m.n_xi)
    j = m.xi("dem_p[R1n1,0]")
    xi[j] = 3.0
    s = Scenario(xi)
    assert m.mask_scenario(lam_off, s).values[j] == 0.0
    assert m.mask_scenario(lam_on, s).values[j] == 3.0
    zero = Scenario(np.zeros(m.n_xi))
    assert (m.mask_scenario(lam_off, zero).values == 0).all()
    assert (m.mask_scenario(lam_on, zero).values == 0).all()


# -- dispatch construction ----------------------------------------------------


def _single_node_instance(demand, supply, shed_cap):
    """One load node, pinned PV size, fixed demand, one period."""
    T = 1
    node = LoadNode(id="D", he=True, pv_mw=(supply, supply))
    rn = ResourceNode(id="R", wt_mw=(0.0, 0.0))
    unc = UncertaintyBounds(
        pv_factor_box={"D": _box(1.0, 1.0, T)},
        load_p_box={"D": _box(demand, demand, T)},
        load_q_box={"D": _box(0.0, 0.0, T)},
        tau_up_box={}, tau_dn_box={},
        pv_factor_moment={}, load_p_moment={}, load_q_moment={},
        tau_up_moment={}, tau_dn_moment={},
        vessel_intact_moment={}, line_intact_moment={},
        hardening_moment_drop={})
    lvl = WindLevel(id="L1", wt_nominal={}, wt_up={}, wt_down={},
                    line_outage_budget=0, vessel_outage_budget=0,
                    shed_cap_p_mw={"D": _const(shed_cap, T)},
                    shed_cap_q_mvar={"D": _const(1.0, T)},
                    prob_lo=1.0, prob_hi=1.0)
    return Instance(
        time=TimeGrid(("t1",), 1.0, 1.0), catalog=_catalog(),
        resource_islands=(ResourceIsland("RI", (rn,)),),
        load_islands=(LoadIsland("DI", (node,), (), 0.95, 1.05, 1.0,
                                 -0.3, 0.5, 0),),
        vessels=(), wind_levels=(lvl,), uncertainty=unc,
        economics=Economics({"D": 4.0}, {}), limits=Limits(),
        name="single")


def test_overflow_value_hand_example():
    # demand 5, supply 4, shedding cap 0.5: one unit must be shed, half of
    # it beyond the cap
    inst = _single_node_instance(demand=5.0, supply=4.0, shed_cap=0.5)
    m = compile_instance(inst)
    lam = lam_by_name(m, **{"a_pv[D]": 1.0})
    xi = np.zeros(m.n_xi)
    xi[m.xi("lvl[L1]")] = 1.0
    xi[m.xi("pvf[D,0]")] = 1.0
    xi[m.xi("dem_p[D,0]")] = 5.0
    s = Scenario(xi)
    r = solve_lp(recourse_lp(m, lam, s, "infeasibility"))
    assert r.optimal
    assert r.objective == pytest.approx(0.5, abs=1e-7)
    # capped dispatch is infeasible at this plan/scenario
    assert solve_lp(recourse_lp(m, lam, s, "om_cost")).status == "infeasible"


def test_overflow_zero_when_caps_cover():
    inst = _single_node_instance(demand=5.0, supply=4.0, shed_cap=5.0)
    m = compile_instance(inst)
    lam = lam_by_name(m, **{"a_pv[D]": 1.0})
    xi = np.zeros(m.n_xi)
    xi[m.xi("lvl[L1]")] = 1.0
    xi[m.xi("pvf[D,0]")] = 1.0
    xi[m.xi("dem_p[D,0]")] = 5.0
    s = Scenario(xi)
    assert solve_lp(recourse_lp(m, lam, s, "infeasibility")).objective == \
        pytest.approx(0.0, abs=1e-9)
    assert solve_lp(recourse_lp(m, lam, s, "om_cost")).optimal


def test_voll_zero_without_demand():
    inst = _single_node_instance(demand=0.0, supply=4.0, shed_cap=0.5)
    m = compile_instance(inst)
    lam = lam_by_name(m, **{"a_pv[D]": 1.0})
    xi = np.zeros(m.n_xi)
    xi[m.xi("lvl[L1]")] = 1.0
    xi[m.xi("pvf[D,0]")] = 1.0
    s = Scenario(xi)
    assert solve_lp(recourse_lp(m, lam, s, "voll")).objective == \
        pytest.approx(0.0, abs=1e-9)


def test_per_node_cap_mode():
    inst = _single_node_instance(demand=5.0, supply=4.0, shed_cap=0.5)
    d = inst.to_dict()
    d["limits"]["shed_cap_mode"] = "per_node"
    from ddu_dro.instance import instance_from_dict

    m = compile_instance(instance_from_dict(d))
    names = [r.name for r in m.rec_rows if r.tag == "cap"]
    assert any("[D," in n for n in names)
    assert all("[all," not in n for n in names)


def test_compile_error_infinite_flow_cap():
    from ddu_dro.instance import Edge

    inst = generate_tiny(1)
    edges = list(inst.load_islands[0].edges)
    bad = Edge(id=edges[0].id, i=edges[0].i, j=edges[0].j, r_pu=0.01,
               x_pu=0.02, cap_fp_mw=float("inf"), cap_fq_mvar=1.0)
    isl = inst.load_islands[0]
    object.__setattr__(isl, "edges", (bad, *edges[1:]))
    with pytest.raises(CompileError, match="finite flow caps"):
        compile_instance(inst)


# -- linearization exactness suites -------------------------------------------


def _mccormick_triples(model):
    """(product var, gate binary, operand expression, bound) per product."""
    out = []
    for row in model.lam_rows:
        if not row.name.endswith(".le_y"):
            continue
        base = row.name[:-5]
        w_idx = model.lam_index[base]
        ((y_idx, neg_bound),) = [(j, c) for j, c in row.coefs.items()
                                 if j != w_idx]
        le_x = next(r for r in model.lam_rows if r.name == f"{base}.le_x")
        expr = {j: -c for j, c in le_x.coefs.items() if j != w_idx}
        out.append((w_idx, y_idx, expr, -neg_bound))
    return out


def check_binary_products(m):
    triples = _mccormick_triples(m)
    assert triples, "no route-event products compiled"
    for w_idx, y_idx, expr, bound in triples:
        base = m.lam_vars[w_idx].name
        rows = {r.name.rsplit(".", 1)[1]: r for r in m.lam_rows
                if r.name.startswith(base + ".")}
        assert set(rows) == {"le_y", "le_x", "ge"}
        # verify the three-row shape, then the implied interval for w
        assert rows["le_y"].coefs == {w_idx: 1.0, y_idx: -bound}
        assert rows["ge"].coefs.get(y_idx) == -bound
        assert rows["ge"].rhs == -bound
        for y in (0.0, 1.0):
            for x in np.linspace(0.0, bound, 7):
                lo_w = max(0.0, x - bound * (1.0 - y))
                hi_w = min(bound * y, x)
                assert lo_w == pytest.approx(y * x, abs=1e-12)
                assert hi_w == pytest.approx(y * x, abs=1e-12)


def test_binary_product_linearization_exhaustive(tiny_vessel_model):
    """The three-row product form pins w to exactly y*X for every gate value
    and every operand value within its range."""
    check_binary_products(tiny_vessel_model)


def test_schedule_products_hold_on_solutions(tiny_vessel_model, rng):
    """On feasible first stages, every compiled product equals its factors'
    product."""
    m = tiny_vessel_model
    triples = _mccormick_triples(m)
    for trial in range(6):
        prob = LinearProblem("lam")
        for v in m.lam_vars:
            prob.add_var(v.name, lb=v.lb, ub=v.ub,
                         integer=(v.kind == "binary"))
        for j, v in enumerate(m.lam_vars):
            if v.kind == "binary":
                prob.set_obj(j, float(rng.normal()))
        for r in m.lam_rows:
            prob.add_row(r.name, r.coefs, r.sense, r.rhs)
        res = solve_milp(prob)
        assert res.optimal
        x = res.x
        for w_idx, y_idx, expr, _ in triples:
            operand = sum(c * x[j] for j, c in expr.items())
            assert x[w_idx] == pytest.approx(x[y_idx] * operand, abs=1e-6)


def check_switched_equality(m, rng):
    pairs = [(r, next(q for q in m.rec_rows
                      if q.name == r.name.replace("_hi[", "_lo[")))
             for r in m.rec_rows if r.name.startswith("volt_drop_hi[")]
    assert pairs
    inst = m.instance
    isl = inst.load_islands[0]
    edge = next(e for e in isl.edges if e.hardenable)
    lam0 = np.zeros(m.n_lam)

    def row_ok(row, omega, ui, uj, fp, fq):
        vals = {}
        for j in row.a:
            nm = m.zeta_vars[j].name
            if nm.startswith("volt"):
                vals[j] = ui if f"[{edge.i}," in nm else uj
            elif nm.startswith("fp"):
                vals[j] = fp
            else:
                vals[j] = fq
        lhs = sum(c * vals[j] for j, c in row.a.items())
        xi = np.zeros(m.n_xi)
        xi[next(iter(row.xi))] = omega
        return lhs <= row.rhs_value(lam0, xi) + 1e-9

    for hi, lo in pairs:
        for _ in range(25):
            fp = rng.uniform(-edge.cap_fp_mw, edge.cap_fp_mw)
            fq = rng.uniform(-edge.cap_fq_mvar, edge.cap_fq_mvar)
            ui = rng.uniform(isl.u_lo, isl.u_hi)
            uj_eq = ui - (edge.r_pu * fp + edge.x_pu * fq) / isl.u_ref
            uj_off = uj_eq + 0.05
            # intact: the pair holds exactly on the equality manifold
            assert row_ok(hi, 1.0, ui, uj_eq, fp, fq)
            assert row_ok(lo, 1.0, ui, uj_eq, fp, fq)
            assert not (row_ok(hi, 1.0, ui, uj_off, fp, fq)
                        and row_ok(lo, 1.0, ui, uj_off, fp, fq))
            # severed: vacuous for any in-cap flow and any voltages
            for uj in (uj_eq, uj_off, isl.u_lo, isl.u_hi):
                assert row_ok(hi, 0.0, ui, uj, fp, fq)
                assert row_ok(lo, 0.0, ui, uj, fp, fq)


def test_switched_equality_exactness(tiny_model, rng):
    """Big-M voltage rows: exact equality when the line is intact, vacuous
    for any in-cap flow when severed."""
    check_switched_equality(tiny_model, rng)


def check_indicator_rows(m):
    rows = [r for r in m.lam_rows if r.name.startswith("sited_")]
    gens = sorted({j for r in rows for j in r.coefs
                   if m.lam_vars[j].name.startswith("a_")})
    iota = next(j for r in rows for j in r.coefs
                if m.lam_vars[j].name.startswith("sited["))
    for bits in itertools.product((0.0, 1.0), repeat=len(gens)):
        feasible_iota = []
        for iv in (0.0, 1.0):
            vals = dict(zip(gens, bits))
            vals[iota] = iv
            ok = True
            for r in rows:
                lhs = sum(c * vals.get(j, 0.0) for j, c in r.coefs.items())
                if r.sense == LE and lhs > r.rhs + 1e-9:
                    ok = False
                if r.sense == GE and lhs < r.rhs - 1e-9:
                    ok = False
            if ok:
                feasible_iota.append(iv)
        assert feasible_iota == [float(any(b > 0 for b in bits))]


def test_indicator_rows_exact(tiny_model):
    check_indicator_rows(tiny_model)


def check_wind_products(m, vertices):
    inst = m.instance
    j = inst.wt_nodes()[0]
    for s in vertices:
        for t in range(inst.time.n):
            from_products = 0.0
            direct = 0.0
            for w in inst.wind_levels:
                lvl = s.values[m.xi(f"lvl[{w.id}]")]
                zup = s.values[m.xi(f"zup[{w.id},{j},{t}]")]
                zdn = s.values[m.xi(f"zdn[{w.id},{j},{t}]")]
                tau_up = s.values[m.xi(f"tau_up[{j},{t}]")]
                tau_dn = s.values[m.xi(f"tau_dn[{j},{t}]")]
                from_products += (w.wt_nominal[j][t] * lvl
                                  + w.wt_up[j][t] * zup
                                  - w.wt_down[j][t] * zdn)
                direct += lvl * (w.wt_nominal[j][t]
                                 + w.wt_up[j][t] * tau_up
                                 - w.wt_down[j][t] * tau_dn)
            assert from_products == pytest.approx(direct, abs=1e-12)


def test_wind_product_rows_exact_on_vertices(tiny_model, tiny_vertices):
    """At every extreme point the availability implied by the product
    components equals the two-factor formula exactly."""
    check_wind_products(tiny_model, tiny_vertices)


def test_neutralization_equivalence(tiny_model, tiny_vertices, rng):
    """Plugging a mask-consistent scenario into the literal dispatch model
    equals dispatching the projected scenario, for every plan."""
    m = tiny_model
    for _ in range(3):
        lam = sample_first_stage(m, rng, tiny_vertices)
        for s in tiny_vertices[:20]:
            projected = m.mask_scenario(lam, s)
            a = solve_lp(recourse_lp(m, lam, s, "voll", apply_mask=True))
            b = solve_lp(recourse_lp(m, lam, projected, "voll",
                                     apply_mask=False))
            assert a.status == b.status
            if a.optimal:
                assert a.objective == pytest.approx(b.objective, abs=1e-7)
