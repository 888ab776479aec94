"""Brute-force ground truth for desk-scale instances.

Enumerates every extreme point of the uncertainty polytope (level one-hots
x budget-feasible outage patterns x box corners of the free continuous
components), solves the dispatch LP at each, and maximizes the expectation
by a single distribution LP over the full vertex support. Valid because the
dispatch value is convex in the uncertainty vector, so worst-case mass never
needs interior points.

Also provides exhaustive first-stage search over a declared binary grid,
which is the cross-check target for the decomposition algorithm.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .compiler import (
    DEFAULT_VERTEX_CAP, CompactModel, FirstStageDecision, Scenario,
    VertexCapExceeded, enumerate_vertices, predict_vertex_count,
    recourse_lp,
)
from .kernel import EQ, INF, LE, LinearProblem, solve_lp, solve_milp
from .wcev import FEAS_TOL, AmbiguityEmptyError

class OracleError(RuntimeError):
    pass


@dataclass
class OracleResult:
    value: float
    scenarios: list[Scenario] | None
    probabilities: np.ndarray | None


def _distribution_lp(model: CompactModel, lam: FirstStageDecision,
                     scenarios: list[Scenario], objective: np.ndarray,
                     backend=None):
    prob = LinearProblem("oracle_dist", maximize=True)
    for j in range(len(scenarios)):
        prob.add_var(f"p[{j}]", lb=0.0, ub=INF, obj=float(objective[j]))
    prob.add_row("one_prob", {j: 1.0 for j in range(len(scenarios))},
                 EQ, 1.0)
    psi = model.psi_matrix(scenarios)
    bound = model.moment_bounds_at(lam)
    for r, mrow in enumerate(model.moment_rows):
        prob.add_row(mrow.name,
                     {j: psi[r, j] for j in range(len(scenarios))
                      if psi[r, j] != 0.0},
                     LE, float(bound[r]))
    return solve_lp(prob, backend=backend)


def recourse_value(model: CompactModel, lam: FirstStageDecision,
                   scen: Scenario, mode: str, backend=None) -> float | None:
    """Dispatch value, or None when the LP is infeasible."""
    res = solve_lp(recourse_lp(model, lam, scen, mode), backend=backend)
    if res.status == "infeasible":
        return None
    if not res.optimal:
        raise OracleError(f"dispatch LP: {res.status}")
    return float(res.objective)


def relaxed_recourse_complete(model: CompactModel, lam: FirstStageDecision,
                              vertices: list[Scenario],
                              backend=None) -> bool:
    """True when the relaxed dispatch set is nonempty at every vertex."""
    return all(recourse_value(model, lam, s, "infeasibility",
                              backend=backend) is not None
               for s in vertices)


def oracle_wcev(model: CompactModel, lam: FirstStageDecision,
                objective_mode: str = "om_cost",
                vertices: list[Scenario] | None = None,
                cap: int = DEFAULT_VERTEX_CAP,
                backend=None) -> OracleResult:
    """Exact worst-case expectation by full vertex enumeration.

    Cost mode returns +inf when some admissible distribution can place mass
    on a vertex whose capped dispatch is infeasible (equivalently, the
    feasibility measure is positive).
    """
    verts = vertices if vertices is not None else enumerate_vertices(
        model, cap)
    if objective_mode == "om_cost":
        qs = []
        bad = []
        for s in verts:
            v = recourse_value(model, lam, s, "om_cost", backend=backend)
            qs.append(v)
            bad.append(v is None)
        if any(bad):
            mass = np.array([1.0 if b else 0.0 for b in bad])
            res = _distribution_lp(model, lam, verts, mass, backend=backend)
            if res.status == "infeasible":
                raise AmbiguityEmptyError("oracle: moment system infeasible")
            if res.objective > FEAS_TOL:
                return OracleResult(INF, None, None)
            good = [i for i, b in enumerate(bad) if not b]
            sub = [verts[i] for i in good]
            obj = np.array([qs[i] for i in good])
            res = _distribution_lp(model, lam, sub, obj, backend=backend)
            if res.status == "infeasible":
                raise AmbiguityEmptyError(
                    "oracle: distribution cannot avoid infeasible vertices")
            return OracleResult(float(res.objective), sub,
                                np.maximum(res.x, 0.0))
        objv = np.array(qs, dtype=float)
    else:
        qs = []
        for s in verts:
            v = recourse_value(model, lam, s, objective_mode,
                               backend=backend)
            if v is None:
                raise OracleError(
                    "relaxed dispatch infeasible at an enumerated vertex; "
                    "this plan commits operations no dispatch can satisfy")
            qs.append(v)
        objv = np.array(qs, dtype=float)
    res = _distribution_lp(model, lam, verts, objv, backend=backend)
    if res.status == "infeasible":
        raise AmbiguityEmptyError("oracle: moment system infeasible")
    if not res.optimal:
        raise OracleError(f"oracle distribution LP: {res.status}")
    return OracleResult(float(res.objective), verts,
                        np.maximum(res.x, 0.0))


# ---------------------------------------------------------------------------
# exhaustive first-stage search


def complete_first_stage(model: CompactModel, fixed: dict[str, float],
                         backend=None) -> FirstStageDecision | None:
    """Cheapest completion of partially fixed first-stage binaries, or None
    when the fixing is infeasible."""
    prob = LinearProblem("lam_complete")
    for v in model.lam_vars:
        prob.add_var(v.name, lb=v.lb, ub=v.ub, integer=(v.kind == "binary"))
    for i, c in model.cost.items():
        prob.set_obj(i, c)
    for r in model.lam_rows:
        prob.add_row(r.name, r.coefs, r.sense, r.rhs)
    for name, val in fixed.items():
        prob.add_row(f"fix[{name}]", {model.lam(name): 1.0}, EQ, val)
    res = solve_milp(prob, backend=backend)
    if res.status == "infeasible":
        return None
    if not res.optimal:
        raise OracleError(f"first-stage completion: {res.status}")
    return FirstStageDecision(np.round(res.x, 9))


def enumerate_lambda_grid(model: CompactModel, max_candidates: int = 4096,
                          backend=None) -> list[FirstStageDecision]:
    """All first-stage plans over the instance's binary candidates.

    Requires a vessel-free instance (vessel routing has no declared discrete
    grid). Device sizes follow their bound rows, so grids are meaningful for
    instances with pinned candidate sizes.
    """
    if model.instance.vessels:
        raise OracleError("first-stage grids require vessel-free instances")
    names = [v.name for v in model.lam_vars
             if v.kind == "binary"
             and v.name.startswith(("a_", "harden["))]
    if 2 ** len(names) > max_candidates:
        raise OracleError(
            f"grid of 2^{len(names)} candidates exceeds {max_candidates}")
    out = []
    for bits in itertools.product((0.0, 1.0), repeat=len(names)):
        lam = complete_first_stage(model, dict(zip(names, bits)),
                                   backend=backend)
        if lam is not None:
            out.append(lam)
    return out


def oracle_plan(model: CompactModel,
                candidates: list[FirstStageDecision] | None = None,
                cap: int = DEFAULT_VERTEX_CAP, backend=None
                ) -> tuple[FirstStageDecision, float]:
    """min over the grid of investment + exact worst-case expectation,
    skipping plans that fail the almost-sure feasibility check."""
    cands = (candidates if candidates is not None
             else enumerate_lambda_grid(model, backend=backend))
    verts = enumerate_vertices(model, cap)
    best = None
    best_val = INF
    for lam in cands:
        ok, why = model.first_stage_feasible(lam)
        if not ok:
            raise OracleError(f"grid candidate violates the first stage: "
                              f"{why}")
        if not relaxed_recourse_complete(model, lam, verts,
                                         backend=backend):
            continue
        try:
            feas = oracle_wcev(model, lam, "infeasibility", verts,
                               backend=backend)
        except AmbiguityEmptyError:
            raise
        if feas.value > FEAS_TOL:
            continue
        om = oracle_wcev(model, lam, "om_cost", verts, backend=backend)
        if not np.isfinite(om.value):
            continue
        total = model.investment_cost(lam) + om.value
        if total < best_val - 1e-9:
            best_val = total
            best = lam
    if best is None:
        raise OracleError("every grid candidate fails the feasibility check")
    return best, best_val


def sample_first_stage(model: CompactModel, rng: np.random.Generator,
                       vertices: list[Scenario] | None = None,
                       require_complete: bool = True, tries: int = 40,
                       backend=None) -> FirstStageDecision:
    """Random extreme point of the first-stage set, optionally filtered to
    plans whose relaxed dispatch is nonempty at every vertex."""
    verts = vertices
    if require_complete and verts is None:
        verts = enumerate_vertices(model)
    for _ in range(tries):
        prob = LinearProblem("lam_sample")
        for v in model.lam_vars:
            prob.add_var(v.name, lb=v.lb, ub=v.ub,
                         integer=(v.kind == "binary"))
        for j, v in enumerate(model.lam_vars):
            if v.kind == "binary":
                prob.set_obj(j, float(rng.normal()))
            elif np.isfinite(v.ub):
                prob.set_obj(j, float(0.1 * rng.normal()))
        for r in model.lam_rows:
            prob.add_row(r.name, r.coefs, r.sense, r.rhs)
        res = solve_milp(prob, backend=backend)
        if not res.optimal:
            raise OracleError(f"first-stage sample: {res.status}")
        lam = FirstStageDecision(np.round(res.x, 9))
        if not require_complete or relaxed_recourse_complete(
                model, lam, verts, backend=backend):
            return lam
    raise OracleError("no dispatch-complete first stage found while "
                      "sampling; instance likely over-constrained")
