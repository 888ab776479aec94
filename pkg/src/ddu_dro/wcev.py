"""Worst-case expectation over the decision-dependent moment ambiguity set.

The supremum of E[Q(lambda, xi)] over all admissible distributions is solved
by column generation on scenario support points: a distribution master LP
over the current support (probabilities + moment rows), a KKT-linearized
pricing MILP that searches the uncertainty polytope for the scenario of
maximum reduced cost, and a Farkas-ray initialization loop that grows the
support until the moment system admits a distribution at all.

Three objective modes share the machinery: the operating-cost recourse, the
shedding-overflow feasibility measure (value 0 certifies an almost surely
feasible first stage), and the lost-load valuation used for resilience
post-evaluation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .compiler import CompactModel, FirstStageDecision, Scenario
from .kernel import (
    EQ, GE, INF, LE, CertificateNotFound, LinearProblem, SolverConfig,
    farkas_ray, solve_lp, solve_milp,
)

#: scale-free reduced-cost stopping tolerance multiplier
RC_TOL = 1e-5
#: probabilities below this are filtered out of returned supports
SUPPORT_EPS = 1e-6
#: feasibility-measure values below this count as zero
FEAS_TOL = 1e-6


class AmbiguityEmptyError(RuntimeError):
    """No distribution on the uncertainty set satisfies the moment rows."""


class InfeasibleFirstStageError(RuntimeError):
    """The first stage is not almost surely feasible (positive measure)."""


class RecourseIncompleteError(RuntimeError):
    """Even the relaxed dispatch set is empty for some scenario.

    Carries the offending scenario so the outer loop can cut the plan.
    """

    def __init__(self, msg: str, scenario: Scenario):
        super().__init__(msg)
        self.scenario = scenario


@dataclass
class DiscreteDistribution:
    scenarios: list[Scenario]
    probabilities: np.ndarray
    q_values: np.ndarray
    pi: float
    kappa: np.ndarray

    def check(self, model: CompactModel, lam: FirstStageDecision,
              tol: float = 1e-6) -> None:
        p = self.probabilities
        assert (p >= -tol).all(), "negative probability"
        assert abs(p.sum() - 1.0) <= tol, "probabilities do not sum to 1"
        psi = model.psi_matrix(self.scenarios)
        bound = model.moment_bounds_at(lam)
        viol = psi @ p - bound
        assert viol.max(initial=-INF) <= tol, (
            f"moment row violated by {viol.max():.3g}")

    def by_level(self, model: CompactModel) -> dict[str, dict[str, float]]:
        """Probability mass and probability-weighted value per wind level."""
        out: dict[str, dict[str, float]] = {}
        lvl_idx = {name: i for name, i in model.xi_index.items()
                   if name.startswith("lvl[")}
        for name, i in lvl_idx.items():
            level = name[4:-1]
            mask = np.array([s.values[i] > 0.5 for s in self.scenarios])
            out[level] = {
                "probability": float(self.probabilities[mask].sum()),
                "expected_value": float(
                    (self.probabilities[mask] * self.q_values[mask]).sum()),
            }
        return out


@dataclass
class CgLog:
    rows: list[tuple] = field(default_factory=list)  # iter, pmp, rc, id, ms
    init_scenarios: int = 0

    def add(self, it: int, pmp: float, rc: float, scen: str, ms: float):
        self.rows.append((it, pmp, rc, scen, ms))

    def to_csv(self) -> str:
        out = ["iter,pmp_value,reduced_cost,scenario_id,ms"]
        for r in self.rows:
            out.append(f"{r[0]},{r[1]:.10g},{r[2]:.10g},{r[3]},{r[4]:.2f}")
        return "\n".join(out) + "\n"


@dataclass
class WcevResult:
    value: float
    distribution: DiscreteDistribution
    log: CgLog


def snap_scenario(model: CompactModel, values: np.ndarray) -> Scenario:
    """Clean solver noise: integral components to {0,1}, box endpoints
    snapped, level-deviation products recomputed exactly."""
    v = np.array(values, dtype=float)
    for i, var in enumerate(model.xi_vars):
        if var.kind == "binary":
            v[i] = round(v[i])
        else:
            if abs(v[i] - var.lb) < 1e-7:
                v[i] = var.lb
            elif abs(v[i] - var.ub) < 1e-7:
                v[i] = var.ub
    for name, i in model.xi_index.items():
        if name.startswith(("zup[", "zdn[")):
            pre, rest = name.split("[", 1)
            lvl_id, j, t = rest[:-1].split(",")
            tau = "tau_up" if pre == "zup" else "tau_dn"
            v[i] = (v[model.xi(f"lvl[{lvl_id}]")]
                    * v[model.xi(f"{tau}[{j},{t}]")])
    return Scenario(v)


def scenario_label(model: CompactModel, s: Scenario) -> str:
    for name, i in model.xi_index.items():
        if name.startswith("lvl[") and s.values[i] > 0.5:
            return f"{name[4:-1]}#{s.key().hex()[:8]}"
    return f"?#{s.key().hex()[:8]}"


# ---------------------------------------------------------------------------
# distribution master


def _pmp_problem(model: CompactModel, lam: FirstStageDecision,
                 scenarios: list[Scenario],
                 q_values: np.ndarray) -> LinearProblem:
    prob = LinearProblem("pmp", maximize=True)
    for j, s in enumerate(scenarios):
        prob.add_var(f"p[{j}]", lb=0.0, ub=INF, obj=float(q_values[j]))
    prob.add_row("one_prob", {j: 1.0 for j in range(len(scenarios))},
                 EQ, 1.0)
    psi = model.psi_matrix(scenarios)
    bound = model.moment_bounds_at(lam)
    for r, mrow in enumerate(model.moment_rows):
        coefs = {j: psi[r, j] for j in range(len(scenarios))
                 if psi[r, j] != 0.0}
        prob.add_row(mrow.name, coefs, LE, float(bound[r]))
    return prob


def solve_pmp(model: CompactModel, lam: FirstStageDecision,
              scenarios: list[Scenario], q_values: np.ndarray,
              backend=None):
    """Optimal distribution over a fixed support, or None if the moment
    system admits none. Returns (value, probabilities, pi, kappa)."""
    if not scenarios:
        return None
    prob = _pmp_problem(model, lam, scenarios, q_values)
    res = solve_lp(prob, backend=backend)
    if res.status == "infeasible":
        return None
    if not res.optimal:
        raise RuntimeError(f"distribution master: {res.status}")
    pi = float(res.duals[0])
    kappa = np.maximum(res.duals[1:], 0.0)
    return float(res.objective), np.maximum(res.x, 0.0), pi, kappa


def filter_support(distribution: DiscreteDistribution,
                   eps: float = SUPPORT_EPS) -> list[Scenario]:
    """Scenarios that actually carry probability in the worst case."""
    return [s for s, p in zip(distribution.scenarios,
                              distribution.probabilities) if p > eps]


# ---------------------------------------------------------------------------
# pricing subproblem (KKT-linearized bilevel max)


class PricingSubproblem:
    """max over the uncertainty polytope of Q(lambda, xi) - pi - psi(xi).kappa.

    The inner dispatch LP is embedded through its optimality system:
    primal rows, dual feasibility (stationarity), and big-M complementarity
    with one indicator binary per inequality row. The system is normalized
    to unit objective scale so the dual big-M stays numerically safe, and
    every reported reduced cost is verified by re-solving the dispatch LP at
    the returned scenario. Only the objective changes between pricing
    rounds, so the structure is assembled once per (first-stage, mode) pair.
    """

    def __init__(self, model: CompactModel, lam: FirstStageDecision,
                 mode: str, dual_cap: float = 64.0,
                 config: SolverConfig | None = None, backend=None):
        self.model = model
        self.lam = lam
        self.mode = mode
        # cap on the scaled dual multipliers; deliberately tight (it drives
        # the strength of the complementarity relaxation) and grown
        # adaptively against the true duals of the verification LP
        self.dual_cap = dual_cap
        self.config = config or SolverConfig()
        self.backend = backend
        raw_obj = model.objective_for_mode(mode)
        self.scale = max(1.0, max(map(abs, raw_obj.values()), default=1.0))
        self._build()

    def _build(self):
        m, lam = self.model, self.lam
        rows = m.rows_for_mode(self.mode)
        obj = {j: v / self.scale
               for j, v in m.objective_for_mode(self.mode).items()}
        zlb, zub = m.zeta_bounds_at(lam)
        prob = LinearProblem(f"pricing[{self.mode}]", maximize=True)

        self.xi_ids = [prob.add_var(v.name, lb=v.lb, ub=v.ub,
                                    integer=(v.kind == "binary"))
                       for v in m.xi_vars]
        # dispatch variables pinned by the plan (zero capacity, idle gear)
        # are eliminated as constants; the rest are free, their bounds
        # becoming explicit dual rows
        fixed = {j: zlb[j] for j in range(m.n_zeta)
                 if zub[j] - zlb[j] <= 1e-12}
        self.z_ids = {}
        for j, v in enumerate(m.zeta_vars):
            if j not in fixed:
                self.z_ids[j] = prob.add_var(f"z.{v.name}", lb=-INF, ub=INF)
        for row in m.omega_rows:
            prob.add_row(row.name, {self.xi_ids[j]: c
                                    for j, c in row.coefs.items()},
                         row.sense, row.rhs)

        # normalized inequality list: (name, a, xi_eff, c_eff) with fixed
        # dispatch variables substituted out
        ineqs: list[tuple[str, dict[int, float], dict[int, float], float]] = []
        eqs: list[tuple[str, dict[int, float], dict[int, float], float]] = []
        ub_cover: dict[int, float] = {}
        lb_cover: dict[int, float] = {}
        for r in rows:
            c_eff, xi_eff = r.xi_terms_at(lam.values)
            a = {}
            for z, v in r.a.items():
                if z in fixed:
                    c_eff -= v * fixed[z]
                else:
                    a[z] = v
            if not a:
                continue
            if r.sense == LE:
                ineqs.append((r.name, a, xi_eff, c_eff))
                if len(a) == 1:
                    # single-variable cap rows double as variable bounds
                    (z, coef), = a.items()
                    hi = c_eff + sum(max(v * m.xi_vars[x].lb,
                                         v * m.xi_vars[x].ub)
                                     for x, v in xi_eff.items())
                    if coef > 0:
                        ub_cover[z] = min(ub_cover.get(z, INF), hi / coef)
                    else:
                        lb_cover[z] = max(lb_cover.get(z, -INF), hi / coef)
            else:
                eqs.append((r.name, a, xi_eff, c_eff))
        for j, zv in enumerate(m.zeta_vars):
            if j in fixed or j in m.slack_bounds:
                continue
            if ub_cover.get(j, INF) > zub[j] + 1e-9:
                ineqs.append((f"ub.{zv.name}", {j: 1.0}, {}, float(zub[j])))
            if lb_cover.get(j, -INF) < zlb[j] - 1e-9:
                ineqs.append((f"lb.{zv.name}", {j: -1.0}, {},
                              float(-zlb[j])))

        self.n_ineq = len(ineqs)
        self.y_ids = []
        self.r_ids = []
        self.w_ids = []
        # primal feasibility + complementarity scaffolding
        for i, (name, a, xi_eff, c_eff) in enumerate(ineqs):
            coefs = {self.z_ids[j]: v for j, v in a.items()}
            for x, v in xi_eff.items():
                coefs[self.xi_ids[x]] = coefs.get(self.xi_ids[x], 0.0) - v
            prob.add_row(f"pf[{name}]", coefs, LE, c_eff)
            y = prob.add_var(f"y[{name}]", lb=0.0, ub=self.dual_cap)
            r = prob.add_var(f"r[{name}]", lb=0.0, ub=1.0, integer=True)
            self.y_ids.append(y)
            self.r_ids.append(r)
            prob.add_row(f"cc_dual[{name}]",
                         {y: 1.0, r: -self.dual_cap}, LE, 0.0)
            # slack <= M (1 - r): recompute slack bound by intervals
            smax = c_eff
            for j, v in a.items():
                smax -= min(v * zlb[j], v * zub[j])
            for x, v in xi_eff.items():
                xv = m.xi_vars[x]
                smax += max(v * xv.lb, v * xv.ub)
            smax = max(smax, 0.0) + 1.0
            coefs2 = dict(coefs)
            coefs2[r] = -smax
            prob.add_row(f"cc_slack[{name}]", coefs2, GE,
                         c_eff - smax)
        for (name, a, xi_eff, c_eff) in eqs:
            coefs = {self.z_ids[j]: v for j, v in a.items()}
            for x, v in xi_eff.items():
                coefs[self.xi_ids[x]] = coefs.get(self.xi_ids[x], 0.0) - v
            prob.add_row(f"pf[{name}]", coefs, EQ, c_eff)
            self.w_ids.append(prob.add_var(f"w[{name}]",
                                           lb=-self.dual_cap,
                                           ub=self.dual_cap))

        # stationarity: obj_j + sum_i a_ij y_i + sum_e a_ej w_e = 0
        stat: list[dict[int, float]] = [dict() for _ in m.zeta_vars]
        for i, (_, a, _, _) in enumerate(ineqs):
            for j, v in a.items():
                stat[j][self.y_ids[i]] = stat[j].get(self.y_ids[i], 0.0) + v
        for e, (_, a, _, _) in enumerate(eqs):
            for j, v in a.items():
                stat[j][self.w_ids[e]] = stat[j].get(self.w_ids[e], 0.0) + v
        for j, zv in enumerate(m.zeta_vars):
            if j in fixed:
                continue
            prob.add_row(f"stat[{zv.name}]", stat[j], EQ,
                         -float(obj.get(j, 0.0)))

        # strong-duality cut: dispatch objective <= dual objective, with the
        # dual's rhs(xi) products replaced by McCormick envelopes (exact for
        # binary components). Redundant at every optimality point, but it
        # ties the relaxation's objective to the dual side and lets the
        # branch-and-bound certificate close.
        sd = {self.z_ids[j]: float(v) for j, v in obj.items()
              if j not in fixed}

        def envelope(tag, dual_id, dlo, dhi, x, v):
            xv = m.xi_vars[x]
            xlo, xhi = xv.lb, xv.ub
            if xhi - xlo <= 1e-12:
                sd[dual_id] = sd.get(dual_id, 0.0) + v * xlo
                return
            corners = (dlo * xlo, dlo * xhi, dhi * xlo, dhi * xhi)
            p = prob.add_var(f"P[{tag},{xv.name}]",
                             lb=min(corners), ub=max(corners))
            xid = self.xi_ids[x]
            prob.add_row(f"P1[{tag},{xv.name}]",
                         {p: 1.0, xid: -dlo, dual_id: -xlo}, GE,
                         -dlo * xlo)
            prob.add_row(f"P2[{tag},{xv.name}]",
                         {p: 1.0, xid: -dhi, dual_id: -xhi}, GE,
                         -dhi * xhi)
            prob.add_row(f"P3[{tag},{xv.name}]",
                         {p: 1.0, xid: -dhi, dual_id: -xlo}, LE,
                         -dhi * xlo)
            prob.add_row(f"P4[{tag},{xv.name}]",
                         {p: 1.0, xid: -dlo, dual_id: -xhi}, LE,
                         -dlo * xhi)
            sd[p] = sd.get(p, 0.0) + v

        for i, (name, _, xi_eff, c_eff) in enumerate(ineqs):
            y = self.y_ids[i]
            sd[y] = sd.get(y, 0.0) + c_eff
            for x, v in xi_eff.items():
                envelope(f"y{i}", y, 0.0, self.dual_cap, x, v)
        for e, (name, _, xi_eff, c_eff) in enumerate(eqs):
            w = self.w_ids[e]
            sd[w] = sd.get(w, 0.0) + c_eff
            for x, v in xi_eff.items():
                envelope(f"w{e}", w, -self.dual_cap, self.dual_cap, x, v)
        prob.add_row("strong_duality", sd, LE, 0.0)

        self.prob = prob
        self._obj_template = {self.z_ids[j]: float(v)
                              for j, v in obj.items() if j not in fixed}
        self._fixed_obj = self.scale * sum(
            obj.get(j, 0.0) * val for j, val in fixed.items())

    def solve(self, pi: float, kappa: np.ndarray):
        """Returns (reduced cost, scenario, proven bound), with the reduced
        cost recomputed exactly from the dispatch LP at the argmax. The dual
        cap grows until the verification LP's own multipliers fit under it
        and the optimality system agrees with the exact value."""
        m = self.model
        for _ in range(7):
            obj = dict(self._obj_template)
            for r, mrow in enumerate(m.moment_rows):
                if kappa[r] == 0.0:
                    continue
                for x, v in mrow.psi.items():
                    xid = self.xi_ids[x]
                    obj[xid] = obj.get(xid, 0.0) - kappa[r] * v / self.scale
            for j in range(self.prob.num_vars):
                self.prob.set_obj(j, 0.0)
            for j, v in obj.items():
                self.prob.set_obj(j, v)
            res = solve_milp(self.prob, self.config, backend=self.backend)
            if res.status == "infeasible":
                # big-M systems occasionally trip presolve; retry raw once
                import dataclasses

                raw = dataclasses.replace(self.config, presolve=False)
                res = solve_milp(self.prob, raw, backend=self.backend)
            if res.status == "infeasible":
                self.dual_cap *= 4.0
                self._build()
                continue
            if res.status not in ("optimal", "limit"):
                raise RuntimeError(f"pricing subproblem: {res.status}")
            xi_vals = np.array([res.x[i] for i in self.xi_ids])
            scen = snap_scenario(m, xi_vals)
            q_exact, dual_mag = _recourse_value_and_duals(
                m, self.lam, scen, self.mode, backend=self.backend)
            if dual_mag / self.scale > 0.8 * self.dual_cap:
                self.dual_cap = max(self.dual_cap * 4.0,
                                    2.0 * dual_mag / self.scale)
                self._build()
                continue
            psi_term = sum(kappa[r] * mrow.psi_value(scen.values)
                           for r, mrow in enumerate(m.moment_rows)
                           if kappa[r] != 0.0)
            phi_exact = q_exact - pi - psi_term
            phi_milp = (self.scale * float(res.objective)
                        + self._fixed_obj - pi)
            if res.status == "optimal" and (
                    abs(phi_exact - phi_milp)
                    > 1e-4 * max(1.0, abs(phi_exact))):
                self.dual_cap *= 4.0
                self._build()
                continue
            bound = (self.scale * float(res.bound) + self._fixed_obj - pi
                     if res.bound is not None else phi_exact)
            return (phi_exact, scen, bound)
        raise RuntimeError("pricing dual cap kept escaping; the optimality "
                           "system never matched the dispatch LP")


class EnumeratedPricing:
    """Exact pricing by scanning the uncertainty set's extreme points.

    Valid because the reduced cost (dispatch value minus an affine moment
    term) is convex in the uncertainty vector, so its maximum over the
    polytope sits on a vertex. Dispatch values are cached per vertex, so
    repeated pricing rounds under the same plan cost a matrix product.
    """

    def __init__(self, model: CompactModel, lam: FirstStageDecision,
                 mode: str, vertices: list[Scenario],
                 config: SolverConfig | None = None, backend=None):
        self.model = model
        self.lam = lam
        self.mode = mode
        self.config = config or SolverConfig()
        self.backend = backend
        self.vertices = vertices
        self.psi = model.psi_matrix(vertices)
        self._values: np.ndarray | None = None

    def _ensure_values(self):
        from .compiler import recourse_lp

        if self._values is not None:
            return
        vals = np.empty(len(self.vertices))
        for j, s in enumerate(self.vertices):
            res = solve_lp(recourse_lp(self.model, self.lam, s, self.mode),
                           backend=self.backend)
            if res.status == "infeasible":
                if self.mode != "om_cost":
                    raise RecourseIncompleteError(
                        "relaxed dispatch set empty at an extreme point",
                        s)
                # scenarios outside the feasible-dispatch region cannot
                # enter the support of an almost surely feasible plan
                vals[j] = -INF
            elif res.optimal:
                vals[j] = res.objective
            else:
                raise RuntimeError(f"dispatch LP: {res.status}")
        self._values = vals

    def solve(self, pi: float, kappa: np.ndarray):
        self._ensure_values()
        scores = self._values - pi - kappa @ self.psi
        j = int(np.argmax(scores))
        return float(scores[j]), self.vertices[j], float(scores[j])

    def lookup(self, scen: Scenario) -> float | None:
        if self._values is None:
            return None
        if not hasattr(self, "_index"):
            self._index = {s.key(): j for j, s in enumerate(self.vertices)}
        j = self._index.get(scen.key())
        if j is None or self._values[j] == -INF:
            return None
        return float(self._values[j])


def make_pricer(model: CompactModel, lam: FirstStageDecision, mode: str,
                strategy: str = "kkt", config: SolverConfig | None = None,
                backend=None, vertex_cap: int = 4096):
    """Pricing strategy factory: the optimality-system MILP by default, or
    extreme-point scanning (``enumerate`` / ``auto`` under the cap)."""
    from .compiler import enumerate_vertices, predict_vertex_count

    if strategy == "auto":
        strategy = ("enumerate"
                    if predict_vertex_count(model) <= vertex_cap else "kkt")
    if strategy == "enumerate":
        verts = getattr(model, "_vertex_cache", None)
        if verts is None:
            verts = enumerate_vertices(model, cap=max(
                vertex_cap, predict_vertex_count(model)))
            model._vertex_cache = verts
        return EnumeratedPricing(model, lam, mode, verts, config=config,
                                 backend=backend)
    if strategy != "kkt":
        raise ValueError(f"unknown pricing strategy {strategy!r}")
    return PricingSubproblem(model, lam, mode, config=config,
                             backend=backend)


def _psp_ia_problem(model: CompactModel, ray_pi: float,
                    ray_kappa: np.ndarray) -> LinearProblem:
    prob = LinearProblem("pricing_init", maximize=True)
    ids = [prob.add_var(v.name, lb=v.lb, ub=v.ub,
                        integer=(v.kind == "binary"))
           for v in model.xi_vars]
    for row in model.omega_rows:
        prob.add_row(row.name, {ids[j]: c for j, c in row.coefs.items()},
                     row.sense, row.rhs)
    obj = np.zeros(model.n_xi)
    for r, mrow in enumerate(model.moment_rows):
        if ray_kappa[r] == 0.0:
            continue
        for x, v in mrow.psi.items():
            obj[x] -= ray_kappa[r] * v
    for j, v in enumerate(obj):
        prob.set_obj(ids[j], float(v))
    return prob


def initialize_support(model: CompactModel, lam: FirstStageDecision,
                       existing: list[Scenario] | None = None,
                       config: SolverConfig | None = None, backend=None,
                       max_rounds: int = 200) -> list[Scenario]:
    """Grow a support until the moment system admits a distribution.

    Repeatedly extracts a Farkas ray of the infeasible distribution master
    and adds the scenario maximizing the ray's violated direction. A
    non-positive maximum while the master stays infeasible proves the
    ambiguity set itself is empty.
    """
    support = list(existing or [])
    for _ in range(max_rounds):
        prob = _pmp_problem(model, lam, support, np.zeros(len(support)))
        if support:
            res = solve_lp(prob, backend=backend)
            if res.status != "infeasible":
                return support
        try:
            ray = farkas_ray(prob, backend=backend)
        except CertificateNotFound as e:  # pragma: no cover - numerics
            raise RuntimeError(f"master infeasible but no ray: {e}")
        ray_pi, ray_kappa = float(ray[0]), np.maximum(ray[1:], 0.0)
        ia = _psp_ia_problem(model, ray_pi, ray_kappa)
        ires = solve_milp(ia, config, backend=backend)
        if ires.status != "optimal":
            raise RuntimeError(f"init pricing: {ires.status}")
        value = float(ires.objective) - ray_pi
        if value <= 1e-9:
            raise AmbiguityEmptyError(
                "ambiguity set empty: no scenario can offset the moment "
                "system's Farkas certificate")
        scen = snap_scenario(model, np.asarray(ires.x))
        if any(scen == s for s in support):
            raise AmbiguityEmptyError(
                "ambiguity set empty: initialization stalled on a repeated "
                "scenario")
        support.append(scen)
    raise RuntimeError("initialization did not converge")


# ---------------------------------------------------------------------------
# the column-generation driver


def _recourse_value_and_duals(model: CompactModel, lam: FirstStageDecision,
                              scen: Scenario, mode: str,
                              backend=None) -> tuple[float, float]:
    from .compiler import recourse_lp

    prob = recourse_lp(model, lam, scen, mode)
    res = solve_lp(prob, backend=backend)
    if res.status == "infeasible":
        if mode == "om_cost":
            raise InfeasibleFirstStageError(
                "capped dispatch infeasible for a support scenario; the "
                "cost-mode expectation requires an almost surely feasible "
                "first stage")
        raise RecourseIncompleteError(
            "relaxed dispatch set empty for a scenario: the first stage "
            "commits operations that no dispatch can satisfy", scen)
    if not res.optimal:
        raise RuntimeError(f"dispatch LP: {res.status}")
    mag = 0.0
    if res.duals is not None and res.duals.size:
        mag = float(np.abs(res.duals).max())
    if res.reduced_costs is not None and res.reduced_costs.size:
        mag = max(mag, float(np.abs(res.reduced_costs).max()))
    return float(res.objective), mag


def evaluate_recourse(model: CompactModel, lam: FirstStageDecision,
                      scen: Scenario, mode: str, backend=None) -> float:
    return _recourse_value_and_duals(model, lam, scen, mode,
                                     backend=backend)[0]


def solve_wcev(model: CompactModel, lam: FirstStageDecision,
               objective_mode: str = "om_cost",
               warm_start: list[Scenario] | None = None,
               config: SolverConfig | None = None, backend=None,
               max_iters: int = 500, rc_floor: float = 0.0,
               pricing: str = "kkt",
               q_cache: dict | None = None) -> WcevResult:
    """Column generation for the worst-case expectation under one plan.

    In cost mode the support must contain only scenarios whose capped
    dispatch is feasible; absent a warm start, the feasibility variant runs
    first and its filtered support seeds the loop (raising if the plan is
    not almost surely feasible). ``rc_floor`` is an absolute floor on the
    reduced-cost certificate, for callers content with a coarser proof.
    """
    log = CgLog()
    pool: list[Scenario] = []
    seen: set[bytes] = set()
    q_cache = q_cache if q_cache is not None else {}

    def q_of(s: Scenario) -> float:
        key = (objective_mode, s.key())
        if key not in q_cache:
            hit = psp.lookup(s) if hasattr(psp, "lookup") else None
            q_cache[key] = hit if hit is not None else evaluate_recourse(
                model, lam, s, objective_mode, backend=backend)
        return q_cache[key]

    def add(s: Scenario) -> bool:
        if s.key() in seen:
            return False
        pool.append(s)
        seen.add(s.key())
        return True

    if objective_mode == "om_cost" and not warm_start:
        feas = solve_wcev(model, lam, "infeasibility", config=config,
                          backend=backend, max_iters=max_iters,
                          pricing=pricing, q_cache=q_cache)
        if feas.value > FEAS_TOL * max(1.0, abs(feas.value)):
            raise InfeasibleFirstStageError(
                f"first stage fails the feasibility check "
                f"(worst-case overflow {feas.value:.6g})")
        warm_start = filter_support(feas.distribution)
    for s in warm_start or []:
        add(s)

    psp = make_pricer(model, lam, objective_mode, strategy=pricing,
                      config=config, backend=backend)
    prev_value = -INF
    for it in range(1, max_iters + 1):
        t0 = time.perf_counter()
        qs = np.array([q_of(s) for s in pool])
        sol = solve_pmp(model, lam, pool, qs, backend=backend)
        if sol is None:
            before = len(pool)
            for s in initialize_support(model, lam, pool, config=config,
                                        backend=backend):
                add(s)
            log.init_scenarios += len(pool) - before
            qs = np.array([q_of(s) for s in pool])
            sol = solve_pmp(model, lam, pool, qs, backend=backend)
            if sol is None:
                raise AmbiguityEmptyError(
                    "moment system infeasible after initialization")
        value, probs, pi, kappa = sol
        if value < prev_value - 1e-6 * max(1.0, abs(value)):
            raise RuntimeError(
                f"master value regressed: {prev_value} -> {value}")
        prev_value = value
        phi, scen, bound = psp.solve(pi, kappa)
        ms = (time.perf_counter() - t0) * 1e3
        eps_rc = max(RC_TOL * max(1.0, abs(value)), rc_floor)
        log.add(it, value, phi, scenario_label(model, scen), ms)
        if bound <= eps_rc:
            dist = DiscreteDistribution(list(pool), probs, qs, pi, kappa)
            dist.check(model, lam)
            return WcevResult(value, dist, log)
        if phi <= eps_rc:
            # incumbent does not improve but the bound is unproven: the
            # pricing hit its limit; escalate until it certifies
            limit = psp.config.time_limit
            if limit is None:
                raise RuntimeError(
                    f"pricing bound {bound:.3g} above tolerance with a "
                    f"non-improving incumbent; optimality system suspect")
            psp.config.time_limit = limit * 4.0
            continue
        if not add(scen):
            raise RuntimeError(
                f"pricing returned an existing scenario with reduced cost "
                f"{phi:.3g} (> {eps_rc:.3g}); numerical trouble")
    raise RuntimeError(f"column generation hit the iteration limit "
                       f"({max_iters})")
