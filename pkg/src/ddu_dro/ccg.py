"""Outer decomposition loop for the two-stage robust planning problem.

The master problem carries, per accumulated scenario, a hard dispatch block
(the strong feasibility columns) plus one dualized worst-case-expectation
cut whose decision-dependent moment bounds enter through exact products of
hardening binaries with the dual multipliers. Each outer iteration solves
the master for a candidate plan, certifies almost-sure feasibility with the
feasibility-measure expectation, then prices the cost expectation; upper
and lower bounds close monotonically.

Two drivers share the machinery: the full algorithm runs both inner
expectations to convergence and keeps only positive-probability scenarios,
while the baseline adds exactly one scenario per outer iteration from a
single pricing pass (the classical column-and-constraint regime).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .compiler import CompactModel, FirstStageDecision, Scenario, compile_instance
from .instance import Instance
from .kernel import EQ, GE, INF, LE, LinearProblem, SolverConfig, solve_milp
from .wcev import (
    FEAS_TOL, AmbiguityEmptyError, CgLog, DiscreteDistribution,
    InfeasibleFirstStageError, PricingSubproblem, RecourseIncompleteError,
    WcevResult, evaluate_recourse, filter_support, initialize_support,
    make_pricer, scenario_label, solve_pmp, solve_wcev,
)


class PlanningInfeasibleError(RuntimeError):
    """The master problem is infeasible: no plan survives the cuts."""


class IterationLimitError(RuntimeError):
    def __init__(self, msg: str, report: "RunReport"):
        super().__init__(msg)
        self.report = report


@dataclass
class Settings:
    algorithm: str = "ccg-dro"  # or "basic-ccg"
    gap: float = 1e-4
    max_iters: int = 200
    time_limit_s: float | None = None
    master_form: str = "hard"  # or "dualized"
    backend: str | None = None
    mip_gap: float = 1e-6
    #: per-pricing-solve time budget; the inner loop escalates it when a
    #: convergence certificate is still missing
    pricing_time_limit: float | None = 60.0
    #: absolute reduced-cost floor accepted as a feasibility certificate
    feas_certificate: float = 1e-4
    #: pricing strategy: the optimality-system MILP ("kkt"), extreme-point
    #: scanning ("enumerate"), or size-based selection ("auto")
    pricing: str = "kkt"

    def config(self) -> SolverConfig:
        return SolverConfig(mip_gap=self.mip_gap)

    def pricing_config(self) -> SolverConfig:
        return SolverConfig(time_limit=self.pricing_time_limit,
                            mip_gap=self.mip_gap)


@dataclass
class CutPool:
    """Accumulated scenarios, deduplicated, in insertion order."""

    scenarios: list[Scenario] = field(default_factory=list)
    _keys: set = field(default_factory=set)

    def add(self, scen: Scenario) -> bool:
        if scen.key() in self._keys:
            return False
        self.scenarios.append(scen)
        self._keys.add(scen.key())
        return True

    def extend(self, scens) -> int:
        return sum(self.add(s) for s in scens)

    def __len__(self) -> int:
        return len(self.scenarios)


@dataclass
class RunReport:
    algorithm: str
    status: str = "running"
    lb_history: list[float] = field(default_factory=list)
    ub_history: list[float] = field(default_factory=list)
    iterations: int = 0
    scenario_count: int = 0
    gap: float = INF
    lower_bound: float = -INF
    upper_bound: float = INF
    investment_cost: float = 0.0
    worst_case_om: float = INF
    master_s: float = 0.0
    feasibility_cg_s: float = 0.0
    optimality_cg_s: float = 0.0
    total_s: float = 0.0
    plan: dict = field(default_factory=dict)
    plan_vector: list = field(default_factory=list)
    worst_distribution: list = field(default_factory=list)
    per_level: dict = field(default_factory=dict)
    cg_rows: list = field(default_factory=list)

    def absorb_log(self, phase: str, log: CgLog) -> None:
        for (it, pmp, rc, scen, ms) in log.rows:
            self.cg_rows.append((self.iterations, phase, it, pmp, rc,
                                 scen, ms))

    def cg_csv(self) -> str:
        out = ["iter,phase,cg_iter,pmp_value,reduced_cost,scenario_id,ms"]
        for r in self.cg_rows:
            out.append(f"{r[0]},{r[1]},{r[2]},{r[3]:.10g},{r[4]:.10g},"
                       f"{r[5]},{r[6]:.2f}")
        return "\n".join(out) + "\n"

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "status": self.status,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "gap": self.gap,
            "iterations": self.iterations,
            "scenario_count": self.scenario_count,
            "investment_cost": self.investment_cost,
            "worst_case_om": self.worst_case_om,
            "lb_history": self.lb_history,
            "ub_history": self.ub_history,
            "time_s": {"master": round(self.master_s, 2),
                       "feasibility_cg": round(self.feasibility_cg_s, 2),
                       "optimality_cg": round(self.optimality_cg_s, 2),
                       "total": round(self.total_s, 2)},
            "plan": self.plan,
            "worst_distribution": self.worst_distribution,
            "per_level": self.per_level,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def plan_summary(model: CompactModel, lam: FirstStageDecision) -> dict:
    """Human-readable nonzeros of a plan."""
    out = {}
    for v, x in zip(model.lam_vars, lam.values):
        if abs(x) > 1e-9 and not v.name.startswith(("mu[", "beta[", "w_",
                                                    "sited[")):
            out[v.name] = round(float(x), 9)
    return out


# ---------------------------------------------------------------------------
# master problem


class MasterProblem:
    """min c.lambda + eta over the plan polytope with scenario blocks.

    ``hard`` form: per-scenario capped dispatch blocks plus one dualized
    optimality cut (valid under the validated moment-separation margin).
    ``dualized`` form: relaxed dispatch blocks with explicit dualized
    optimality and feasibility cuts.
    """

    def __init__(self, model: CompactModel, settings: Settings):
        self.model = model
        self.settings = settings
        self.pool = CutPool()
        self.kappa_cap = 10.0 / model.instance.uncertainty.separation_margin
        self.pi_cap = 1e6

    def rescale(self, q_hint: float) -> None:
        eps = self.model.instance.uncertainty.separation_margin
        self.kappa_cap = max(self.kappa_cap,
                             10.0 * max(1.0, abs(q_hint)) / eps)
        self.pi_cap = max(self.pi_cap, 100.0 * max(1.0, abs(q_hint)))

    def _build(self) -> LinearProblem:
        m = self.model
        form = self.settings.master_form
        prob = LinearProblem("master")
        for v in m.lam_vars:
            prob.add_var(v.name, lb=v.lb, ub=v.ub,
                         integer=(v.kind == "binary"))
        for i, c in m.cost.items():
            prob.set_obj(i, c)
        for r in m.lam_rows:
            prob.add_row(r.name, r.coefs, r.sense, r.rhs)
        eta = prob.add_var("eta", lb=0.0, ub=INF, obj=1.0)
        if not self.pool.scenarios:
            return prob

        gamma_bound = m.moment_bounds_at(
            FirstStageDecision(np.zeros(m.n_lam)))
        n_mom = len(m.moment_rows)
        pi = prob.add_var("pi", lb=-self.pi_cap, ub=self.pi_cap)
        kap = [prob.add_var(f"kappa[{r.name}]", lb=0.0, ub=self.kappa_cap)
               for r in m.moment_rows]
        # eta >= pi + gamma1.kappa - sum eps*(g kappa) via exact products
        opt_cut = {eta: 1.0, pi: -1.0}
        for r, mrow in enumerate(m.moment_rows):
            opt_cut[kap[r]] = opt_cut.get(kap[r], 0.0) - mrow.gamma1
            for l, epsv in mrow.gamma2.items():
                w = prob.add_var(f"kg[{mrow.name}]", lb=0.0,
                                 ub=self.kappa_cap)
                prob.add_row(f"kg_le_k[{mrow.name}]",
                             {w: 1.0, kap[r]: -1.0}, LE, 0.0)
                prob.add_row(f"kg_le_g[{mrow.name}]",
                             {w: 1.0, l: -self.kappa_cap}, LE, 0.0)
                prob.add_row(f"kg_ge[{mrow.name}]",
                             {w: 1.0, kap[r]: -1.0, l: -self.kappa_cap},
                             GE, -self.kappa_cap)
                opt_cut[w] = opt_cut.get(w, 0.0) + epsv
        prob.add_row("opt_cut", opt_cut, GE, 0.0)

        feas_dual = None
        if form == "dualized":
            pi_f = prob.add_var("pi_f", lb=-self.pi_cap, ub=self.pi_cap)
            kap_f = [prob.add_var(f"kappa_f[{r.name}]", lb=0.0,
                                  ub=self.kappa_cap)
                     for r in m.moment_rows]
            cut = {pi_f: -1.0}
            for r, mrow in enumerate(m.moment_rows):
                cut[kap_f[r]] = cut.get(kap_f[r], 0.0) - mrow.gamma1
                for l, epsv in mrow.gamma2.items():
                    w = prob.add_var(f"kgf[{mrow.name}]", lb=0.0,
                                     ub=self.kappa_cap)
                    prob.add_row(f"kgf_le_k[{mrow.name}]",
                                 {w: 1.0, kap_f[r]: -1.0}, LE, 0.0)
                    prob.add_row(f"kgf_le_g[{mrow.name}]",
                                 {w: 1.0, l: -self.kappa_cap}, LE, 0.0)
                    prob.add_row(f"kgf_ge[{mrow.name}]",
                                 {w: 1.0, kap_f[r]: -1.0,
                                  l: -self.kappa_cap}, GE, -self.kappa_cap)
                    cut[w] = cut.get(w, 0.0) + epsv
            prob.add_row("feas_cut", cut, GE, 0.0)
            feas_dual = (pi_f, kap_f)

        mode = "om_cost" if form == "hard" else "infeasibility"
        rows = m.rows_for_mode(mode)
        obj_om = m.objective_for_mode("om_cost")
        obj_feas = m.objective_for_mode("infeasibility")
        for j, scen in enumerate(self.pool.scenarios):
            zid = [prob.add_var(f"blk{j}.{v.name}", lb=v.lb, ub=v.ub)
                   for v in m.zeta_vars]
            for r in rows:
                c_eff, lam_eff = r.lam_terms_at(scen.values)
                coefs = {zid[z]: v for z, v in r.a.items()}
                for l, v in lam_eff.items():
                    coefs[l] = coefs.get(l, 0.0) - v
                prob.add_row(f"blk{j}.{r.name}", coefs, r.sense, c_eff)
            # dual feasibility of the optimality cut at this scenario
            row = {pi: 1.0}
            for r, mrow in enumerate(m.moment_rows):
                pv = mrow.psi_value(scen.values)
                if pv != 0.0:
                    row[kap[r]] = row.get(kap[r], 0.0) + pv
            for z, v in obj_om.items():
                row[zid[z]] = row.get(zid[z], 0.0) - v
            prob.add_row(f"dualfeas[{j}]", row, GE, 0.0)
            if feas_dual is not None:
                pi_f, kap_f = feas_dual
                row = {pi_f: 1.0}
                for r, mrow in enumerate(m.moment_rows):
                    pv = mrow.psi_value(scen.values)
                    if pv != 0.0:
                        row[kap_f[r]] = row.get(kap_f[r], 0.0) + pv
                for z, v in obj_feas.items():
                    row[zid[z]] = row.get(zid[z], 0.0) - v
                prob.add_row(f"dualfeas_f[{j}]", row, GE, 0.0)
        return prob

    def solve(self, backend=None, q_cache: dict | None = None):
        """Returns (plan, master value, eta).

        The dual-multiplier caps in the exact hardening products are
        heuristic; after each solve the claimed worst-case term is checked
        against an independent distribution-LP evaluation at the returned
        plan, and the caps double until the two agree.
        """
        for _ in range(8):
            prob = self._build()
            res = solve_milp(prob, self.settings.config(), backend=backend)
            if res.status == "infeasible":
                raise PlanningInfeasibleError(
                    "master infeasible: no plan satisfies the accumulated "
                    "feasibility columns")
            if res.status not in ("optimal", "limit"):
                raise RuntimeError(f"master: {res.status}")
            lam = FirstStageDecision(np.round(res.x[:self.model.n_lam], 9))
            eta = float(res.x[prob.var("eta")])
            if self.pool.scenarios and self.settings.master_form == "hard":
                qs = []
                for s in self.pool.scenarios:
                    key = (lam.key(), "om_cost", s.key())
                    if q_cache is not None and key in q_cache:
                        qs.append(q_cache[key])
                        continue
                    v = evaluate_recourse(self.model, lam, s, "om_cost",
                                          backend=backend)
                    if q_cache is not None:
                        q_cache[key] = v
                    qs.append(v)
                sol = solve_pmp(self.model, lam, list(self.pool.scenarios),
                                np.array(qs), backend=backend)
                target = max(0.0, sol[0]) if sol is not None else 0.0
                if eta > target + 1e-5 * max(1.0, abs(target)):
                    self.kappa_cap *= 4.0
                    self.pi_cap *= 4.0
                    continue
            return lam, float(res.objective), eta
        raise RuntimeError("master worst-case term stayed inflated after "
                           "8 cap doublings")


# ---------------------------------------------------------------------------
# drivers


def _feas_scale(value: float) -> float:
    return FEAS_TOL * max(1.0, abs(value))


def _price_decided(psp: PricingSubproblem, pi: float, kappa,
                   eps: float, escalations: int = 3):
    """Price until either an improving scenario or a proven certificate."""
    for _ in range(escalations + 1):
        phi, scen, bound = psp.solve(pi, kappa)
        if phi > eps or bound <= eps:
            return phi, scen, bound
        if psp.config.time_limit is None:
            break
        psp.config.time_limit *= 4.0
    raise RuntimeError(
        f"pricing undecided: incumbent {phi:.3g}, bound {bound:.3g}, "
        f"tolerance {eps:.3g}")


def _zero_overflow_support(dist: DiscreteDistribution) -> list[Scenario]:
    """Positive-probability support restricted to scenarios whose overflow
    measure is itself zero (mass-epsilon stragglers are dropped rather than
    turned into hard columns)."""
    return [s for s, p, q in zip(dist.scenarios, dist.probabilities,
                                 dist.q_values)
            if p > 1e-6 and q <= 10 * FEAS_TOL]


def run_ccg_dro(instance_or_model, settings: Settings | None = None,
                post_eval: bool = True) -> RunReport:
    """Full decomposition: inner expectations to convergence, filtered
    supports, hard feasibility columns, dualized optimality cut."""
    model = _as_model(instance_or_model)
    settings = settings or Settings(algorithm="ccg-dro",
                                    gap=model.instance.limits.gap,
                                    max_iters=model.instance.limits.max_iters)
    rep = RunReport(algorithm="ccg-dro")
    master = MasterProblem(model, settings)
    t_start = time.perf_counter()
    lb, ub = -INF, INF
    best = None
    config = settings.config()
    backend = None
    mcache: dict = {}
    for it in range(1, settings.max_iters + 1):
        rep.iterations = it
        t0 = time.perf_counter()
        try:
            lam, gamma, eta = master.solve(backend=backend, q_cache=mcache)
        except PlanningInfeasibleError:
            rep.status = "infeasible"
            rep.total_s = time.perf_counter() - t_start
            raise
        rep.master_s += time.perf_counter() - t0
        lb = max(lb, gamma)
        rep.lb_history.append(lb)

        t0 = time.perf_counter()
        try:
            feas = solve_wcev(model, lam, "infeasibility",
                              warm_start=list(master.pool.scenarios),
                              config=settings.pricing_config(),
                              rc_floor=settings.feas_certificate,
                              pricing=settings.pricing,
                              backend=backend)
            rep.absorb_log("feasibility", feas.log)
            feas_val = feas.value
            feas_support = filter_support(feas.distribution)
        except RecourseIncompleteError as e:
            feas_val = INF
            feas_support = [e.scenario]
        rep.feasibility_cg_s += time.perf_counter() - t0

        if feas_val <= _feas_scale(feas_val):
            feas_support = _zero_overflow_support(feas.distribution)
            t0 = time.perf_counter()
            warm = list(master.pool.scenarios) + feas_support
            opt = solve_wcev(model, lam, "om_cost", warm_start=warm,
                             config=settings.pricing_config(),
                             pricing=settings.pricing,
                             backend=backend)
            rep.absorb_log("optimality", opt.log)
            rep.optimality_cg_s += time.perf_counter() - t0
            candidate = model.investment_cost(lam) + opt.value
            if candidate < ub - 1e-12:
                ub = candidate
                best = (lam, opt)
            master.rescale(opt.value)
            added = master.pool.extend(feas_support)
            added += master.pool.extend(filter_support(opt.distribution))
        else:
            added = master.pool.extend(feas_support)
            if added == 0:
                raise RuntimeError(
                    "feasibility expectation positive but no new scenario "
                    "to cut with; numerical trouble")
        rep.ub_history.append(ub)
        rep.scenario_count = len(master.pool)
        rep.gap = (ub - lb) / max(1.0, abs(ub))
        if np.isfinite(ub) and ub - lb <= settings.gap * max(1.0, abs(ub)):
            break
        if (settings.time_limit_s is not None
                and time.perf_counter() - t_start > settings.time_limit_s):
            rep.status = "time_limit"
            rep.total_s = time.perf_counter() - t_start
            raise IterationLimitError("outer time limit", rep)
    else:
        rep.status = "iteration_limit"
        rep.total_s = time.perf_counter() - t_start
        raise IterationLimitError("outer iteration limit", rep)

    lam, opt = best
    _finalize(rep, model, lam, opt, lb, ub, t_start, post_eval, config,
              pricing=settings.pricing)
    return rep


def run_basic_ccg(instance_or_model, settings: Settings | None = None,
                  post_eval: bool = True) -> RunReport:
    """Baseline: identical master and cuts, but each outer iteration prices
    a single scenario (feasibility first, then cost) instead of running the
    inner expectations to convergence."""
    model = _as_model(instance_or_model)
    settings = settings or Settings(algorithm="basic-ccg",
                                    gap=model.instance.limits.gap,
                                    max_iters=model.instance.limits.max_iters)
    rep = RunReport(algorithm="basic-ccg")
    master = MasterProblem(model, settings)
    config = settings.config()
    backend = None
    t_start = time.perf_counter()
    lb, ub = -INF, INF
    best = None
    q_cache: dict = {}
    for it in range(1, settings.max_iters + 1):
        rep.iterations = it
        t0 = time.perf_counter()
        lam, gamma, eta = master.solve(backend=backend, q_cache=q_cache)
        rep.master_s += time.perf_counter() - t0
        lb = max(lb, gamma)
        rep.lb_history.append(lb)

        def q_of(scen, mode):
            key = (lam.key(), mode, scen.key())
            if key not in q_cache:
                q_cache[key] = evaluate_recourse(model, lam, scen, mode,
                                                 backend=backend)
            return q_cache[key]

        t0 = time.perf_counter()
        progressed = False
        try:
            # feasibility phase: master distribution + one pricing pass
            pool = list(master.pool.scenarios)
            sol = None
            if pool:
                qf = np.array([q_of(s, "infeasibility") for s in pool])
                sol = solve_pmp(model, lam, pool, qf, backend=backend)
            if sol is None:
                for s in initialize_support(model, lam, pool, config=config,
                                            backend=backend):
                    master.pool.add(s)
                pool = list(master.pool.scenarios)
                qf = np.array([q_of(s, "infeasibility") for s in pool])
                sol = solve_pmp(model, lam, pool, qf, backend=backend)
                if sol is None:
                    raise AmbiguityEmptyError("moment system infeasible")
            fval, probs, pi, kappa = sol
            psp = make_pricer(model, lam, "infeasibility",
                              strategy=settings.pricing,
                              config=settings.pricing_config(),
                              backend=backend)
            eps = max(1e-5 * max(1.0, abs(fval)), settings.feas_certificate)
            phi, scen, bound = _price_decided(psp, pi, kappa, eps)
            rep.cg_rows.append((it, "feasibility", 1, fval, phi,
                                scenario_label(model, scen), 0.0))
            if phi > eps:
                master.pool.add(scen)
                progressed = True
            elif fval > _feas_scale(fval):
                raise RuntimeError(
                    "positive feasibility measure with no scenario to add")
        except RecourseIncompleteError as e:
            master.pool.add(e.scenario)
            progressed = True
        rep.feasibility_cg_s += time.perf_counter() - t0

        if not progressed:
            t0 = time.perf_counter()
            pool = list(master.pool.scenarios)
            qo = np.array([q_of(s, "om_cost") for s in pool])
            sol = solve_pmp(model, lam, pool, qo, backend=backend)
            if sol is None:
                raise AmbiguityEmptyError("moment system infeasible")
            oval, probs, pi, kappa = sol
            psp = make_pricer(model, lam, "om_cost",
                              strategy=settings.pricing,
                              config=settings.pricing_config(),
                              backend=backend)
            eps = 1e-5 * max(1.0, abs(oval))
            phi, scen, bound = _price_decided(psp, pi, kappa, eps)
            rep.cg_rows.append((it, "optimality", 1, oval, phi,
                                scenario_label(model, scen), 0.0))
            master.rescale(oval)
            if phi > eps:
                master.pool.add(scen)
            else:
                candidate = model.investment_cost(lam) + oval
                if candidate < ub - 1e-12:
                    ub = candidate
                    dist = DiscreteDistribution(pool, probs, qo, pi, kappa)
                    best = (lam, WcevResult(oval, dist, CgLog()))
            rep.optimality_cg_s += time.perf_counter() - t0
        rep.ub_history.append(ub)
        rep.scenario_count = len(master.pool)
        rep.gap = (ub - lb) / max(1.0, abs(ub))
        if np.isfinite(ub) and ub - lb <= settings.gap * max(1.0, abs(ub)):
            break
        if (settings.time_limit_s is not None
                and time.perf_counter() - t_start > settings.time_limit_s):
            rep.status = "time_limit"
            rep.total_s = time.perf_counter() - t_start
            raise IterationLimitError("outer time limit", rep)
    else:
        rep.status = "iteration_limit"
        rep.total_s = time.perf_counter() - t_start
        raise IterationLimitError("outer iteration limit", rep)

    lam, opt = best
    rep.algorithm = "basic-ccg"
    _finalize(rep, model, lam, opt, lb, ub, t_start, post_eval, config,
              pricing=settings.pricing)
    return rep


def _as_model(instance_or_model) -> CompactModel:
    if isinstance(instance_or_model, CompactModel):
        return instance_or_model
    if isinstance(instance_or_model, Instance):
        return compile_instance(instance_or_model)
    raise TypeError(type(instance_or_model))


def _finalize(rep: RunReport, model: CompactModel, lam: FirstStageDecision,
              opt: WcevResult, lb: float, ub: float, t_start: float,
              post_eval: bool, config: SolverConfig,
              pricing: str = "kkt") -> None:
    rep.status = "optimal"
    # kernel tolerances can leave the relaxation a hair above the incumbent
    rep.lower_bound = min(lb, ub)
    rep.upper_bound = ub
    rep.gap = max(0.0, (ub - rep.lower_bound) / max(1.0, abs(ub)))
    rep.investment_cost = model.investment_cost(lam)
    rep.worst_case_om = opt.value
    rep.plan = plan_summary(model, lam)
    rep.plan_vector = [round(float(x), 9) for x in lam.values]
    rep.worst_distribution = [
        {"scenario": scenario_label(model, s), "probability": float(p),
         "value": float(q)}
        for s, p, q in zip(opt.distribution.scenarios,
                           opt.distribution.probabilities,
                           opt.distribution.q_values) if p > 1e-9]
    if post_eval:
        ev = post_evaluate(model, lam, config=config, pricing=pricing)
        rep.per_level = ev
    rep.total_s = time.perf_counter() - t_start


def post_evaluate(model: CompactModel, lam: FirstStageDecision,
                  config: SolverConfig | None = None, pricing: str = "auto",
                  backend=None) -> dict:
    """Worst-case expected lost load under a fixed plan, split by level."""
    res = solve_wcev(model, lam, "voll", config=config, pricing=pricing,
                     backend=backend)
    per_level = res.distribution.by_level(model)
    total_prob = sum(v["probability"] for v in per_level.values())
    return {
        "total_worst_case_voll": res.value,
        "levels": per_level,
        "total_probability": total_prob,
    }
