"""Compile an Instance into the compact planning/recourse/uncertainty form.

Three coupled spaces come out of ``compile_instance``:

* the first-stage MILP feasible set (siting, sizing, vessel routing and
  scheduling, hardening, buffering) with its investment cost vector;
* the uncertainty polytope (wind level one-hots, deviation factors and their
  exact product linearizations, outage patterns under per-level budgets,
  box-bounded solar/demand components) plus the first-order moment map whose
  upper bounds shift with hardening decisions;
* a recourse row template in which every row is stored as a four-way term
  split  a.zeta (sense) const + b.lambda + c.xi + sum d.(xi*lambda),
  so the same template evaluates to the scenario dispatch LP (both stages
  fixed), the pricing subproblem (first stage fixed), or a master block
  (scenario fixed) without re-deriving anything.

Decision-dependent demand on resource islands is carried entirely by the
xi*lambda products against the per-node siting indicator, which realizes the
masking projection: zeroing a node's indicator zeroes its induced load in
every row that references it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .instance import Instance, ValidationError
from .kernel import INF, LE, GE, EQ, LinearProblem

OBJECTIVE_MODES = ("om_cost", "infeasibility", "voll")

DEFAULT_VERTEX_CAP = 10_000

#: absolute slack added to shedding-cap rows in every capped dispatch LP,
#: absorbing MILP-tolerance noise from plans produced by the master
CAP_SLACK = 1e-6


class CompileError(ValueError):
    """A required bound or coefficient cannot be derived from the instance."""


class VertexCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class VariableIndex:
    name: str
    stage: str  # first | second | uncertainty
    kind: str  # binary | continuous
    lb: float = 0.0
    ub: float = INF


LinExpr = dict[int, float]


@dataclass
class Row:
    """First-stage or uncertainty-space row: coefs (sense) rhs."""

    name: str
    coefs: LinExpr
    sense: str
    rhs: float


@dataclass
class RecourseRow:
    """Dispatch-space row in four-way split form.

    a.zeta (sense) const + lam.lambda + xi.xi + sum bil[(x,l)]*xi_x*lambda_l
    Senses are normalized to LE / EQ at construction.
    ``tag`` selects membership: core rows belong to every variant, cap rows
    only to the capped dispatch set, slack rows only to the relaxed
    feasibility-measuring set.
    """

    name: str
    a: LinExpr
    sense: str
    const: float = 0.0
    lam: LinExpr = field(default_factory=dict)
    xi: LinExpr = field(default_factory=dict)
    bil: dict[tuple[int, int], float] = field(default_factory=dict)
    tag: str = "core"  # core | cap | slack

    def rhs_value(self, lam_vec: np.ndarray, xi_vec: np.ndarray) -> float:
        r = self.const
        for l, v in self.lam.items():
            r += v * lam_vec[l]
        for x, v in self.xi.items():
            r += v * xi_vec[x]
        for (x, l), v in self.bil.items():
            r += v * xi_vec[x] * lam_vec[l]
        return r

    def xi_terms_at(self, lam_vec: np.ndarray) -> tuple[float, LinExpr]:
        """Collapse lambda: rhs = const' + xi'.xi for a fixed first stage."""
        c = self.const
        for l, v in self.lam.items():
            c += v * lam_vec[l]
        xi = dict(self.xi)
        for (x, l), v in self.bil.items():
            xi[x] = xi.get(x, 0.0) + v * lam_vec[l]
        return c, xi

    def lam_terms_at(self, xi_vec: np.ndarray) -> tuple[float, LinExpr]:
        """Collapse xi: rhs = const' + lam'.lambda for a fixed scenario."""
        c = self.const
        for x, v in self.xi.items():
            c += v * xi_vec[x]
        lam = dict(self.lam)
        for (x, l), v in self.bil.items():
            lam[l] = lam.get(l, 0.0) + v * xi_vec[x]
        return c, lam


@dataclass
class MomentRow:
    """One direction of a first-order moment bound: E[psi.xi] <= g1 - g2.lambda."""

    name: str
    psi: LinExpr
    gamma1: float
    gamma2: LinExpr = field(default_factory=dict)

    def bound_at(self, lam_vec: np.ndarray) -> float:
        return self.gamma1 - sum(v * lam_vec[l] for l, v in self.gamma2.items())

    def psi_value(self, xi_vec: np.ndarray) -> float:
        return sum(v * xi_vec[x] for x, v in self.psi.items())


@dataclass
class BoundExpr:
    """First-stage-affine bound for a dispatch variable: const + coefs.lambda."""

    const: float = 0.0
    coefs: LinExpr = field(default_factory=dict)

    def value(self, lam_vec: np.ndarray) -> float:
        return self.const + sum(v * lam_vec[l] for l, v in self.coefs.items())


class Scenario:
    """One uncertainty realization as a vector over the xi index."""

    __slots__ = ("values", "_key")

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=float)
        self._key = None

    def key(self) -> bytes:
        if self._key is None:
            self._key = hashlib.sha1(
                np.round(self.values, 9).tobytes()).digest()
        return self._key

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


class FirstStageDecision:
    """One first-stage plan as a vector over the lambda index."""

    __slots__ = ("values", "_key")

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=float)
        self._key = None

    def key(self) -> bytes:
        if self._key is None:
            self._key = hashlib.sha1(
                np.round(self.values, 9).tobytes()).digest()
        return self._key

    def __eq__(self, other):
        return (isinstance(other, FirstStageDecision)
                and self.key() == other.key())

    def __hash__(self):
        return hash(self.key())


class CompactModel:
    """Everything the decomposition algorithms need, fully indexed."""

    def __init__(self, inst: Instance):
        self.instance = inst
        # first stage
        self.lam_vars: list[VariableIndex] = []
        self.lam_index: dict[str, int] = {}
        self.lam_rows: list[Row] = []
        self.cost: LinExpr = {}
        # uncertainty
        self.xi_vars: list[VariableIndex] = []
        self.xi_index: dict[str, int] = {}
        self.omega_rows: list[Row] = []
        self.mask_map: dict[int, int] = {}  # xi idx -> lambda idx (indicator)
        self.moment_rows: list[MomentRow] = []
        # recourse
        self.zeta_vars: list[VariableIndex] = []
        self.zeta_index: dict[str, int] = {}
        self.rec_rows: list[RecourseRow] = []
        self.obj_om: LinExpr = {}
        self.obj_infeas: LinExpr = {}
        self.obj_voll: LinExpr = {}
        self.zeta_lb: list[BoundExpr] = []
        self.zeta_ub: list[BoundExpr] = []
        # dispatch variables whose bounds are provably never active at some
        # optimum (the pricing system may omit their bound rows)
        self.slack_bounds: set[int] = set()

    # -- variable helpers ---------------------------------------------------

    def add_lam(self, name, kind="binary", lb=0.0, ub=1.0) -> int:
        i = len(self.lam_vars)
        self.lam_vars.append(VariableIndex(name, "first", kind, lb, ub))
        self.lam_index[name] = i
        return i

    def add_xi(self, name, kind, lb, ub) -> int:
        i = len(self.xi_vars)
        self.xi_vars.append(VariableIndex(name, "uncertainty", kind, lb, ub))
        self.xi_index[name] = i
        return i

    def add_zeta(self, name, lb=0.0, ub=INF,
                 lb_expr: BoundExpr | None = None,
                 ub_expr: BoundExpr | None = None) -> int:
        i = len(self.zeta_vars)
        self.zeta_vars.append(VariableIndex(name, "second", "continuous",
                                            lb, ub))
        self.zeta_index[name] = i
        self.zeta_lb.append(lb_expr if lb_expr is not None
                            else BoundExpr(lb))
        self.zeta_ub.append(ub_expr if ub_expr is not None
                            else BoundExpr(ub))
        return i

    def lam(self, name: str) -> int:
        return self.lam_index[name]

    def xi(self, name: str) -> int:
        return self.xi_index[name]

    def zeta(self, name: str) -> int:
        return self.zeta_index[name]

    @property
    def n_lam(self) -> int:
        return len(self.lam_vars)

    @property
    def n_xi(self) -> int:
        return len(self.xi_vars)

    @property
    def n_zeta(self) -> int:
        return len(self.zeta_vars)

    # -- row helpers ----------------------------------------------------------

    def add_lam_row(self, name, coefs, sense, rhs) -> None:
        self.lam_rows.append(Row(name, dict(coefs), sense, float(rhs)))

    def add_omega_row(self, name, coefs, sense, rhs) -> None:
        self.omega_rows.append(Row(name, dict(coefs), sense, float(rhs)))

    def add_rec(self, name, a, sense, const=0.0, lam=None, xi=None,
                bil=None, tag="core") -> None:
        if sense == GE:  # normalize
            a = {k: -v for k, v in a.items()}
            const = -const
            lam = {k: -v for k, v in (lam or {}).items()}
            xi = {k: -v for k, v in (xi or {}).items()}
            bil = {k: -v for k, v in (bil or {}).items()}
            sense = LE
        self.rec_rows.append(RecourseRow(
            name, dict(a), sense, float(const), dict(lam or {}),
            dict(xi or {}), dict(bil or {}), tag))

    # -- evaluation -----------------------------------------------------------

    def investment_cost(self, lam: FirstStageDecision) -> float:
        return float(sum(v * lam.values[i] for i, v in self.cost.items()))

    def rows_for_mode(self, mode: str) -> list[RecourseRow]:
        if mode not in OBJECTIVE_MODES:
            raise ValueError(f"unknown objective mode {mode!r}")
        want = {"om_cost": ("core", "cap"),
                "infeasibility": ("core", "slack"),
                "voll": ("core",)}[mode]
        return [r for r in self.rec_rows if r.tag in want]

    def objective_for_mode(self, mode: str) -> LinExpr:
        return {"om_cost": self.obj_om, "infeasibility": self.obj_infeas,
                "voll": self.obj_voll}[mode]

    def mask_scenario(self, lam: FirstStageDecision,
                      xi: Scenario) -> Scenario:
        """Projection xi -> xi o (mask(lambda)): zero masked components
        wherever the owning node's siting indicator is 0."""
        out = self.xi_values_masked(lam, xi.values)
        return Scenario(out)

    def xi_values_masked(self, lam: FirstStageDecision,
                         values: np.ndarray) -> np.ndarray:
        out = np.array(values, dtype=float)
        for x, l in self.mask_map.items():
            out[x] = out[x] * round(lam.values[l])
        return out

    def scenario_in_sample_space(self, xi: Scenario,
                                 tol: float = 1e-7) -> bool:
        v = xi.values
        for var, val in zip(self.xi_vars, v):
            if val < var.lb - tol or val > var.ub + tol:
                return False
        for row in self.omega_rows:
            lhs = sum(c * v[j] for j, c in row.coefs.items())
            if row.sense == LE and lhs > row.rhs + tol:
                return False
            if row.sense == EQ and abs(lhs - row.rhs) > tol:
                return False
            if row.sense == GE and lhs < row.rhs - tol:
                return False
        return True

    def first_stage_feasible(self, lam: FirstStageDecision,
                             tol: float = 1e-6) -> tuple[bool, str]:
        v = lam.values
        for var, val in zip(self.lam_vars, v):
            if val < var.lb - tol or val > var.ub + tol:
                return False, f"{var.name} out of bounds"
            if var.kind == "binary" and abs(val - round(val)) > tol:
                return False, f"{var.name} not integral"
        for row in self.lam_rows:
            lhs = sum(c * v[j] for j, c in row.coefs.items())
            if row.sense == LE and lhs > row.rhs + tol:
                return False, row.name
            if row.sense == GE and lhs < row.rhs - tol:
                return False, row.name
            if row.sense == EQ and abs(lhs - row.rhs) > tol:
                return False, row.name
        return True, ""

    def moment_bounds_at(self, lam: FirstStageDecision) -> np.ndarray:
        return np.array([m.bound_at(lam.values) for m in self.moment_rows])

    def psi_matrix(self, scenarios: list[Scenario]) -> np.ndarray:
        """Column j holds psi(xi_j) over the moment rows."""
        out = np.zeros((len(self.moment_rows), len(scenarios)))
        for i, m in enumerate(self.moment_rows):
            for j, s in enumerate(scenarios):
                out[i, j] = m.psi_value(s.values)
        return out

    def zeta_bounds_at(self, lam: FirstStageDecision
                       ) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([e.value(lam.values) for e in self.zeta_lb])
        ub = np.array([e.value(lam.values) for e in self.zeta_ub])
        bad = [self.zeta_vars[i].name for i in range(self.n_zeta)
               if not (np.isfinite(lb[i]) and np.isfinite(ub[i]))]
        if bad:
            raise CompileError(
                f"no finite dispatch bounds derivable for {bad[:5]}")
        return lb, ub

    def dump_triplets(self) -> str:
        """Debug dump of the compiled spaces for golden-file diffing."""
        prob = recourse_lp(self, FirstStageDecision(np.zeros(self.n_lam)),
                           Scenario(np.zeros(self.n_xi)), "om_cost")
        lines = ["# first-stage rows"]
        for r in self.lam_rows:
            body = " ".join(f"{j}:{v:.10g}" for j, v in sorted(r.coefs.items()))
            lines.append(f"{r.name} {r.sense} {r.rhs:.10g} | {body}")
        lines.append("# uncertainty rows")
        for r in self.omega_rows:
            body = " ".join(f"{j}:{v:.10g}" for j, v in sorted(r.coefs.items()))
            lines.append(f"{r.name} {r.sense} {r.rhs:.10g} | {body}")
        lines.append("# moment rows")
        for m in self.moment_rows:
            body = " ".join(f"{j}:{v:.10g}" for j, v in sorted(m.psi.items()))
            g2 = " ".join(f"{j}:{v:.10g}" for j, v in sorted(m.gamma2.items()))
            lines.append(f"{m.name} <= {m.gamma1:.10g} - [{g2}] | {body}")
        lines.append(prob.dump_triplets())
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# compilation


def compile_instance(inst: Instance) -> CompactModel:
    m = CompactModel(inst)
    _build_first_stage(m)
    _build_uncertainty(m)
    _build_recourse(m)
    return m


def _res_device_fields() -> list[tuple[str, str]]:
    return [("wt", "wt_mw"), ("pv", "pv_mw"), ("elz", "elz_mw"),
            ("hst", "hst_kg"), ("bsb", "bsb_mwh")]


def _he_device_fields() -> list[tuple[str, str]]:
    return [("pv", "pv_mw"), ("fc", "fc_mw"), ("hst", "hst_kg"),
            ("bsb", "bsb_mwh")]


def _transit(v, a: str, b: str) -> int | None:
    if a in v.transit_steps and b in v.transit_steps[a]:
        return v.transit_steps[a][b]
    if b in v.transit_steps and a in v.transit_steps[b]:
        return v.transit_steps[b][a]
    return None


def _vessel_islands(m: CompactModel, v) -> tuple[list[str], list[str]]:
    """Islands a vessel can touch (has a declared transit to/from)."""
    res = [s.id for s in m.instance.resource_islands]
    load = [s.id for s in m.instance.load_islands]
    touch = set()
    for a in res + load:
        for b in res + load:
            if a != b and _transit(v, a, b) is not None:
                touch.add(a)
                touch.add(b)
    return ([s for s in res if s in touch], [s for s in load if s in touch])


def _arcs(m: CompactModel, v) -> list[tuple[str, str]]:
    """Admissible route arcs: declared transit, no self loops, and no
    load->load legs (a trip closes when it enters a load island)."""
    res, load = _vessel_islands(m, v)
    out = []
    for a in res + load:
        for b in res + load:
            if a == b or (a in load and b in load):
                continue
            if _transit(v, a, b) is not None:
                out.append((a, b))
    return out


def _build_first_stage(m: CompactModel) -> None:
    inst = m.instance
    cat = inst.catalog
    T = inst.time.n

    # siting + sizing on resource islands
    for isl, n in inst.resource_nodes():
        for dev, fld in _res_device_fields():
            lo, hi = getattr(n, fld)
            if hi <= 0:
                continue
            a = m.add_lam(f"a_{dev}[{n.id}]")
            cap = m.add_lam(f"cap_{dev}[{n.id}]", "continuous", 0.0, hi)
            m.add_lam_row(f"cap_hi_{dev}[{n.id}]", {cap: 1.0, a: -hi}, LE, 0.0)
            m.add_lam_row(f"cap_lo_{dev}[{n.id}]", {cap: 1.0, a: -lo}, GE, 0.0)
            m.cost[cap] = cat.crf(dev) * cat.devices[dev].inv_cost
        # siting indicator: 1 iff any renewable generation is placed
        iota = m.add_lam(f"sited[{n.id}]")
        gens = [m.lam_index.get(f"a_{o}[{n.id}]") for o in ("wt", "pv")]
        gens = [g for g in gens if g is not None]
        if gens:
            for g in gens:
                m.add_lam_row(f"sited_ge[{n.id},{m.lam_vars[g].name}]",
                              {iota: 1.0, g: -1.0}, GE, 0.0)
            m.add_lam_row(f"sited_le[{n.id}]",
                          {iota: 1.0, **{g: -1.0 for g in gens}}, LE, 0.0)
        else:
            m.add_lam_row(f"sited_le[{n.id}]", {iota: 1.0}, LE, 0.0)

    # siting + sizing on load-island candidate nodes
    for isl, n in inst.he_nodes():
        for dev, fld in _he_device_fields():
            lo, hi = getattr(n, fld)
            if hi <= 0:
                continue
            a = m.add_lam(f"a_{dev}[{n.id}]")
            cap = m.add_lam(f"cap_{dev}[{n.id}]", "continuous", 0.0, hi)
            m.add_lam_row(f"cap_hi_{dev}[{n.id}]", {cap: 1.0, a: -hi}, LE, 0.0)
            m.add_lam_row(f"cap_lo_{dev}[{n.id}]", {cap: 1.0, a: -lo}, GE, 0.0)
            m.cost[cap] = cat.crf(dev) * cat.devices[dev].inv_cost

    # vessels: purchase, allocation, trips, routes, events, status
    for v in inst.vessels:
        res_isl, load_isl = _vessel_islands(m, v)
        K = v.max_trips
        av = m.add_lam(f"a_ves[{v.id}]")
        m.cost[av] = cat.crf("ves") * v.purchase_cost_kusd
        homes = {}
        pre = {}
        for s in load_isl:
            homes[s] = m.add_lam(f"home[{v.id},{s}]")
            # docked at s across the cycle boundary (the schedule anchor)
            pre[s] = m.add_lam(f"boundary_dock[{v.id},{s}]")
            m.add_lam_row(f"boundary_dock_gate[{v.id},{s}]",
                          {pre[s]: 1.0, homes[s]: -1.0}, LE, 0.0)
        m.add_lam_row(f"fleet_alloc[{v.id}]",
                      {**{h: 1.0 for h in homes.values()}, av: -1.0}, EQ, 0.0)
        # every purchased vessel crosses the cycle boundary docked at home
        m.add_lam_row(f"boundary_dock_total[{v.id}]",
                      {**{p: 1.0 for p in pre.values()}, av: -1.0}, EQ, 0.0)
        trips = {}
        for k in range(1, K + 1):
            z = m.add_lam(f"trip[{v.id},{k}]")
            trips[k] = z
            m.cost[z] = cat.crf("ves") * v.trip_cost_kusd[k - 1]
            m.add_lam_row(f"trip_gate[{v.id},{k}]", {z: 1.0, av: -1.0},
                          LE, 0.0)
            if k > 1:
                m.add_lam_row(f"trip_order[{v.id},{k}]",
                              {z: 1.0, trips[k - 1]: -1.0}, LE, 0.0)
        arcs = _arcs(m, v)
        route = {}
        for k in range(1, K + 1):
            for (a, b) in arcs:
                y = m.add_lam(f"route[{v.id},{k},{a},{b}]")
                route[(k, a, b)] = y
                m.add_lam_row(f"route_gate[{v.id},{k},{a},{b}]",
                              {y: 1.0, trips[k]: -1.0}, LE, 0.0)
        # route balance
        for k in range(1, K + 1):
            for s in load_isl:
                coefs = {}
                for (a, b) in arcs:
                    if a == s:
                        coefs[route[(k, a, b)]] = (
                            coefs.get(route[(k, a, b)], 0.0) + 1.0)
                    if b == s:
                        coefs[route[(k, a, b)]] = (
                            coefs.get(route[(k, a, b)], 0.0) - 1.0)
                coefs[homes[s]] = coefs.get(homes[s], 0.0) - 1.0
                m.add_lam_row(f"route_balance_load[{v.id},{k},{s}]",
                              coefs, LE, 0.0)
            for s in res_isl:
                coefs = {}
                for (a, b) in arcs:
                    if a == s:
                        coefs[route[(k, a, b)]] = (
                            coefs.get(route[(k, a, b)], 0.0) + 1.0)
                    if b == s:
                        coefs[route[(k, a, b)]] = (
                            coefs.get(route[(k, a, b)], 0.0) - 1.0)
                m.add_lam_row(f"route_balance_res[{v.id},{k},{s}]",
                              coefs, EQ, 0.0)

        # events: resource-island arrivals live on their own trip; a
        # load-island arrival of trip k is the closing return of trip k-1
        # (the k=1 dock is the boundary_dock state, not an event)
        arr, dep = {}, {}
        for k in range(1, K + 2):
            for s in res_isl + load_isl:
                if s in load_isl and k == 1:
                    continue
                if k == K + 1 and s not in load_isl:
                    continue
                for t in range(1, T + 1):
                    arr[(k, s, t)] = m.add_lam(f"arr[{v.id},{k},{s},{t}]")
        for k in range(1, K + 1):
            for s in res_isl + load_isl:
                for t in range(1, T + 1):
                    dep[(k, s, t)] = m.add_lam(f"dep[{v.id},{k},{s},{t}]")

        def esum(k, s):
            if s in load_isl and k == 1:
                return {pre[s]: 1.0}
            return {arr[(k, s, t)]: 1.0 for t in range(1, T + 1)
                    if (k, s, t) in arr}

        def lsum(k, s):
            return {dep[(k, s, t)]: 1.0 for t in range(1, T + 1)}

        def etime(k, s):
            return {arr[(k, s, t)]: float(t) for t in range(1, T + 1)
                    if (k, s, t) in arr}

        def ltime(k, s):
            return {dep[(k, s, t)]: float(t) for t in range(1, T + 1)}

        # arc-event ties
        for k in range(1, K + 1):
            for s in res_isl:
                ins = {route[(k, a, s)]: -1.0 for (a, b) in arcs if b == s}
                m.add_lam_row(f"arr_count_res[{v.id},{k},{s}]",
                              {**esum(k, s), **ins}, EQ, 0.0)
            for s in res_isl + load_isl:
                outs = {route[(k, s, b)]: -1.0 for (a, b) in arcs if a == s}
                m.add_lam_row(f"dep_count[{v.id},{k},{s}]",
                              {**lsum(k, s), **outs}, EQ, 0.0)
        for s in load_isl:
            for k in range(1, K + 1):
                ins = {route[(k, a, s)]: -1.0 for (a, b) in arcs if b == s}
                m.add_lam_row(f"arr_count_load[{v.id},{k + 1},{s}]",
                              {**esum(k + 1, s), **ins}, EQ, 0.0)

        # McCormick products shared by the visit/timing consistency rows
        tmax = float(T)

        def product(pname, y, expr, bound):
            w = m.add_lam(pname, "continuous", 0.0, bound)
            m.add_lam_row(f"{pname}.le_y", {w: 1.0, y: -bound}, LE, 0.0)
            m.add_lam_row(f"{pname}.le_x", {w: 1.0,
                                            **{j: -c for j, c in expr.items()}},
                          LE, 0.0)
            m.add_lam_row(f"{pname}.ge", {w: 1.0, y: -bound,
                                          **{j: -c for j, c in expr.items()}},
                          GE, -bound)
            return w

        for k in range(1, K + 1):
            w2e, w2l, w3e, w3l = {}, {}, {}, {}
            for (a, b) in arcs:
                y = route[(k, a, b)]
                w2e[(a, b)] = product(f"w_cnt_arr[{v.id},{k},{a},{b}]",
                                      y, esum(k, a), 1.0)
                w2l[(a, b)] = product(f"w_cnt_dep[{v.id},{k},{a},{b}]",
                                      y, lsum(k, a), 1.0)
                w3l[(a, b)] = product(f"w_t_dep[{v.id},{k},{a},{b}]",
                                      y, ltime(k, a), tmax)
                if etime(k, a):
                    w3e[(a, b)] = product(f"w_t_arr[{v.id},{k},{a},{b}]",
                                          y, etime(k, a), tmax)
            for s in res_isl + load_isl:
                outs = [(a, b) for (a, b) in arcs if a == s]
                if not outs:
                    continue
                # visit match: a departure on an issued trip pairs with the
                # corresponding dock state (arrival event or boundary dock)
                coefs = {}
                for ab in outs:
                    coefs[w2e[ab]] = coefs.get(w2e[ab], 0.0) + 1.0
                    coefs[w2l[ab]] = coefs.get(w2l[ab], 0.0) - 1.0
                m.add_lam_row(f"visit_match[{v.id},{k},{s}]", coefs, EQ, 0.0)
                # berthing: departure time = arrival time + dwell (the
                # boundary dock has no arrival event; its departure is free)
                if not (s in load_isl and k == 1):
                    de = float(v.berth_steps.get(s, 1))
                    coefs = {}
                    for ab in outs:
                        coefs[w3e[ab]] = coefs.get(w3e[ab], 0.0) + 1.0
                        coefs[route[(k,) + ab]] = coefs.get(
                            route[(k,) + ab], 0.0) + de
                        coefs[w3l[ab]] = coefs.get(w3l[ab], 0.0) - 1.0
                    m.add_lam_row(f"berth_time[{v.id},{k},{s}]", coefs,
                                  EQ, 0.0)
            for (a, b) in arcs:
                y = route[(k, a, b)]
                tr = float(_transit(v, a, b))
                if b in res_isl:
                    wbe = product(f"w_t_arr_to[{v.id},{k},{a},{b}]",
                                  y, etime(k, b), tmax)
                    m.add_lam_row(f"transit_res[{v.id},{k},{a},{b}]",
                                  {w3l[(a, b)]: 1.0, y: tr, wbe: -1.0},
                                  EQ, 0.0)
                else:
                    wbe = product(f"w_t_arr_next[{v.id},{k},{a},{b}]",
                                  y, etime(k + 1, b), tmax)
                    m.add_lam_row(f"transit_load[{v.id},{k},{a},{b}]",
                                  {w3l[(a, b)]: 1.0, y: tr, wbe: -1.0},
                                  EQ, 0.0)

        # time-stamped status: in-port and at-sea, cyclically closed
        for s in res_isl + load_isl:
            for t in range(1, T + 1):
                mu = m.add_lam(f"mu[{v.id},{s},{t}]", "continuous", 0.0, 1.0)
                coefs = {mu: 1.0}
                if s in load_isl:
                    coefs[pre[s]] = -1.0
                for tp in range(1, t + 1):
                    for k in range(1, K + 2):
                        if (k, s, tp) in arr:
                            coefs[arr[(k, s, tp)]] = coefs.get(
                                arr[(k, s, tp)], 0.0) - 1.0
                    for k in range(1, K + 1):
                        if (k, s, tp) in dep:
                            coefs[dep[(k, s, tp)]] = coefs.get(
                                dep[(k, s, tp)], 0.0) + 1.0
                m.add_lam_row(f"in_port[{v.id},{s},{t}]", coefs, EQ, 0.0)
        for s in load_isl:
            m.add_lam_row(f"dock_cycle[{v.id},{s}]",
                          {m.lam(f"mu[{v.id},{s},{T}]"): 1.0, pre[s]: -1.0},
                          EQ, 0.0)
        for t in range(1, T + 1):
            beta = m.add_lam(f"beta[{v.id},{t}]", "continuous", 0.0, 1.0)
            coefs = {beta: 1.0, av: -1.0}
            for s in res_isl + load_isl:
                coefs[m.lam(f"mu[{v.id},{s},{t}]")] = 1.0
            m.add_lam_row(f"at_sea[{v.id},{t}]", coefs, EQ, 0.0)

    # per-island vessel allocation caps
    for isl in inst.load_islands:
        coefs = {}
        for v in inst.vessels:
            nm = f"home[{v.id},{isl.id}]"
            if nm in m.lam_index:
                coefs[m.lam(nm)] = 1.0
        if coefs:
            m.add_lam_row(f"island_vessel_cap[{isl.id}]", coefs, LE,
                          float(isl.max_vessels))

    # hardening and buffering with budgets
    hard = {}
    for isl, e in inst.hardenable_edges():
        g = m.add_lam(f"harden[{e.id}]")
        hard[e.id] = g
        m.cost[g] = cat.crf("gd") * e.hardening_cost_kusd
    if hard:
        m.add_lam_row("hardening_budget", {g: 1.0 for g in hard.values()},
                      LE, float(inst.limits.max_hardened_lines))
    buf = {}
    for j, cost in sorted(inst.economics.buffer_cost_kusd_per_kg.items()):
        b = m.add_lam(f"buffer[{j}]", "continuous", 0.0,
                      inst.limits.max_buffer_kg)
        buf[j] = b
        m.cost[b] = cat.crf("pr") * cost
    if buf:
        m.add_lam_row("buffer_budget", {b: 1.0 for b in buf.values()},
                      LE, float(inst.limits.max_buffer_kg))


def _build_uncertainty(m: CompactModel) -> None:
    inst = m.instance
    u = inst.uncertainty
    T = inst.time.n
    wt_nodes = inst.wt_nodes()
    pv_nodes = inst.pv_nodes()

    lvl = {w.id: m.add_xi(f"lvl[{w.id}]", "binary", 0.0, 1.0)
           for w in inst.wind_levels}
    m.add_omega_row("one_level", {i: 1.0 for i in lvl.values()}, EQ, 1.0)

    tau_up, tau_dn = {}, {}
    for j in wt_nodes:
        for t in range(T):
            bu = u.tau_up_box.get(j, ((0.0, 1.0),) * T)[t]
            bd = u.tau_dn_box.get(j, ((0.0, 1.0),) * T)[t]
            tau_up[(j, t)] = m.add_xi(f"tau_up[{j},{t}]", "continuous", *bu)
            tau_dn[(j, t)] = m.add_xi(f"tau_dn[{j},{t}]", "continuous", *bd)
    # exact products z = lvl * tau (lvl binary)
    for w in inst.wind_levels:
        for j in wt_nodes:
            for t in range(T):
                for pre, tau in (("zup", tau_up), ("zdn", tau_dn)):
                    box = (u.tau_up_box if pre == "zup"
                           else u.tau_dn_box).get(j, ((0.0, 1.0),) * T)[t]
                    lo, hi = box
                    z = m.add_xi(f"{pre}[{w.id},{j},{t}]", "continuous",
                                 min(lo, 0.0), hi)
                    tv = tau[(j, t)]
                    lv = lvl[w.id]
                    m.add_omega_row(f"{pre}_hi1[{w.id},{j},{t}]",
                                    {z: 1.0, lv: -hi}, LE, 0.0)
                    m.add_omega_row(f"{pre}_lo1[{w.id},{j},{t}]",
                                    {z: 1.0, lv: -lo}, GE, 0.0)
                    m.add_omega_row(f"{pre}_hi2[{w.id},{j},{t}]",
                                    {z: 1.0, tv: -1.0, lv: -lo}, LE, -lo)
                    m.add_omega_row(f"{pre}_lo2[{w.id},{j},{t}]",
                                    {z: 1.0, tv: -1.0, lv: -hi}, GE, -hi)

    # outage indicators under per-level budgets
    line_ok = {}
    for isl, e in inst.hardenable_edges():
        line_ok[e.id] = m.add_xi(f"line_ok[{e.id}]", "binary", 0.0, 1.0)
    if line_ok:
        coefs = {x: -1.0 for x in line_ok.values()}
        for w in inst.wind_levels:
            coefs[lvl[w.id]] = -float(w.line_outage_budget)
        m.add_omega_row("line_budget", coefs, LE, -float(len(line_ok)))
    ves_ok = {}
    for v in inst.vessels:
        ves_ok[v.id] = m.add_xi(f"ves_ok[{v.id}]", "binary", 0.0, 1.0)
    if ves_ok:
        coefs = {x: -1.0 for x in ves_ok.values()}
        for w in inst.wind_levels:
            coefs[lvl[w.id]] = -float(w.vessel_outage_budget)
        m.add_omega_row("vessel_budget", coefs, LE, -float(len(ves_ok)))

    # solar factors and demands (resource-island demands are decision-masked)
    res_nodes = {n.id for _, n in inst.resource_nodes()}
    for j in pv_nodes:
        boxes = u.pv_factor_box.get(j)
        if boxes is None:
            raise CompileError(f"pv candidate {j} lacks pv_factor_box")
        for t in range(T):
            m.add_xi(f"pvf[{j},{t}]", "continuous", *boxes[t])
    for j, boxes in sorted(u.load_p_box.items()):
        masked = j in res_nodes
        for t in range(T):
            lo, hi = boxes[t]
            x = m.add_xi(f"dem_p[{j},{t}]", "continuous",
                         0.0 if masked else lo, hi)
            if masked:
                m.mask_map[x] = m.lam(f"sited[{j}]")
    for j, boxes in sorted(u.load_q_box.items()):
        masked = j in res_nodes
        for t in range(T):
            lo, hi = boxes[t]
            x = m.add_xi(f"dem_q[{j},{t}]", "continuous",
                         0.0 if masked else lo, hi)
            if masked:
                m.mask_map[x] = m.lam(f"sited[{j}]")

    # first-order moment rows (two directions each)
    def mom(name, xi_idx, lo, hi, gamma2_lo=None):
        m.moment_rows.append(MomentRow(f"{name}.hi", {xi_idx: 1.0}, hi))
        m.moment_rows.append(MomentRow(f"{name}.lo", {xi_idx: -1.0}, -lo,
                                       dict(gamma2_lo or {})))

    for w in inst.wind_levels:
        mom(f"E_lvl[{w.id}]", lvl[w.id], w.prob_lo, w.prob_hi)
    for v in inst.vessels:
        if v.id in u.vessel_intact_moment:
            lo, hi = u.vessel_intact_moment[v.id]
            mom(f"E_ves_ok[{v.id}]", ves_ok[v.id], lo, hi)
    for isl, e in inst.hardenable_edges():
        lo, hi = u.line_intact_moment[e.id]
        eps = u.hardening_moment_drop[e.id]
        # hardening narrows the admissible intactness expectation by eps:
        # the floor rises, shrinking the mass an adversary may place on
        # failure scenarios (the bound-at value is gamma1 - gamma2.lambda,
        # and the floor row carries psi = -intactness)
        mom(f"E_line_ok[{e.id}]", line_ok[e.id], lo, hi,
            gamma2_lo={m.lam(f"harden[{e.id}]"): eps})
    for label, moments, pre in (
            ("E_tau_up", u.tau_up_moment, "tau_up"),
            ("E_tau_dn", u.tau_dn_moment, "tau_dn"),
            ("E_pvf", u.pv_factor_moment, "pvf"),
            ("E_dem_p", u.load_p_moment, "dem_p"),
            ("E_dem_q", u.load_q_moment, "dem_q")):
        for j, arr in sorted(moments.items()):
            for t in range(T):
                nm = f"{pre}[{j},{t}]"
                if nm not in m.xi_index:
                    continue
                lo, hi = arr[t]
                mom(f"{label}[{j},{t}]", m.xi(nm), lo, hi)


def _build_recourse(m: CompactModel) -> None:
    inst = m.instance
    cat = inst.catalog
    T = inst.time.n
    dt = inst.time.step_hours
    scale = inst.time.cycles_per_year
    u = inst.uncertainty
    levels = inst.wind_levels

    def lam_opt(name):
        return m.lam_index.get(name)

    def zname(kind, j, t):
        return f"{kind}[{j},{t}]"

    # ---------------- resource islands ----------------
    for isl, n in inst.resource_nodes():
        j = n.id
        has = {dev: lam_opt(f"cap_{dev}[{j}]") is not None
               for dev, _ in _res_device_fields()}
        dem_boxes = u.load_p_box.get(j)
        sited = m.lam(f"sited[{j}]")
        for t in range(T):
            # generation limited by availability x capacity (both uncertain
            # factor and sizing decision: pure product terms)
            gens = []
            if has["wt"]:
                p = m.add_zeta(zname("p_wt", j, t),
                               ub_expr=BoundExpr(0.0, {m.lam(f"cap_wt[{j}]"): 1.0}))
                bil = {}
                for w in levels:
                    bil[(m.xi(f"lvl[{w.id}]"), m.lam(f"cap_wt[{j}]"))] = \
                        w.wt_nominal[j][t]
                    bil[(m.xi(f"zup[{w.id},{j},{t}]"),
                         m.lam(f"cap_wt[{j}]"))] = w.wt_up[j][t]
                    bil[(m.xi(f"zdn[{w.id},{j},{t}]"),
                         m.lam(f"cap_wt[{j}]"))] = -w.wt_down[j][t]
                m.add_rec(f"wt_avail[{j},{t}]", {p: 1.0}, LE, bil=bil)
                m.obj_om[p] = scale * dt * cat.devices["wt"].om_cost
                gens.append(p)
            if has["pv"]:
                cap = m.lam(f"cap_pv[{j}]")
                hi = max(b[1] for b in u.pv_factor_box[j])
                p = m.add_zeta(zname("p_pv", j, t),
                               ub_expr=BoundExpr(0.0, {cap: hi}))
                m.add_rec(f"pv_avail[{j},{t}]", {p: 1.0}, LE,
                          bil={(m.xi(f"pvf[{j},{t}]"), cap): 1.0})
                m.obj_om[p] = scale * dt * cat.devices["pv"].om_cost
                gens.append(p)
            if has["bsb"]:
                cap = m.lam(f"cap_bsb[{j}]")
                ch = m.add_zeta(zname("bsb_ch", j, t),
                                ub_expr=BoundExpr(0.0, {cap: cat.bsb_charge_rate_frac}))
                ds = m.add_zeta(zname("bsb_dis", j, t),
                                ub_expr=BoundExpr(0.0, {cap: cat.bsb_discharge_rate_frac}))
                m.add_rec(f"bsb_ch_cap[{j},{t}]", {ch: 1.0}, LE,
                          lam={cap: cat.bsb_charge_rate_frac})
                m.add_rec(f"bsb_dis_cap[{j},{t}]", {ds: 1.0}, LE,
                          lam={cap: cat.bsb_discharge_rate_frac})
                m.obj_om[ch] = scale * dt * cat.devices["bsb"].om_cost
                m.obj_om[ds] = scale * dt * cat.devices["bsb"].om_cost
            if has["elz"]:
                cap = m.lam(f"cap_elz[{j}]")
                pe = m.add_zeta(zname("p_elz", j, t),
                                ub_expr=BoundExpr(0.0, {cap: 1.0}))
                me = m.add_zeta(zname("m_elz", j, t),
                                ub_expr=BoundExpr(0.0, {cap: cat.elz_eff * cat.elz_kg_per_mwh}))
                m.add_rec(f"elz_cap[{j},{t}]", {pe: 1.0}, LE, lam={cap: 1.0})
                m.add_rec(f"elz_conv[{j},{t}]",
                          {me: 1.0, pe: -cat.elz_eff * cat.elz_kg_per_mwh},
                          EQ)
            if dem_boxes is not None:
                sp = m.add_zeta(zname("shed_p", j, t),
                                ub_expr=BoundExpr(dem_boxes[t][1]))
                # served load >= 0: shed <= (masked) demand
                m.add_rec(f"shed_p_cap[{j},{t}]", {sp: 1.0}, LE,
                          bil={(m.xi(f"dem_p[{j},{t}]"), sited): 1.0})
            if u.load_q_box.get(j) is not None:
                sq = m.add_zeta(zname("shed_q", j, t),
                                ub_expr=BoundExpr(u.load_q_box[j][t][1]))
                m.add_rec(f"shed_q_cap[{j},{t}]", {sq: 1.0}, LE,
                          bil={(m.xi(f"dem_q[{j},{t}]"), sited): 1.0})
            # site power balance: electrolyzer intake cannot exceed local
            # generation + storage discharge - charge - served induced load
            a = {}
            if has["elz"]:
                a[m.zeta(zname("p_elz", j, t))] = 1.0
            for g in gens:
                a[g] = -1.0
            if has["bsb"]:
                a[m.zeta(zname("bsb_dis", j, t))] = -1.0
                a[m.zeta(zname("bsb_ch", j, t))] = 1.0
            bil = {}
            if dem_boxes is not None:
                a[m.zeta(zname("shed_p", j, t))] = -1.0
                bil[(m.xi(f"dem_p[{j},{t}]"), sited)] = -1.0
            m.add_rec(f"site_balance[{j},{t}]", a, LE, bil=bil)

        # hydrogen shipping extraction + tank dynamics
        ship_cap = sum(v.fill_rate_kg_h for v in inst.vessels)
        for t in range(T):
            md = m.add_zeta(zname("m_ship_out", j, t),
                            ub_expr=BoundExpr(ship_cap))
            m.obj_om[md] = scale * dt * cat.devices["hst"].om_cost
        if has["hst"]:
            cap = m.lam(f"cap_hst[{j}]")
            for t in range(T + 1):
                lv = m.add_zeta(zname("hst_lvl", j, t),
                                ub_expr=BoundExpr(0.0, {cap: 1.0}))
                m.add_rec(f"hst_hi[{j},{t}]", {lv: 1.0}, LE, lam={cap: 1.0})
                if cat.hst_depth_frac < 1.0:
                    m.add_rec(f"hst_lo[{j},{t}]", {lv: 1.0}, GE,
                              lam={cap: 1.0 - cat.hst_depth_frac})
        for t in range(T):
            a = {}
            if has["hst"]:
                a[m.zeta(zname("hst_lvl", j, t + 1))] = 1.0
                a[m.zeta(zname("hst_lvl", j, t))] = -(1.0 - cat.hst_leak_frac)
            if has["elz"]:
                a[m.zeta(zname("m_elz", j, t))] = -dt * cat.hst_in
            a[m.zeta(zname("m_ship_out", j, t))] = dt / cat.hst_out
            m.add_rec(f"hst_balance[{j},{t}]", a, EQ)
        # cycle-boundary hydrogen drift bounded by pre-positioned buffer
        a = {}
        for t in range(T):
            if has["elz"]:
                a[m.zeta(zname("m_elz", j, t))] = dt * cat.hst_in
            a[m.zeta(zname("m_ship_out", j, t))] = \
                a.get(m.zeta(zname("m_ship_out", j, t)), 0.0) - dt / cat.hst_out
        bl = lam_opt(f"buffer[{j}]")
        blam = {bl: 1.0} if bl is not None else {}
        m.add_rec(f"h2_drift_hi[{j}]", a, LE, lam=blam)
        m.add_rec(f"h2_drift_lo[{j}]", {k: -v for k, v in a.items()}, LE,
                  lam=blam)
        if has["bsb"]:
            cap = m.lam(f"cap_bsb[{j}]")
            _bsb_rows(m, j, cap, T, dt, cat)

    # ---------------- load islands ----------------
    for isl in inst.load_islands:
        _load_island_rows(m, isl)

    # ---------------- vessels ----------------
    for v in inst.vessels:
        _vessel_rows(m, v)

    # hydrogen interchange between vessels and shore tanks
    for isl in inst.resource_islands:
        for t in range(T):
            a = {}
            for v in inst.vessels:
                nm = f"ves_in[{isl.id},{v.id},{t}]"
                if nm in m.zeta_index:
                    a[m.zeta(nm)] = 1.0
            for n in isl.nodes:
                a[m.zeta(zname("m_ship_out", n.id, t))] = -1.0
            m.add_rec(f"pickup_balance[{isl.id},{t}]", a, EQ)
    for isl in inst.load_islands:
        he = [n for n in isl.nodes if n.he and n.hst_kg[1] + n.fc_mw[1] > 0]
        for t in range(T):
            a = {}
            for v in inst.vessels:
                nm = f"ves_out[{isl.id},{v.id},{t}]"
                if nm in m.zeta_index:
                    a[m.zeta(nm)] = 1.0
            for n in he:
                nm = zname("m_ship_in", n.id, t)
                if nm in m.zeta_index:
                    a[m.zeta(nm)] = -1.0
            if a:
                m.add_rec(f"dropoff_balance[{isl.id},{t}]", a, EQ)

    # ---------------- shedding caps / feasibility slacks ----------------
    _shed_rows(m)


def _bsb_rows(m: CompactModel, j: str, cap: int, T: int, dt: float,
              cat) -> None:
    for t in range(T + 1):
        lv = m.add_zeta(f"bsb_lvl[{j},{t}]",
                        ub_expr=BoundExpr(0.0, {cap: 1.0}))
        m.add_rec(f"bsb_hi[{j},{t}]", {lv: 1.0}, LE, lam={cap: 1.0})
        if cat.bsb_depth_frac < 1.0:
            m.add_rec(f"bsb_lo[{j},{t}]", {lv: 1.0}, GE,
                      lam={cap: 1.0 - cat.bsb_depth_frac})
    for t in range(T):
        m.add_rec(
            f"bsb_balance[{j},{t}]",
            {m.zeta(f"bsb_lvl[{j},{t + 1}]"): 1.0,
             m.zeta(f"bsb_lvl[{j},{t}]"): -(1.0 - cat.bsb_leak_frac),
             m.zeta(f"bsb_ch[{j},{t}]"): -dt * cat.bsb_in,
             m.zeta(f"bsb_dis[{j},{t}]"): dt / cat.bsb_out},
            EQ)
    m.add_rec(
        f"bsb_cycle[{j}]",
        {**{m.zeta(f"bsb_ch[{j},{t}]"): dt * cat.bsb_in for t in range(T)},
         **{m.zeta(f"bsb_dis[{j},{t}]"): -dt / cat.bsb_out
            for t in range(T)}},
        EQ)


def _load_island_rows(m: CompactModel, isl) -> None:
    inst = m.instance
    cat = inst.catalog
    u = inst.uncertainty
    T = inst.time.n
    dt = inst.time.step_hours
    scale = inst.time.cycles_per_year

    def lam_opt(name):
        return m.lam_index.get(name)

    for n in isl.nodes:
        j = n.id
        has = {dev: lam_opt(f"cap_{dev}[{j}]") is not None
               for dev, _ in _he_device_fields()}
        for t in range(T):
            if has["pv"]:
                cap = m.lam(f"cap_pv[{j}]")
                hi = max(b[1] for b in u.pv_factor_box[j])
                p = m.add_zeta(f"p_pv[{j},{t}]",
                               ub_expr=BoundExpr(0.0, {cap: hi}))
                m.add_rec(f"pv_avail[{j},{t}]", {p: 1.0}, LE,
                          bil={(m.xi(f"pvf[{j},{t}]"), cap): 1.0})
                m.obj_om[p] = scale * dt * cat.devices["pv"].om_cost
            if has["fc"]:
                cap = m.lam(f"cap_fc[{j}]")
                conv = cat.fc_eff * cat.fc_mwh_per_kg
                pf = m.add_zeta(f"p_fc[{j},{t}]",
                                ub_expr=BoundExpr(0.0, {cap: 1.0}))
                mf = m.add_zeta(f"m_fc[{j},{t}]",
                                ub_expr=BoundExpr(0.0, {cap: 1.0 / conv}))
                qlo = min(isl.fc_tan_lo, 0.0)
                qhi = max(isl.fc_tan_hi, 0.0)
                qf = m.add_zeta(f"q_fc[{j},{t}]", lb=-INF,
                                lb_expr=BoundExpr(0.0, {cap: qlo}),
                                ub_expr=BoundExpr(0.0, {cap: qhi}))
                m.add_rec(f"fc_cap[{j},{t}]", {pf: 1.0}, LE, lam={cap: 1.0})
                m.add_rec(f"fc_conv[{j},{t}]", {pf: 1.0, mf: -conv}, EQ)
                m.add_rec(f"fc_q_hi[{j},{t}]",
                          {qf: 1.0, pf: -isl.fc_tan_hi}, LE)
                m.add_rec(f"fc_q_lo[{j},{t}]",
                          {qf: 1.0, pf: -isl.fc_tan_lo}, GE)
            if has["bsb"]:
                cap = m.lam(f"cap_bsb[{j}]")
                ch = m.add_zeta(f"bsb_ch[{j},{t}]",
                                ub_expr=BoundExpr(0.0, {cap: cat.bsb_charge_rate_frac}))
                ds = m.add_zeta(f"bsb_dis[{j},{t}]",
                                ub_expr=BoundExpr(0.0, {cap: cat.bsb_discharge_rate_frac}))
                m.add_rec(f"bsb_ch_cap[{j},{t}]", {ch: 1.0}, LE,
                          lam={cap: cat.bsb_charge_rate_frac})
                m.add_rec(f"bsb_dis_cap[{j},{t}]", {ds: 1.0}, LE,
                          lam={cap: cat.bsb_discharge_rate_frac})
                m.obj_om[ch] = scale * dt * cat.devices["bsb"].om_cost
                m.obj_om[ds] = scale * dt * cat.devices["bsb"].om_cost
            # imported hydrogen feed (only meaningful at candidate sites)
            if n.he and (has["hst"] or has["fc"]):
                mi = m.add_zeta(f"m_ship_in[{j},{t}]",
                                ub_expr=BoundExpr(
                                    sum(v.unload_rate_kg_h
                                        for v in inst.vessels)))
                m.obj_om[mi] = scale * dt * cat.devices["hst"].om_cost
            # shedding
            dem = u.load_p_box.get(j)
            if dem is None:
                raise CompileError(f"load node {j} lacks load_p_box")
            sp = m.add_zeta(f"shed_p[{j},{t}]",
                            ub_expr=BoundExpr(dem[t][1]))
            m.add_rec(f"shed_p_cap[{j},{t}]", {sp: 1.0}, LE,
                      xi={m.xi(f"dem_p[{j},{t}]"): 1.0})
            m.obj_voll[sp] = (scale * dt
                              * inst.economics.voll_kusd_per_mwh.get(j, 0.0))
            demq = u.load_q_box.get(j)
            if demq is None:
                raise CompileError(f"load node {j} lacks load_q_box")
            sq = m.add_zeta(f"shed_q[{j},{t}]",
                            ub_expr=BoundExpr(demq[t][1]))
            m.add_rec(f"shed_q_cap[{j},{t}]", {sq: 1.0}, LE,
                      xi={m.xi(f"dem_q[{j},{t}]"): 1.0})

        # imported-hydrogen tank dynamics and drift bound
        if has["hst"] or has["fc"]:
            if has["hst"]:
                cap = m.lam(f"cap_hst[{j}]")
                for t in range(T + 1):
                    lv = m.add_zeta(f"hst_lvl[{j},{t}]",
                                    ub_expr=BoundExpr(0.0, {cap: 1.0}))
                    m.add_rec(f"hst_hi[{j},{t}]", {lv: 1.0}, LE,
                              lam={cap: 1.0})
                    if cat.hst_depth_frac < 1.0:
                        m.add_rec(f"hst_lo[{j},{t}]", {lv: 1.0}, GE,
                                  lam={cap: 1.0 - cat.hst_depth_frac})
            for t in range(T):
                a = {}
                if has["hst"]:
                    a[m.zeta(f"hst_lvl[{j},{t + 1}]")] = 1.0
                    a[m.zeta(f"hst_lvl[{j},{t}]")] = -(1.0 - cat.hst_leak_frac)
                a[m.zeta(f"m_ship_in[{j},{t}]")] = -dt * cat.hst_in
                if has["fc"]:
                    a[m.zeta(f"m_fc[{j},{t}]")] = dt / cat.hst_out
                m.add_rec(f"hst_balance[{j},{t}]", a, EQ)
            a = {}
            for t in range(T):
                a[m.zeta(f"m_ship_in[{j},{t}]")] = dt * cat.hst_in
                if has["fc"]:
                    a[m.zeta(f"m_fc[{j},{t}]")] = \
                        a.get(m.zeta(f"m_fc[{j},{t}]"), 0.0) - dt / cat.hst_out
            bl = lam_opt(f"buffer[{j}]")
            blam = {bl: 1.0} if bl is not None else {}
            m.add_rec(f"h2_drift_hi[{j}]", a, LE, lam=blam)
            m.add_rec(f"h2_drift_lo[{j}]", {k: -v for k, v in a.items()},
                      LE, lam=blam)
        if has["bsb"]:
            _bsb_rows(m, j, m.lam(f"cap_bsb[{j}]"), T, dt, cat)

    # ---- radial power flow ----
    for e in isl.edges:
        for t in range(T):
            fp = m.add_zeta(f"fp[{e.id},{t}]", lb=-e.cap_fp_mw,
                            ub=e.cap_fp_mw, lb_expr=BoundExpr(-e.cap_fp_mw),
                            ub_expr=BoundExpr(e.cap_fp_mw))
            fq = m.add_zeta(f"fq[{e.id},{t}]", lb=-e.cap_fq_mvar,
                            ub=e.cap_fq_mvar,
                            lb_expr=BoundExpr(-e.cap_fq_mvar),
                            ub_expr=BoundExpr(e.cap_fq_mvar))
    spread = sum((e.r_pu * e.cap_fp_mw + e.x_pu * e.cap_fq_mvar)
                 / isl.u_ref for e in isl.edges)
    interior = spread < (isl.u_hi - isl.u_lo) - 1e-9
    for n in isl.nodes:
        for t in range(T):
            vz = m.add_zeta(f"volt[{n.id},{t}]", lb=isl.u_lo, ub=isl.u_hi,
                            lb_expr=BoundExpr(isl.u_lo),
                            ub_expr=BoundExpr(isl.u_hi))
            if interior:
                m.slack_bounds.add(vz)
    for e in isl.edges:
        if not np.isfinite(e.cap_fp_mw) or not np.isfinite(e.cap_fq_mvar):
            raise CompileError(
                f"voltage switching constant underivable: edge {e.id} "
                f"needs finite flow caps")
        big_m = ((isl.u_hi - isl.u_lo)
                 + (e.r_pu * e.cap_fp_mw + e.x_pu * e.cap_fq_mvar) / isl.u_ref)
        for t in range(T):
            a = {m.zeta(f"volt[{e.i},{t}]"): 1.0,
                 m.zeta(f"volt[{e.j},{t}]"): -1.0,
                 m.zeta(f"fp[{e.id},{t}]"): -e.r_pu / isl.u_ref,
                 m.zeta(f"fq[{e.id},{t}]"): -e.x_pu / isl.u_ref}
            if e.hardenable:
                ok = m.xi(f"line_ok[{e.id}]")
                m.add_rec(f"volt_drop_hi[{e.id},{t}]", a, LE,
                          const=big_m, xi={ok: -big_m})
                m.add_rec(f"volt_drop_lo[{e.id},{t}]",
                          {k: -v for k, v in a.items()}, LE,
                          const=big_m, xi={ok: -big_m})
                cap = e.cap_fp_mw
                m.add_rec(f"flow_p_hi[{e.id},{t}]",
                          {m.zeta(f"fp[{e.id},{t}]"): 1.0}, LE,
                          xi={ok: cap})
                m.add_rec(f"flow_p_lo[{e.id},{t}]",
                          {m.zeta(f"fp[{e.id},{t}]"): -1.0}, LE,
                          xi={ok: cap})
                capq = e.cap_fq_mvar
                m.add_rec(f"flow_q_hi[{e.id},{t}]",
                          {m.zeta(f"fq[{e.id},{t}]"): 1.0}, LE,
                          xi={ok: capq})
                m.add_rec(f"flow_q_lo[{e.id},{t}]",
                          {m.zeta(f"fq[{e.id},{t}]"): -1.0}, LE,
                          xi={ok: capq})
            else:
                m.add_rec(f"volt_drop[{e.id},{t}]", a, EQ)

    # nodal balances (service = demand - shed enters with its sign)
    for n in isl.nodes:
        j = n.id
        outs = [e for e in isl.edges if e.i == j]
        ins = [e for e in isl.edges if e.j == j]
        for t in range(T):
            a = {}
            for e in outs:
                a[m.zeta(f"fp[{e.id},{t}]")] = 1.0
            for e in ins:
                a[m.zeta(f"fp[{e.id},{t}]")] = \
                    a.get(m.zeta(f"fp[{e.id},{t}]"), 0.0) - 1.0
            for nm, sg in ((f"p_pv[{j},{t}]", -1.0), (f"p_fc[{j},{t}]", -1.0),
                           (f"bsb_dis[{j},{t}]", -1.0),
                           (f"bsb_ch[{j},{t}]", 1.0),
                           (f"shed_p[{j},{t}]", -1.0)):
                if nm in m.zeta_index:
                    a[m.zeta(nm)] = a.get(m.zeta(nm), 0.0) + sg
            m.add_rec(f"p_balance[{j},{t}]", a, EQ,
                      xi={m.xi(f"dem_p[{j},{t}]"): -1.0})
            a = {}
            for e in outs:
                a[m.zeta(f"fq[{e.id},{t}]")] = 1.0
            for e in ins:
                a[m.zeta(f"fq[{e.id},{t}]")] = \
                    a.get(m.zeta(f"fq[{e.id},{t}]"), 0.0) - 1.0
            for nm, sg in ((f"q_fc[{j},{t}]", -1.0),
                           (f"shed_q[{j},{t}]", -1.0)):
                if nm in m.zeta_index:
                    a[m.zeta(nm)] = a.get(m.zeta(nm), 0.0) + sg
            m.add_rec(f"q_balance[{j},{t}]", a, EQ,
                      xi={m.xi(f"dem_q[{j},{t}]"): -1.0})


def _vessel_rows(m: CompactModel, v) -> None:
    inst = m.instance
    cat = inst.catalog
    T = inst.time.n
    dt = inst.time.step_hours
    scale = inst.time.cycles_per_year
    res_isl, load_isl = _vessel_islands(m, v)
    av = m.lam(f"a_ves[{v.id}]")
    ok = m.xi(f"ves_ok[{v.id}]")

    for s in res_isl:
        for t in range(T):
            mi = m.add_zeta(f"ves_in[{s},{v.id},{t}]",
                            ub_expr=BoundExpr(v.fill_rate_kg_h))
            m.add_rec(f"fill_port[{s},{v.id},{t}]", {mi: 1.0}, LE,
                      lam={m.lam(f"mu[{v.id},{s},{t + 1}]"):
                           v.fill_rate_kg_h})
            m.add_rec(f"fill_ok[{s},{v.id},{t}]", {mi: 1.0}, LE,
                      xi={ok: v.fill_rate_kg_h})
            m.obj_om[mi] = scale * dt * cat.devices["ves"].om_cost
    for s in load_isl:
        for t in range(T):
            mo = m.add_zeta(f"ves_out[{s},{v.id},{t}]",
                            ub_expr=BoundExpr(v.unload_rate_kg_h))
            m.add_rec(f"unload_port[{s},{v.id},{t}]", {mo: 1.0}, LE,
                      lam={m.lam(f"mu[{v.id},{s},{t + 1}]"):
                           v.unload_rate_kg_h})
            m.add_rec(f"unload_ok[{s},{v.id},{t}]", {mo: 1.0}, LE,
                      xi={ok: v.unload_rate_kg_h})
            m.obj_om[mo] = scale * dt * cat.devices["ves"].om_cost

    sh_lo, sh_hi = v.storage_kg
    for t in range(T + 1):
        lv = m.add_zeta(f"tank[{v.id},{t}]",
                        ub_expr=BoundExpr(0.0, {av: sh_hi}))
        m.add_rec(f"tank_hi[{v.id},{t}]", {lv: 1.0}, LE, lam={av: sh_hi})
        if sh_lo > 0.0:
            m.add_rec(f"tank_lo[{v.id},{t}]", {lv: 1.0}, GE,
                      lam={av: sh_lo})
    # fuel burns only while the vessel actually operates: a failed vessel
    # shelters in port, so the at-sea burn is gated by intactness
    for t in range(T):
        a = {m.zeta(f"tank[{v.id},{t + 1}]"): 1.0,
             m.zeta(f"tank[{v.id},{t}]"): -(1.0 - v.leak_frac)}
        for s in res_isl:
            a[m.zeta(f"ves_in[{s},{v.id},{t}]")] = -dt * v.transfer_eff
        for s in load_isl:
            a[m.zeta(f"ves_out[{s},{v.id},{t}]")] = dt / v.transfer_eff
        m.add_rec(f"tank_balance[{v.id},{t}]", a, EQ,
                  bil={(ok, m.lam(f"beta[{v.id},{t + 1}]")):
                       -dt * v.fuel_kg_h})
    a = {}
    for t in range(T):
        for s in res_isl:
            a[m.zeta(f"ves_in[{s},{v.id},{t}]")] = dt * v.transfer_eff
        for s in load_isl:
            a[m.zeta(f"ves_out[{s},{v.id},{t}]")] = -dt / v.transfer_eff
    m.add_rec(f"tank_cycle[{v.id}]", a, EQ,
              bil={(ok, m.lam(f"beta[{v.id},{t + 1}]")): dt * v.fuel_kg_h
                   for t in range(T)})


def _shed_rows(m: CompactModel) -> None:
    """Per-level shedding allowances: hard caps in the dispatch set, and a
    rectified overflow slack per removed cap in the feasibility variant."""
    inst = m.instance
    T = inst.time.n
    levels = inst.wind_levels
    all_nodes = ([n.id for _, n in inst.resource_nodes()]
                 + [n.id for _, n in inst.load_nodes()])
    per_node = inst.limits.shed_cap_mode == "per_node"

    def caps(kind, w, j, t):
        tbl = w.shed_cap_p_mw if kind == "p" else w.shed_cap_q_mvar
        return tbl.get(j, (0.0,) * T)[t]

    for kind in ("p", "q"):
        for t in range(T):
            groups = ([(j, [j]) for j in all_nodes] if per_node
                      else [("all", all_nodes)])
            for gname, nodes in groups:
                a = {}
                for j in nodes:
                    nm = f"shed_{kind}[{j},{t}]"
                    if nm in m.zeta_index:
                        a[m.zeta(nm)] = 1.0
                if not a:
                    continue
                xi = {m.xi(f"lvl[{w.id}]"):
                      sum(caps(kind, w, j, t) for j in nodes)
                      for w in levels}
                m.add_rec(f"shed_cap_{kind}[{gname},{t}]", a, LE, xi=xi,
                          tag="cap")
                smax = sum(m.zeta_ub[z].const for z in a)
                s = m.add_zeta(f"overflow_{kind}[{gname},{t}]",
                               ub_expr=BoundExpr(smax))
                m.add_rec(f"overflow_{kind}_def[{gname},{t}]",
                          {s: 1.0, **{z: -c for z, c in a.items()}},
                          GE, xi={x: -c for x, c in xi.items()},
                          tag="slack")
                m.obj_infeas[s] = 1.0


# ---------------------------------------------------------------------------
# sample-space geometry


def _budget_patterns(n: int, budget: int) -> list[tuple[int, ...]]:
    """All 0/1 intactness vectors with at most ``budget`` zeros."""
    import itertools

    out = []
    for k in range(min(budget, n) + 1):
        for off in itertools.combinations(range(n), k):
            v = [1] * n
            for i in off:
                v[i] = 0
            out.append(tuple(v))
    return out


def model_line_ids(model: CompactModel) -> list[str]:
    return [name[8:-1] for name in model.xi_index
            if name.startswith("line_ok[")]


def predict_vertex_count(model: CompactModel) -> int:
    import itertools

    inst = model.instance
    lines = len(model_line_ids(model))
    vessels = len(inst.vessels)
    momented = {x for mrow in model.moment_rows for x in mrow.psi}
    dominated_lo = {x for x in model.mask_map
                    if x not in momented and model.xi_vars[x].lb == 0.0}
    free = sum(1 for i, v in enumerate(model.xi_vars)
               if v.kind == "continuous"
               and not v.name.startswith(("zup[", "zdn["))
               and v.ub - v.lb > 1e-12 and i not in dominated_lo)
    total = 0
    for w in inst.wind_levels:
        nl = sum(len(list(itertools.combinations(range(lines), k)))
                 for k in range(min(w.line_outage_budget, lines) + 1))
        nv = sum(len(list(itertools.combinations(range(vessels), k)))
                 for k in range(min(w.vessel_outage_budget, vessels) + 1))
        total += nl * nv
    return total * (2 ** free)


def enumerate_vertices(model: CompactModel,
                       cap: int = DEFAULT_VERTEX_CAP) -> list[Scenario]:
    """Exhaustive, duplicate-free extreme points of the uncertainty set:
    level one-hots x budget-feasible outage patterns x box corners of the
    free continuous components, with the level-gated deviation products
    computed outright."""
    import itertools

    predicted = predict_vertex_count(model)
    if predicted > cap:
        raise VertexCapExceeded(
            f"predicted {predicted} vertices exceeds cap {cap}")
    inst = model.instance
    line_ids = model_line_ids(model)
    ves_ids = [v.id for v in inst.vessels]
    # decision-masked demand components without moment rows are dominated
    # at their upper corner: serving more induced load is never cheaper in
    # any dispatch mode and their distribution columns are identical, so
    # the zero corner cannot carry worst-case mass
    momented = {x for mrow in model.moment_rows for x in mrow.psi}
    dominated_lo = {x for x in model.mask_map
                    if x not in momented and model.xi_vars[x].lb == 0.0}
    free_idx = [i for i, v in enumerate(model.xi_vars)
                if v.kind == "continuous"
                and not v.name.startswith(("zup[", "zdn["))
                and v.ub - v.lb > 1e-12 and i not in dominated_lo]
    fixed_cont = [(i, v.lb if i not in dominated_lo else v.ub)
                  for i, v in enumerate(model.xi_vars)
                  if v.kind == "continuous"
                  and not v.name.startswith(("zup[", "zdn["))
                  and (v.ub - v.lb <= 1e-12 or i in dominated_lo)]
    products = []
    for name, i in model.xi_index.items():
        if name.startswith(("zup[", "zdn[")):
            pre, rest = name.split("[", 1)
            lvl_id, j, t = rest[:-1].split(",")
            tau = "tau_up" if pre == "zup" else "tau_dn"
            products.append((i, model.xi(f"lvl[{lvl_id}]"),
                             model.xi(f"{tau}[{j},{t}]")))

    out: list[Scenario] = []
    seen = set()
    for w in inst.wind_levels:
        base = np.zeros(model.n_xi)
        base[model.xi(f"lvl[{w.id}]")] = 1.0
        for i, val in fixed_cont:
            base[i] = val
        for lpat in _budget_patterns(len(line_ids), w.line_outage_budget):
            for vpat in _budget_patterns(len(ves_ids),
                                         w.vessel_outage_budget):
                v0 = base.copy()
                for eid, bit in zip(line_ids, lpat):
                    v0[model.xi(f"line_ok[{eid}]")] = float(bit)
                for vid, bit in zip(ves_ids, vpat):
                    v0[model.xi(f"ves_ok[{vid}]")] = float(bit)
                for corner in itertools.product(*(
                        ((model.xi_vars[i].lb, model.xi_vars[i].ub)
                         for i in free_idx))):
                    v = v0.copy()
                    for i, val in zip(free_idx, corner):
                        v[i] = val
                    for i, lv, tv in products:
                        v[i] = v[lv] * v[tv]
                    s = Scenario(v)
                    if s.key() not in seen:
                        seen.add(s.key())
                        out.append(s)
                        assert model.scenario_in_sample_space(s), \
                            "enumerated point violates the polytope"
    return out


# ---------------------------------------------------------------------------
# dispatch LP assembly


def recourse_lp(model: CompactModel, lam: FirstStageDecision, xi: Scenario,
                objective_mode: str = "om_cost",
                apply_mask: bool = True) -> LinearProblem:
    """Build the dispatch LP for fixed (first stage, scenario).

    With ``apply_mask`` (the default) the scenario is routed through the
    siting-indicator projection: the stored xi*lambda products evaluate the
    masked demand directly. ``apply_mask=False`` reproduces the literal
    decision-dependent sample-space reading, where the caller guarantees the
    scenario already satisfies the indicator-gated boxes and its components
    enter at face value (indicators treated as 1).
    """
    xi_vec = np.asarray(xi.values, dtype=float)
    lam_eval = np.array(lam.values, dtype=float)
    if not apply_mask:
        for _, l in model.mask_map.items():
            lam_eval[l] = 1.0

    prob = LinearProblem(name=f"dispatch[{objective_mode}]")
    obj = model.objective_for_mode(objective_mode)
    for i, zv in enumerate(model.zeta_vars):
        prob.add_var(zv.name, lb=zv.lb, ub=zv.ub, obj=obj.get(i, 0.0))
    for r in model.rows_for_mode(objective_mode):
        rhs = r.rhs_value(lam_eval, xi_vec)
        if r.tag == "cap":
            rhs += CAP_SLACK
        prob.add_row(r.name, r.a, r.sense, rhs)
    return prob
