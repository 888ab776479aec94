"""Domain types, validation, and JSON ingestion for island-cluster instances.

An instance describes one island cluster: a time grid, the device catalog,
resource islands with installable renewable/hydrogen sites, load islands with
radial distribution grids, a vessel fleet, discretized wind levels with
outage budgets, uncertainty boxes and first-order moment bounds, economics,
and planning limits. Instances are plain value objects; everything downstream
treats them as read-only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

SCHEMA = "ddu-dro/1"

DEVICE_CLASSES = ("wt", "pv", "elz", "hst", "bsb", "fc", "ves", "gd", "pr")


class ValidationError(ValueError):
    """An instance invariant is violated; the message names the entity."""


class AmbiguityEmptyError(ValidationError):
    """The declared moment bounds admit no probability distribution."""


def capital_recovery(rr: float, years: float) -> float:
    """Annualization factor rr(1+rr)^Y / ((1+rr)^Y - 1) for lifetime Y."""
    if rr <= 0:
        raise ValueError(f"discount rate must be positive, got {rr}")
    if years < 1:
        raise ValueError(f"lifetime must be >= 1 year, got {years}")
    f = (1.0 + rr) ** years
    return rr * f / (f - 1.0)


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class TimeGrid:
    periods: tuple[str, ...]
    step_hours: float
    cycles_per_year: float

    @property
    def n(self) -> int:
        return len(self.periods)


@dataclass(frozen=True)
class DeviceEntry:
    inv_cost: float  # k$/MW, k$/MWh or k$/kg depending on class
    om_cost: float = 0.0  # k$/unit-output
    lifetime_years: float = 20.0


@dataclass(frozen=True)
class DeviceCatalog:
    devices: dict[str, DeviceEntry]
    elz_eff: float
    elz_kg_per_mwh: float
    fc_eff: float
    fc_mwh_per_kg: float
    hst_in: float
    hst_out: float
    hst_leak_frac: float
    hst_depth_frac: float
    bsb_in: float
    bsb_out: float
    bsb_leak_frac: float
    bsb_depth_frac: float
    bsb_charge_rate_frac: float
    bsb_discharge_rate_frac: float
    discount_rate: float

    def crf(self, device: str) -> float:
        return capital_recovery(self.discount_rate,
                                self.devices[device].lifetime_years)


Bounds2 = tuple[float, float]


@dataclass(frozen=True)
class ResourceNode:
    id: str
    wt_mw: Bounds2 = (0.0, 0.0)
    pv_mw: Bounds2 = (0.0, 0.0)
    elz_mw: Bounds2 = (0.0, 0.0)
    hst_kg: Bounds2 = (0.0, 0.0)
    bsb_mwh: Bounds2 = (0.0, 0.0)


@dataclass(frozen=True)
class ResourceIsland:
    id: str
    nodes: tuple[ResourceNode, ...]


@dataclass(frozen=True)
class LoadNode:
    id: str
    he: bool = False  # hydrogen-electrical candidate site
    pv_mw: Bounds2 = (0.0, 0.0)
    fc_mw: Bounds2 = (0.0, 0.0)
    hst_kg: Bounds2 = (0.0, 0.0)
    bsb_mwh: Bounds2 = (0.0, 0.0)


@dataclass(frozen=True)
class Edge:
    id: str
    i: str
    j: str
    r_pu: float
    x_pu: float
    cap_fp_mw: float
    cap_fq_mvar: float
    hardenable: bool = False
    hardening_cost_kusd: float = 0.0


@dataclass(frozen=True)
class LoadIsland:
    id: str
    nodes: tuple[LoadNode, ...]
    edges: tuple[Edge, ...]
    u_lo: float
    u_hi: float
    u_ref: float
    fc_tan_lo: float
    fc_tan_hi: float
    max_vessels: int = 0


@dataclass(frozen=True)
class VesselSpec:
    id: str
    purchase_cost_kusd: float
    trip_cost_kusd: tuple[float, ...]  # one entry per trip slot
    fill_rate_kg_h: float
    unload_rate_kg_h: float
    storage_kg: Bounds2
    fuel_kg_h: float
    leak_frac: float
    transfer_eff: float
    transit_steps: dict[str, dict[str, int]]  # island -> island -> steps
    berth_steps: dict[str, int]

    @property
    def max_trips(self) -> int:
        return len(self.trip_cost_kusd)


@dataclass(frozen=True)
class WindLevel:
    """One discrete wind regime with its outage budgets and shed allowances.

    Factor tables map wind-capable node ids to per-period values; shed caps
    map every network node to per-period MW (or MVAr) allowances.
    """

    id: str
    wt_nominal: dict[str, tuple[float, ...]]
    wt_up: dict[str, tuple[float, ...]]
    wt_down: dict[str, tuple[float, ...]]
    line_outage_budget: int
    vessel_outage_budget: int
    shed_cap_p_mw: dict[str, tuple[float, ...]]
    shed_cap_q_mvar: dict[str, tuple[float, ...]]
    prob_lo: float
    prob_hi: float


@dataclass(frozen=True)
class UncertaintyBounds:
    """Per-component realization boxes and first-order moment bounds."""

    pv_factor_box: dict[str, tuple[Bounds2, ...]]
    load_p_box: dict[str, tuple[Bounds2, ...]]
    load_q_box: dict[str, tuple[Bounds2, ...]]
    tau_up_box: dict[str, tuple[Bounds2, ...]]
    tau_dn_box: dict[str, tuple[Bounds2, ...]]
    pv_factor_moment: dict[str, tuple[Bounds2, ...]]
    load_p_moment: dict[str, tuple[Bounds2, ...]]
    load_q_moment: dict[str, tuple[Bounds2, ...]]
    tau_up_moment: dict[str, tuple[Bounds2, ...]]
    tau_dn_moment: dict[str, tuple[Bounds2, ...]]
    vessel_intact_moment: dict[str, Bounds2]
    line_intact_moment: dict[str, Bounds2]
    hardening_moment_drop: dict[str, float]
    separation_margin: float = 0.01


@dataclass(frozen=True)
class Economics:
    voll_kusd_per_mwh: dict[str, float]
    buffer_cost_kusd_per_kg: dict[str, float]


@dataclass(frozen=True)
class Limits:
    max_hardened_lines: int = 0
    max_buffer_kg: float = 0.0
    gap: float = 1e-4
    max_iters: int = 200
    time_limit_s: float | None = None
    shed_cap_mode: str = "system"  # or "per_node"


@dataclass(frozen=True)
class Instance:
    time: TimeGrid
    catalog: DeviceCatalog
    resource_islands: tuple[ResourceIsland, ...]
    load_islands: tuple[LoadIsland, ...]
    vessels: tuple[VesselSpec, ...]
    wind_levels: tuple[WindLevel, ...]
    uncertainty: UncertaintyBounds
    economics: Economics
    limits: Limits = field(default_factory=Limits)
    name: str = "instance"

    # -- derived accessors -------------------------------------------------

    @property
    def islands(self) -> list[str]:
        return ([s.id for s in self.resource_islands]
                + [s.id for s in self.load_islands])

    def resource_nodes(self) -> list[tuple[ResourceIsland, ResourceNode]]:
        return [(s, n) for s in self.resource_islands for n in s.nodes]

    def load_nodes(self) -> list[tuple[LoadIsland, LoadNode]]:
        return [(s, n) for s in self.load_islands for n in s.nodes]

    def he_nodes(self) -> list[tuple[LoadIsland, LoadNode]]:
        return [(s, n) for s, n in self.load_nodes() if n.he]

    def wt_nodes(self) -> list[str]:
        return [n.id for _, n in self.resource_nodes() if n.wt_mw[1] > 0]

    def pv_nodes(self) -> list[str]:
        out = [n.id for _, n in self.resource_nodes() if n.pv_mw[1] > 0]
        out += [n.id for _, n in self.he_nodes() if n.pv_mw[1] > 0]
        return out

    def hardenable_edges(self) -> list[tuple[LoadIsland, Edge]]:
        return [(s, e) for s in self.load_islands for e in s.edges
                if e.hardenable]

    def node_island(self, node_id: str) -> str:
        for s in self.resource_islands:
            if any(n.id == node_id for n in s.nodes):
                return s.id
        for s in self.load_islands:
            if any(n.id == node_id for n in s.nodes):
                return s.id
        raise KeyError(node_id)

    def to_dict(self) -> dict:
        d = {
            "schema": SCHEMA,
            "name": self.name,
            "time": {
                "periods": list(self.time.periods),
                "step_hours": self.time.step_hours,
                "cycles_per_year": self.time.cycles_per_year,
            },
            "catalog": _catalog_to_dict(self.catalog),
            "resource_islands": [
                {"id": s.id,
                 "nodes": [_strip(asdict(n)) for n in s.nodes]}
                for s in self.resource_islands
            ],
            "load_islands": [_load_island_to_dict(s)
                             for s in self.load_islands],
            "vessels": [_vessel_to_dict(v) for v in self.vessels],
            "wind_levels": [_level_to_dict(u) for u in self.wind_levels],
            "uncertainty": _uncertainty_to_dict(self.uncertainty),
            "economics": {
                "voll_kusd_per_mwh": dict(self.economics.voll_kusd_per_mwh),
                "buffer_cost_kusd_per_kg":
                    dict(self.economics.buffer_cost_kusd_per_kg),
            },
            "limits": {
                "max_hardened_lines": self.limits.max_hardened_lines,
                "max_buffer_kg": self.limits.max_buffer_kg,
                "gap": self.limits.gap,
                "max_iters": self.limits.max_iters,
                "time_limit_s": self.limits.time_limit_s,
                "shed_cap_mode": self.limits.shed_cap_mode,
            },
        }
        return d


def _strip(d: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in d.items()}


def _catalog_to_dict(c: DeviceCatalog) -> dict:
    return {
        "devices": {
            k: {"inv_cost": e.inv_cost, "om_cost": e.om_cost,
                "lifetime_years": e.lifetime_years}
            for k, e in sorted(c.devices.items())
        },
        "efficiency": {
            "elz_eff": c.elz_eff, "elz_kg_per_mwh": c.elz_kg_per_mwh,
            "fc_eff": c.fc_eff, "fc_mwh_per_kg": c.fc_mwh_per_kg,
            "hst_in": c.hst_in, "hst_out": c.hst_out,
            "hst_leak_frac": c.hst_leak_frac,
            "hst_depth_frac": c.hst_depth_frac,
            "bsb_in": c.bsb_in, "bsb_out": c.bsb_out,
            "bsb_leak_frac": c.bsb_leak_frac,
            "bsb_depth_frac": c.bsb_depth_frac,
            "bsb_charge_rate_frac": c.bsb_charge_rate_frac,
            "bsb_discharge_rate_frac": c.bsb_discharge_rate_frac,
        },
        "discount_rate": c.discount_rate,
    }


def _load_island_to_dict(s: LoadIsland) -> dict:
    return {
        "id": s.id,
        "nodes": [_strip(asdict(n)) for n in s.nodes],
        "edges": [asdict(e) for e in s.edges],
        "voltage": {"lo": s.u_lo, "hi": s.u_hi, "ref": s.u_ref},
        "fc_power_factor_tan": {"lo": s.fc_tan_lo, "hi": s.fc_tan_hi},
        "max_vessels": s.max_vessels,
    }


def _vessel_to_dict(v: VesselSpec) -> dict:
    return {
        "id": v.id,
        "purchase_cost_kusd": v.purchase_cost_kusd,
        "trip_cost_kusd": list(v.trip_cost_kusd),
        "fill_rate_kg_h": v.fill_rate_kg_h,
        "unload_rate_kg_h": v.unload_rate_kg_h,
        "storage_kg": list(v.storage_kg),
        "fuel_kg_h": v.fuel_kg_h,
        "leak_frac": v.leak_frac,
        "transfer_eff": v.transfer_eff,
        "transit_steps": {a: dict(b) for a, b in v.transit_steps.items()},
        "berth_steps": dict(v.berth_steps),
    }


def _level_to_dict(u: WindLevel) -> dict:
    return {
        "id": u.id,
        "wt_factor_nominal": {k: list(v) for k, v in u.wt_nominal.items()},
        "wt_factor_up": {k: list(v) for k, v in u.wt_up.items()},
        "wt_factor_down": {k: list(v) for k, v in u.wt_down.items()},
        "line_outage_budget": u.line_outage_budget,
        "vessel_outage_budget": u.vessel_outage_budget,
        "shed_cap_p_mw": {k: list(v) for k, v in u.shed_cap_p_mw.items()},
        "shed_cap_q_mvar": {k: list(v) for k, v in u.shed_cap_q_mvar.items()},
        "prob_bounds": [u.prob_lo, u.prob_hi],
    }


def _boxes_out(d: dict[str, tuple[Bounds2, ...]]) -> dict:
    return {k: [list(b) for b in v] for k, v in d.items()}


def _uncertainty_to_dict(u: UncertaintyBounds) -> dict:
    return {
        "pv_factor_box": _boxes_out(u.pv_factor_box),
        "load_p_box_mw": _boxes_out(u.load_p_box),
        "load_q_box_mvar": _boxes_out(u.load_q_box),
        "wt_dev_up_box": _boxes_out(u.tau_up_box),
        "wt_dev_down_box": _boxes_out(u.tau_dn_box),
        "moments": {
            "pv_factor": _boxes_out(u.pv_factor_moment),
            "load_p_mw": _boxes_out(u.load_p_moment),
            "load_q_mvar": _boxes_out(u.load_q_moment),
            "wt_dev_up": _boxes_out(u.tau_up_moment),
            "wt_dev_down": _boxes_out(u.tau_dn_moment),
            "vessel_intact": {k: list(v)
                              for k, v in u.vessel_intact_moment.items()},
            "line_intact": {k: list(v)
                            for k, v in u.line_intact_moment.items()},
        },
        "hardening_moment_drop": dict(u.hardening_moment_drop),
        "separation_margin": u.separation_margin,
    }


# ---------------------------------------------------------------------------
# parsing


def _b2(v, ctx: str) -> Bounds2:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValidationError(f"{ctx}: expected [lo, hi], got {v!r}")
    lo, hi = float(v[0]), float(v[1])
    if lo > hi:
        raise ValidationError(f"{ctx}: lo {lo} > hi {hi}")
    return (lo, hi)


def _boxes_in(d: dict, ctx: str) -> dict[str, tuple[Bounds2, ...]]:
    return {k: tuple(_b2(b, f"{ctx}[{k}][{t}]") for t, b in enumerate(v))
            for k, v in d.items()}


def instance_from_dict(d: dict) -> Instance:
    if d.get("schema") != SCHEMA:
        raise ValidationError(
            f"unsupported schema {d.get('schema')!r}; expected {SCHEMA!r}")
    t = d["time"]
    time = TimeGrid(tuple(str(p) for p in t["periods"]),
                    float(t["step_hours"]), float(t["cycles_per_year"]))
    c = d["catalog"]
    eff = c["efficiency"]
    catalog = DeviceCatalog(
        devices={k: DeviceEntry(float(v["inv_cost"]),
                                float(v.get("om_cost", 0.0)),
                                float(v.get("lifetime_years", 20.0)))
                 for k, v in c["devices"].items()},
        discount_rate=float(c["discount_rate"]),
        **{k: float(eff[k]) for k in (
            "elz_eff", "elz_kg_per_mwh", "fc_eff", "fc_mwh_per_kg",
            "hst_in", "hst_out", "hst_leak_frac", "hst_depth_frac",
            "bsb_in", "bsb_out", "bsb_leak_frac", "bsb_depth_frac",
            "bsb_charge_rate_frac", "bsb_discharge_rate_frac")},
    )
    res_islands = tuple(
        ResourceIsland(
            id=str(s["id"]),
            nodes=tuple(
                ResourceNode(
                    id=str(n["id"]),
                    **{k: _b2(n.get(k, [0, 0]), f"{n['id']}.{k}")
                       for k in ("wt_mw", "pv_mw", "elz_mw",
                                 "hst_kg", "bsb_mwh")})
                for n in s["nodes"]))
        for s in d["resource_islands"])
    load_islands = tuple(
        LoadIsland(
            id=str(s["id"]),
            nodes=tuple(
                LoadNode(
                    id=str(n["id"]), he=bool(n.get("he", False)),
                    **{k: _b2(n.get(k, [0, 0]), f"{n['id']}.{k}")
                       for k in ("pv_mw", "fc_mw", "hst_kg", "bsb_mwh")})
                for n in s["nodes"]),
            edges=tuple(
                Edge(id=str(e["id"]), i=str(e["i"]), j=str(e["j"]),
                     r_pu=float(e["r_pu"]), x_pu=float(e["x_pu"]),
                     cap_fp_mw=float(e["cap_fp_mw"]),
                     cap_fq_mvar=float(e["cap_fq_mvar"]),
                     hardenable=bool(e.get("hardenable", False)),
                     hardening_cost_kusd=float(
                         e.get("hardening_cost_kusd", 0.0)))
                for e in s["edges"]),
            u_lo=float(s["voltage"]["lo"]), u_hi=float(s["voltage"]["hi"]),
            u_ref=float(s["voltage"]["ref"]),
            fc_tan_lo=float(s["fc_power_factor_tan"]["lo"]),
            fc_tan_hi=float(s["fc_power_factor_tan"]["hi"]),
            max_vessels=int(s.get("max_vessels", 0)))
        for s in d["load_islands"])
    vessels = tuple(
        VesselSpec(
            id=str(v["id"]),
            purchase_cost_kusd=float(v["purchase_cost_kusd"]),
            trip_cost_kusd=tuple(float(x) for x in v["trip_cost_kusd"]),
            fill_rate_kg_h=float(v["fill_rate_kg_h"]),
            unload_rate_kg_h=float(v["unload_rate_kg_h"]),
            storage_kg=_b2(v["storage_kg"], f"{v['id']}.storage_kg"),
            fuel_kg_h=float(v["fuel_kg_h"]),
            leak_frac=float(v["leak_frac"]),
            transfer_eff=float(v["transfer_eff"]),
            transit_steps={a: {b: int(x) for b, x in bb.items()}
                           for a, bb in v["transit_steps"].items()},
            berth_steps={a: int(x) for a, x in v["berth_steps"].items()})
        for v in d["vessels"])
    levels = tuple(
        WindLevel(
            id=str(u["id"]),
            wt_nominal={k: tuple(map(float, vv))
                        for k, vv in u["wt_factor_nominal"].items()},
            wt_up={k: tuple(map(float, vv))
                   for k, vv in u["wt_factor_up"].items()},
            wt_down={k: tuple(map(float, vv))
                     for k, vv in u["wt_factor_down"].items()},
            line_outage_budget=int(u["line_outage_budget"]),
            vessel_outage_budget=int(u["vessel_outage_budget"]),
            shed_cap_p_mw={k: tuple(map(float, vv))
                           for k, vv in u["shed_cap_p_mw"].items()},
            shed_cap_q_mvar={k: tuple(map(float, vv))
                             for k, vv in u["shed_cap_q_mvar"].items()},
            prob_lo=float(u["prob_bounds"][0]),
            prob_hi=float(u["prob_bounds"][1]))
        for u in d["wind_levels"])
    uu = d["uncertainty"]
    mom = uu["moments"]
    unc = UncertaintyBounds(
        pv_factor_box=_boxes_in(uu["pv_factor_box"], "pv_factor_box"),
        load_p_box=_boxes_in(uu["load_p_box_mw"], "load_p_box_mw"),
        load_q_box=_boxes_in(uu["load_q_box_mvar"], "load_q_box_mvar"),
        tau_up_box=_boxes_in(uu["wt_dev_up_box"], "wt_dev_up_box"),
        tau_dn_box=_boxes_in(uu["wt_dev_down_box"], "wt_dev_down_box"),
        pv_factor_moment=_boxes_in(mom["pv_factor"], "moments.pv_factor"),
        load_p_moment=_boxes_in(mom["load_p_mw"], "moments.load_p_mw"),
        load_q_moment=_boxes_in(mom["load_q_mvar"], "moments.load_q_mvar"),
        tau_up_moment=_boxes_in(mom["wt_dev_up"], "moments.wt_dev_up"),
        tau_dn_moment=_boxes_in(mom["wt_dev_down"], "moments.wt_dev_down"),
        vessel_intact_moment={k: _b2(v, f"moments.vessel_intact[{k}]")
                              for k, v in mom["vessel_intact"].items()},
        line_intact_moment={k: _b2(v, f"moments.line_intact[{k}]")
                            for k, v in mom["line_intact"].items()},
        hardening_moment_drop={k: float(v)
                               for k, v in
                               uu["hardening_moment_drop"].items()},
        separation_margin=float(uu.get("separation_margin", 0.01)))
    eco = d["economics"]
    economics = Economics(
        voll_kusd_per_mwh={k: float(v)
                           for k, v in eco["voll_kusd_per_mwh"].items()},
        buffer_cost_kusd_per_kg={
            k: float(v)
            for k, v in eco.get("buffer_cost_kusd_per_kg", {}).items()})
    lim = d.get("limits", {})
    limits = Limits(
        max_hardened_lines=int(lim.get("max_hardened_lines", 0)),
        max_buffer_kg=float(lim.get("max_buffer_kg", 0.0)),
        gap=float(lim.get("gap", 1e-4)),
        max_iters=int(lim.get("max_iters", 200)),
        time_limit_s=(None if lim.get("time_limit_s") is None
                      else float(lim["time_limit_s"])),
        shed_cap_mode=str(lim.get("shed_cap_mode", "system")))
    inst = Instance(time=time, catalog=catalog,
                    resource_islands=res_islands, load_islands=load_islands,
                    vessels=vessels, wind_levels=levels, uncertainty=unc,
                    economics=economics, limits=limits,
                    name=str(d.get("name", "instance")))
    validate_instance(inst)
    return inst


def load_instance(path: str | Path) -> Instance:
    """Parse and validate an instance document."""
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as e:
        raise ValidationError(f"malformed instance document {path}: {e}")
    return instance_from_dict(d)


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(instance_to_json(inst))


def instance_to_json(inst: Instance) -> str:
    return json.dumps(inst.to_dict(), indent=1, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# validation


def _check(cond: bool, msg: str, cls=ValidationError) -> None:
    if not cond:
        raise cls(msg)


def validate_instance(inst: Instance) -> None:
    """Check every declared invariant; raise naming entity and rule."""
    T = inst.time.n
    _check(T >= 1, "time grid must have at least one period")
    _check(inst.time.step_hours > 0, "step_hours must be positive")
    _check(inst.time.cycles_per_year > 0, "cycles_per_year must be positive")
    c = inst.catalog
    for nm, v in (("elz_eff", c.elz_eff), ("fc_eff", c.fc_eff),
                  ("hst_in", c.hst_in), ("hst_out", c.hst_out),
                  ("bsb_in", c.bsb_in), ("bsb_out", c.bsb_out)):
        _check(0 < v <= 1, f"catalog.{nm} must be in (0,1], got {v}")
    for nm, v in (("hst_leak_frac", c.hst_leak_frac),
                  ("bsb_leak_frac", c.bsb_leak_frac)):
        _check(0 <= v < 1, f"catalog.{nm} must be in [0,1), got {v}")
    _check(c.discount_rate > 0, "catalog.discount_rate must be positive")
    for k, e in c.devices.items():
        _check(e.lifetime_years >= 1,
               f"catalog.devices[{k}].lifetime_years must be >= 1")
    for k in DEVICE_CLASSES:
        _check(k in c.devices, f"catalog.devices missing class {k!r}")

    _check(len(inst.resource_islands) >= 1, "need at least one resource island")
    _check(len(inst.load_islands) >= 1, "need at least one load island")

    seen: set[str] = set()
    for island_id in inst.islands:
        _check(island_id not in seen, f"duplicate island id {island_id!r}")
        seen.add(island_id)
    node_ids: set[str] = set()
    for _, n in inst.resource_nodes():
        _check(n.id not in node_ids, f"duplicate node id {n.id!r}")
        node_ids.add(n.id)
        for fld in ("wt_mw", "pv_mw", "elz_mw", "hst_kg", "bsb_mwh"):
            lo, hi = getattr(n, fld)
            _check(0 <= lo <= hi, f"node {n.id}: {fld} bounds invalid")
    for s in inst.load_islands:
        for n in s.nodes:
            _check(n.id not in node_ids, f"duplicate node id {n.id!r}")
            node_ids.add(n.id)
            if not n.he:
                _check(max(n.pv_mw[1], n.fc_mw[1], n.hst_kg[1],
                           n.bsb_mwh[1]) == 0,
                       f"node {n.id}: device bounds on a non-candidate node")
        _check(s.u_lo <= s.u_ref <= s.u_hi,
               f"island {s.id}: voltage reference outside [lo, hi]")
        _validate_radial(s)

    island_ids = set(inst.islands)
    for v in inst.vessels:
        _check(v.max_trips >= 1, f"vessel {v.id}: needs >= 1 trip slot")
        _check(v.fill_rate_kg_h >= 0 and v.unload_rate_kg_h >= 0,
               f"vessel {v.id}: negative transfer rate")
        _check(0 <= v.leak_frac < 1, f"vessel {v.id}: leak_frac out of range")
        _check(0 < v.transfer_eff <= 1,
               f"vessel {v.id}: transfer_eff out of range")
        for a, bb in v.transit_steps.items():
            _check(a in island_ids, f"vessel {v.id}: unknown island {a!r}")
            for b, steps in bb.items():
                _check(b in island_ids,
                       f"vessel {v.id}: unknown island {b!r}")
                _check(steps >= 1,
                       f"vessel {v.id}: transit {a}->{b} must be >= 1 step")

    _check(len(inst.wind_levels) >= 1, "need at least one wind level")
    wt_nodes = set(inst.wt_nodes())
    lo_sum = hi_sum = 0.0
    for u in inst.wind_levels:
        _check(0 <= u.prob_lo <= u.prob_hi <= 1,
               f"level {u.id}: prob bounds invalid")
        _check(u.prob_hi > 0,
               f"level {u.id}: prob upper bound 0 means the level can "
               f"never occur; remove it")
        lo_sum += u.prob_lo
        hi_sum += u.prob_hi
        _check(u.line_outage_budget >= 0 and u.vessel_outage_budget >= 0,
               f"level {u.id}: negative outage budget")
        for j in wt_nodes:
            for tbl, nm in ((u.wt_nominal, "nominal"), (u.wt_up, "up"),
                            (u.wt_down, "down")):
                _check(j in tbl and len(tbl[j]) == T,
                       f"level {u.id}: missing {nm} factors for node {j}")
            for t in range(T):
                nom, up, dn = u.wt_nominal[j][t], u.wt_up[j][t], u.wt_down[j][t]
                _check(nom - dn >= -1e-12,
                       f"level {u.id} node {j} t{t}: nominal - down < 0")
                _check(nom + up <= 1 + 1e-12,
                       f"level {u.id} node {j} t{t}: nominal + up > 1")
    _check(lo_sum <= 1 + 1e-9,
           f"ambiguity set empty: sum of level prob lower bounds "
           f"{lo_sum:.6g} > 1", AmbiguityEmptyError)
    _check(hi_sum >= 1 - 1e-9,
           f"ambiguity set empty: sum of level prob upper bounds "
           f"{hi_sum:.6g} < 1", AmbiguityEmptyError)

    u = inst.uncertainty
    eps_sep = u.separation_margin
    _check(eps_sep > 0, "separation_margin must be positive")
    hard_ids = {e.id for _, e in inst.hardenable_edges()}
    for eid in hard_ids:
        _check(eid in u.line_intact_moment,
               f"edge {eid}: hardenable but no line_intact moment bounds")
        _check(eid in u.hardening_moment_drop,
               f"edge {eid}: hardenable but no hardening_moment_drop")
        lo, hi = u.line_intact_moment[eid]
        eps = u.hardening_moment_drop[eid]
        _check(eps >= 0, f"edge {eid}: negative hardening_moment_drop")
        _check(hi - eps >= lo + eps_sep - 1e-12,
               f"edge {eid}: ε-separation violated "
               f"({hi} - {eps} < {lo} + {eps_sep})")
    for eid in u.line_intact_moment:
        _check(eid in hard_ids,
               f"line_intact moment for unknown/non-hardenable edge {eid!r}")
    vessel_ids = {v.id for v in inst.vessels}
    vessel_can_fail = any(w.vessel_outage_budget > 0
                          for w in inst.wind_levels)
    for vid, (lo, hi) in u.vessel_intact_moment.items():
        _check(vid in vessel_ids,
               f"vessel_intact moment for unknown vessel {vid!r}")
        if vessel_can_fail:
            _check(lo <= 1 - eps_sep + 1e-12,
                   f"vessel {vid}: intactness moment lower bound {lo} "
                   f"leaves no probability for the declared outage budgets")

    # boxes and moment bounds must refer to known nodes, cover all periods,
    # and intersect (a moment bound outside its box can never be met)
    res_node_ids = {n.id for _, n in inst.resource_nodes()}
    for label, boxes, moments in (
            ("pv_factor", u.pv_factor_box, u.pv_factor_moment),
            ("load_p", u.load_p_box, u.load_p_moment),
            ("load_q", u.load_q_box, u.load_q_moment),
            ("wt_dev_up", u.tau_up_box, u.tau_up_moment),
            ("wt_dev_down", u.tau_dn_box, u.tau_dn_moment)):
        for j, arr in boxes.items():
            _check(j in node_ids, f"{label} box for unknown node {j!r}")
            _check(len(arr) == T, f"{label}[{j}]: need {T} period boxes")
        for j, arr in moments.items():
            _check(j in boxes, f"{label} moment for node {j!r} without box")
            _check(len(arr) == T, f"{label} moment[{j}]: need {T} entries")
            for t, (mlo, mhi) in enumerate(arr):
                blo, bhi = boxes[j][t]
                _check(mlo <= bhi + 1e-12 and mhi >= blo - 1e-12,
                       f"{label} moment[{j}][{t}] [{mlo},{mhi}] does not "
                       f"intersect box [{blo},{bhi}]", AmbiguityEmptyError)
                if label in ("load_p", "load_q") and j in res_node_ids:
                    _check(mlo <= 1e-12,
                           f"{label} moment[{j}][{t}]: induced-load moment "
                           f"lower bound must be 0 on resource islands")

    for j in inst.economics.voll_kusd_per_mwh:
        _check(j in node_ids, f"voll for unknown node {j!r}")
    _check(inst.limits.shed_cap_mode in ("system", "per_node"),
           f"unknown shed_cap_mode {inst.limits.shed_cap_mode!r}")
    _check(inst.limits.max_hardened_lines >= 0, "max_hardened_lines < 0")
    _check(inst.limits.max_buffer_kg >= 0, "max_buffer_kg < 0")

    # storage can survive the horizon idle: (1-leak)^T >= 1 - depth
    for nm, leak, depth in (("hst", c.hst_leak_frac, c.hst_depth_frac),
                            ("bsb", c.bsb_leak_frac, c.bsb_depth_frac)):
        _check((1 - leak) ** T >= (1 - depth) - 1e-9,
               f"catalog.{nm}: leakage {leak} over {T} periods drops below "
               f"the {depth} depth floor; idle storage would be infeasible")


def _validate_radial(s: LoadIsland) -> None:
    ids = [n.id for n in s.nodes]
    idset = set(ids)
    for e in s.edges:
        _check(e.i in idset and e.j in idset,
               f"island {s.id}: edge {e.id} references unknown node")
        _check(e.r_pu >= 0 and e.x_pu >= 0,
               f"island {s.id}: edge {e.id} negative impedance")
    _check(len(s.edges) == len(ids) - 1,
           f"island {s.id}: radial grid needs |N|-1 edges "
           f"({len(ids)} nodes, {len(s.edges)} edges)")
    # connectivity by union-find
    parent = {i: i for i in ids}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in s.edges:
        ra, rb = find(e.i), find(e.j)
        _check(ra != rb, f"island {s.id}: edge {e.id} closes a cycle")
        parent[ra] = rb
    roots = {find(i) for i in ids}
    _check(len(roots) == 1, f"island {s.id}: grid is not connected")
