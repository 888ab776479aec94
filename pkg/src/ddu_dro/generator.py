"""Deterministic synthetic instance generators.

All component parameter values here are synthetic: they are sized so the
planning trade-offs are active (shedding caps bind under contingency levels,
hardening and buffering have measurable value) while staying desk-scale.
Every draw comes from one seeded 64-bit PCG stream in a fixed order, so a
given (arguments, seed) pair always produces byte-identical documents.
"""

from __future__ import annotations

import numpy as np

from .instance import (
    DeviceCatalog, DeviceEntry, Economics, Edge, Instance, Limits,
    LoadIsland, LoadNode, ResourceIsland, ResourceNode, TimeGrid,
    UncertaintyBounds, VesselSpec, WindLevel, instance_from_dict,
)


def _catalog(discount=0.08, storage_depth=0.9) -> DeviceCatalog:
    return DeviceCatalog(
        devices={
            "wt": DeviceEntry(120.0, 0.003, 20),
            "pv": DeviceEntry(80.0, 0.002, 25),
            "elz": DeviceEntry(150.0, 0.004, 15),
            "hst": DeviceEntry(0.6, 0.0008, 20),
            "bsb": DeviceEntry(40.0, 0.002, 12),
            "fc": DeviceEntry(110.0, 0.004, 15),
            "ves": DeviceEntry(0.0, 0.001, 20),
            "gd": DeviceEntry(0.0, 0.0, 30),
            "pr": DeviceEntry(0.0, 0.0, 20),
        },
        elz_eff=0.75, elz_kg_per_mwh=18.0,
        fc_eff=0.6, fc_mwh_per_kg=0.0333,
        hst_in=0.97, hst_out=0.97, hst_leak_frac=0.002,
        hst_depth_frac=storage_depth,
        bsb_in=0.95, bsb_out=0.95, bsb_leak_frac=0.002,
        bsb_depth_frac=storage_depth,
        bsb_charge_rate_frac=0.5, bsb_discharge_rate_frac=0.5,
        discount_rate=discount,
    )


def _roundtrip(inst: Instance) -> Instance:
    # every generated instance passes full ingestion validation
    return instance_from_dict(inst.to_dict())


def _const(x: float, T: int) -> tuple:
    return tuple([round(float(x), 10)] * T)


def _box(lo: float, hi: float, T: int) -> tuple:
    return tuple([(round(float(lo), 10), round(float(hi), 10))] * T)


# ---------------------------------------------------------------------------
# tiny oracle-checkable instances


def generate_tiny(seed: int, periods: int = 2, levels: int = 2,
                  hardenable: bool = True, vessel: bool = False,
                  free_load_boxes: int = 1, plan_grid: bool = False,
                  buffer_candidate: bool = False) -> Instance:
    """Small instance whose uncertainty polytope has few extreme points.

    Continuous components default to degenerate boxes; ``free_load_boxes``
    of the load-island demand boxes are left open so the vertex count stays
    enumerable. ``plan_grid`` pins every candidate size (lo == hi) so the
    first-stage grid is a pure binary enumeration.
    """
    rng = np.random.default_rng(seed)
    T = periods
    nL = int(rng.integers(2, 4))
    base_load = 2.0 + 2.0 * rng.random()
    pv_size = base_load * (2.3 + 0.5 * rng.random())
    bsb_size = base_load * (0.6 + 0.3 * rng.random())
    res_load = 0.4 + 0.4 * rng.random()
    wt_size = 1.5 + rng.random()

    res_nodes = [ResourceNode(
        id="R1n1",
        wt_mw=(wt_size, wt_size) if plan_grid else (0.0, wt_size),
        elz_mw=(0.0, 0.0),
        hst_kg=(0.0, 0.0), bsb_mwh=(0.0, 0.0))]
    load_nodes = [
        LoadNode(id=f"D1n{i+1}", he=(i == 0),
                 pv_mw=((pv_size, pv_size) if plan_grid
                        else (0.0, pv_size)) if i == 0 else (0.0, 0.0),
                 bsb_mwh=((bsb_size, bsb_size) if plan_grid
                          else (0.0, bsb_size)) if i == 0 else (0.0, 0.0))
        for i in range(nL)]
    edges = []
    for i in range(nL - 1):
        edges.append(Edge(
            id=f"L{i+1}-{i+2}", i=f"D1n{i+1}", j=f"D1n{i+2}",
            r_pu=0.01, x_pu=0.02, cap_fp_mw=3 * base_load,
            cap_fq_mvar=1.5 * base_load,
            hardenable=hardenable and i == 0,
            hardening_cost_kusd=40.0 if (hardenable and i == 0) else 0.0))

    vessels = ()
    if vessel:
        vessels = (VesselSpec(
            id="V1", purchase_cost_kusd=200.0, trip_cost_kusd=(6.0,),
            fill_rate_kg_h=60.0, unload_rate_kg_h=60.0,
            storage_kg=(0.0, 300.0), fuel_kg_h=0.4, leak_frac=0.001,
            transfer_eff=0.97,
            transit_steps={"R1": {"D1": 1}}, berth_steps={"R1": 1, "D1": 1}),)
        res_nodes = [ResourceNode(
            id="R1n1",
            wt_mw=(wt_size, wt_size) if plan_grid else (0.0, wt_size),
            elz_mw=(wt_size, wt_size) if plan_grid else (0.0, wt_size),
            hst_kg=(80.0, 80.0) if plan_grid else (0.0, 80.0),
            bsb_mwh=(0.0, 0.0))]
        load_nodes[0] = LoadNode(
            id="D1n1", he=True,
            pv_mw=load_nodes[0].pv_mw,
            fc_mw=(base_load, base_load) if plan_grid else (0.0, base_load),
            hst_kg=(60.0, 60.0) if plan_grid else (0.0, 60.0),
            bsb_mwh=load_nodes[0].bsb_mwh)

    load_boxes = {}
    load_moms = {}
    for i, n in enumerate(load_nodes):
        lv = base_load / nL * (0.7 + 0.6 * rng.random())
        if i < free_load_boxes:
            lo, hi = 0.8 * lv, 1.2 * lv
            load_boxes[n.id] = _box(lo, hi, T)
            load_moms[n.id] = _box(lo, 0.5 * (lo + hi), T)
        else:
            load_boxes[n.id] = _box(lv, lv, T)
    res_box = _box(res_load, res_load, T)

    # wind levels: calm regimes have tight shed allowances (planning must
    # build capacity), the last regime may disrupt but allows full shedding
    lvls = []
    prob_lo = np.round(rng.uniform(0.05, 0.25, size=levels), 3)
    width = np.round(rng.uniform(0.3, 0.6, size=levels), 3)
    n_hard = 1 if (hardenable and nL >= 2) else 0
    for u in range(levels):
        nom = round(0.35 + 0.5 * u / max(1, levels - 1), 4)
        frac = 0.35 + 0.65 * (u / max(1, levels - 1))
        lvls.append(WindLevel(
            id=f"L{u+1}",
            wt_nominal={"R1n1": _const(nom, T)},
            wt_up={"R1n1": _const(min(0.2, 1 - nom), T)},
            wt_down={"R1n1": _const(0.2, T)},
            line_outage_budget=(1 if (u == levels - 1 and n_hard) else 0),
            vessel_outage_budget=(1 if (u == levels - 1 and vessel) else 0),
            shed_cap_p_mw={n.id: _const(round(frac * 1.05
                                              * load_boxes[n.id][0][1], 6), T)
                           for n in load_nodes}
            | {"R1n1": _const(res_load, T)},
            shed_cap_q_mvar={n.id: _const(0.5 * base_load, T)
                             for n in load_nodes},
            prob_lo=float(prob_lo[u]),
            prob_hi=float(min(1.0, prob_lo[u] + width[u])),
        ))
    # keep the moment polytope nonempty
    if sum(l.prob_lo for l in lvls) > 1:
        lvls = [WindLevel(**{**l.__dict__, "prob_lo": 0.0}) for l in lvls]
    if sum(l.prob_hi for l in lvls) < 1:
        lvls[-1] = WindLevel(**{**lvls[-1].__dict__, "prob_hi": 1.0})

    unc = UncertaintyBounds(
        pv_factor_box={load_nodes[0].id: _box(0.5, 0.5, T)},
        load_p_box=load_boxes | {"R1n1": res_box},
        load_q_box={n.id: _box(0.0, 0.0, T) for n in load_nodes}
        | {"R1n1": _box(0.0, 0.0, T)},
        tau_up_box={"R1n1": _box(0.0, 0.0, T)},
        tau_dn_box={"R1n1": _box(1.0, 1.0, T)},
        pv_factor_moment={},
        load_p_moment=load_moms,
        load_q_moment={},
        tau_up_moment={},
        tau_dn_moment={},
        vessel_intact_moment={"V1": (0.5, 1.0)} if vessel else {},
        line_intact_moment={edges[0].id: (0.6, 0.95)} if n_hard else {},
        hardening_moment_drop={edges[0].id: 0.3} if n_hard else {},
        separation_margin=0.01,
    )
    voll = {n.id: round(3.0 + 2.0 * rng.random(), 3) for n in load_nodes}
    voll["R1n1"] = round(1.0 + rng.random(), 3)
    eco = Economics(
        voll_kusd_per_mwh=voll,
        buffer_cost_kusd_per_kg=(
            {load_nodes[0].id: 0.05} if buffer_candidate else {}))
    inst = Instance(
        time=TimeGrid(tuple(f"t{i+1}" for i in range(T)), 1.0, 364.0),
        catalog=_catalog(),
        resource_islands=(ResourceIsland("R1", tuple(res_nodes)),),
        load_islands=(LoadIsland(
            "D1", tuple(load_nodes), tuple(edges),
            u_lo=0.95, u_hi=1.05, u_ref=1.0,
            fc_tan_lo=-0.3, fc_tan_hi=0.5,
            max_vessels=1 if vessel else 0),),
        vessels=vessels,
        wind_levels=tuple(lvls),
        uncertainty=unc,
        economics=eco,
        limits=Limits(max_hardened_lines=n_hard,
                      max_buffer_kg=50.0 if buffer_candidate else 0.0,
                      gap=1e-4, max_iters=100),
        name=f"tiny-{seed}",
    )
    return _roundtrip(inst)


def minimal_instance() -> Instance:
    """Smallest valid system: one resource node, one load node, two periods."""
    T = 2
    n = LoadNode(id="Dn", he=True, pv_mw=(0.0, 2.0))
    rn = ResourceNode(id="Rn", wt_mw=(0.0, 1.0))
    unc = UncertaintyBounds(
        pv_factor_box={"Dn": _box(0.4, 0.4, T)},
        load_p_box={"Dn": _box(1.0, 1.0, T), "Rn": _box(0.2, 0.2, T)},
        load_q_box={"Dn": _box(0.0, 0.0, T), "Rn": _box(0.0, 0.0, T)},
        tau_up_box={"Rn": _box(0.0, 0.0, T)},
        tau_dn_box={"Rn": _box(0.0, 0.0, T)},
        pv_factor_moment={}, load_p_moment={}, load_q_moment={},
        tau_up_moment={}, tau_dn_moment={},
        vessel_intact_moment={}, line_intact_moment={},
        hardening_moment_drop={})
    lvl = WindLevel(
        id="L1", wt_nominal={"Rn": _const(0.5, T)},
        wt_up={"Rn": _const(0.0, T)}, wt_down={"Rn": _const(0.0, T)},
        line_outage_budget=0, vessel_outage_budget=0,
        shed_cap_p_mw={"Dn": _const(2.0, T), "Rn": _const(1.0, T)},
        shed_cap_q_mvar={"Dn": _const(1.0, T)},
        prob_lo=1.0, prob_hi=1.0)
    inst = Instance(
        time=TimeGrid(("t1", "t2"), 1.0, 364.0),
        catalog=_catalog(),
        resource_islands=(ResourceIsland("R", (rn,)),),
        load_islands=(LoadIsland("D", (n,), (), 0.95, 1.05, 1.0,
                                 -0.3, 0.5, 0),),
        vessels=(), wind_levels=(lvl,), uncertainty=unc,
        economics=Economics({"Dn": 4.0, "Rn": 1.0}, {}),
        limits=Limits(), name="minimal")
    return _roundtrip(inst)


# ---------------------------------------------------------------------------
# desk-scale benchmark systems


def generate_benchmark(buses: int, load_level: float, seed: int) -> Instance:
    """Synthetic radial system with ``buses`` load-island nodes.

    The nominal total load equals ``load_level`` times the nominal
    generation capability (the installable solar capacity on the load
    island); all draws are independent of ``load_level``, so two calls that
    differ only in load level share the whole topology and differ exactly by
    the load scale factor.
    """
    if buses < 3:
        raise ValueError("buses must be >= 3")
    if load_level not in (0.5, 0.7, 0.9):
        raise ValueError("load_level must be one of 0.5, 0.7, 0.9")
    rng = np.random.default_rng(seed)
    T = 4  # one full vessel rotation (depart, load, return) fits the cycle

    # resource island: one site with the full production chain
    wt = round(12.0 + 3.0 * rng.random(), 3)
    res_nodes = [ResourceNode(
        id="Rn1", wt_mw=(0.0, wt), pv_mw=(0.0, round(wt * 0.8, 3)),
        elz_mw=(0.0, wt), hst_kg=(0.0, 2000.0), bsb_mwh=(0.0, 6.0))]

    he_idx = [0, buses // 2]
    pv_caps = {}
    fc_caps = {}
    nodes = []
    for i in range(buses):
        nid = f"B{i+1}"
        he = i in he_idx
        pv = round(4.0 + 2.0 * rng.random(), 3) if he else 0.0
        fc = round(2.5 + 1.0 * rng.random(), 3) if he else 0.0
        if he:
            pv_caps[nid] = pv
            fc_caps[nid] = fc
        nodes.append(LoadNode(
            id=nid, he=he, pv_mw=(0.0, pv), fc_mw=(0.0, fc),
            hst_kg=(0.0, 800.0) if he else (0.0, 0.0)))
    gen_capability = sum(pv_caps.values())
    total_load = load_level * gen_capability
    shares = rng.dirichlet(np.ones(buses))
    profile = 0.8 + 0.4 * rng.random(T)

    edges = []
    hard = []
    for i in range(buses - 1):
        eid = f"E{i+1}-{i+2}"
        hardenable = i in (0, buses // 2)
        if hardenable:
            hard.append(eid)
        edges.append(Edge(
            id=eid, i=f"B{i+1}", j=f"B{i+2}",
            r_pu=round(0.0002 + 0.0001 * rng.random(), 6),
            x_pu=round(0.0004 + 0.0002 * rng.random(), 6),
            cap_fp_mw=round(1.2 * gen_capability, 3),
            cap_fq_mvar=round(0.6 * gen_capability, 3),
            hardenable=hardenable,
            hardening_cost_kusd=round(30.0 + 20.0 * rng.random(), 3)
            if hardenable else 0.0))

    vessel = VesselSpec(
        id="V1", purchase_cost_kusd=250.0, trip_cost_kusd=(8.0,),
        fill_rate_kg_h=450.0, unload_rate_kg_h=450.0,
        storage_kg=(0.0, 1200.0), fuel_kg_h=0.5, leak_frac=0.001,
        transfer_eff=0.97, transit_steps={"RES": {"LOAD": 1}},
        berth_steps={"RES": 1, "LOAD": 1})

    # six levels: three calm regimes, one degraded, two contingency regimes
    wt_nodes = [n.id for n in res_nodes]
    lvl_spec = [
        # (nominal factor, up, down, line budget, vessel budget,
        #  shed fraction, prob bounds)
        (0.40, 0.10, 0.15, 0, 0, 0.30, (0.05, 0.25)),
        (0.60, 0.10, 0.15, 0, 0, 0.30, (0.10, 0.30)),
        (0.85, 0.10, 0.15, 0, 0, 0.30, (0.10, 0.30)),
        (0.80, 0.10, 0.20, 1, 0, 0.50, (0.05, 0.25)),
        (0.45, 0.10, 0.25, 1, 1, 0.80, (0.00, 0.15)),
        (0.10, 0.05, 0.10, 2, 1, 1.00, (0.00, 0.12)),
    ]
    levels = []
    for u, (nom, up, dn, dl, dv, shed, pb) in enumerate(lvl_spec):
        shed_p = {n.id: tuple(round(shed * total_load * shares[i] * profile[t],
                                    10) for t in range(T))
                  for i, n in enumerate(nodes)}
        shed_p |= {n.id: _const(0.3, T) for n in res_nodes}
        # reactive shedding is always allowed in full: the active-power caps
        # carry the resilience tension
        shed_q = {n.id: tuple(round(0.12 * total_load * shares[i]
                                    * profile[t], 10) for t in range(T))
                  for i, n in enumerate(nodes)}
        levels.append(WindLevel(
            id=f"L{u+1}",
            wt_nominal={j: _const(nom, T) for j in wt_nodes},
            wt_up={j: _const(up, T) for j in wt_nodes},
            wt_down={j: _const(dn, T) for j in wt_nodes},
            line_outage_budget=min(dl, len(hard)),
            vessel_outage_budget=dv,
            shed_cap_p_mw=shed_p, shed_cap_q_mvar=shed_q,
            prob_lo=pb[0], prob_hi=pb[1]))

    # demand variability concentrated on the head bus; the rest of the grid
    # carries fixed profiles so the uncertainty polytope stays desk-scale
    load_p_box = {}
    load_p_mom = {}
    load_q_box = {}
    for i, n in enumerate(nodes):
        base = np.array([total_load * shares[i] * profile[t]
                         for t in range(T)])
        if i == 0:
            load_p_box[n.id] = tuple(
                (round(0.9 * b, 10), round(1.1 * b, 10)) if t < 2
                else (round(b, 10), round(b, 10))
                for t, b in enumerate(base))
            load_p_mom[n.id] = tuple(
                (round(0.9 * b, 10), round(b, 10)) if t < 2
                else (round(b, 10), round(b, 10))
                for t, b in enumerate(base))
        else:
            load_p_box[n.id] = tuple((round(b, 10), round(b, 10))
                                     for b in base)
        load_q_box[n.id] = _box(0.0, 0.0, T)
    # induced resource-island service demand, gated by siting decisions
    for n in res_nodes:
        load_p_box[n.id] = tuple((0.3, 0.3) if t == 0 else (0.0, 0.0)
                                 for t in range(T))
        load_q_box[n.id] = _box(0.0, 0.0, T)

    unc = UncertaintyBounds(
        pv_factor_box={j: tuple((0.35, 0.55) if (t < 2 and j == "B1")
                                else (0.45, 0.45) for t in range(T))
                       for j in list(pv_caps) + [n.id for n in res_nodes]},
        load_p_box=load_p_box, load_q_box=load_q_box,
        tau_up_box={j: _box(0.0, 0.0, T) for j in wt_nodes},
        tau_dn_box={j: tuple((0.0, 1.0) if t < 2 else (1.0, 1.0)
                             for t in range(T)) for j in wt_nodes},
        pv_factor_moment={"B1": tuple((0.38, 0.5) if t < 2 else (0.45, 0.45)
                                      for t in range(T))},
        load_p_moment=load_p_mom,
        load_q_moment={},
        tau_up_moment={},
        tau_dn_moment={j: tuple((0.2, 0.9) if t < 2 else (1.0, 1.0)
                                for t in range(T)) for j in wt_nodes},
        vessel_intact_moment={"V1": (0.7, 1.0)},
        line_intact_moment={e: (0.55, 0.97) for e in hard},
        hardening_moment_drop={e: 0.25 for e in hard},
        separation_margin=0.01)

    eco = Economics(
        voll_kusd_per_mwh={n.id: round(3.0 + 3.0 * rng.random(), 3)
                           for n in nodes}
        | {n.id: 1.5 for n in res_nodes},
        buffer_cost_kusd_per_kg={nodes[i].id: 0.05 for i in he_idx}
        | {n.id: 0.05 for n in res_nodes})
    inst = Instance(
        time=TimeGrid(tuple(f"t{i+1}" for i in range(T)), 2.0, 182.0),
        catalog=_catalog(storage_depth=1.0),
        resource_islands=(ResourceIsland("RES", tuple(res_nodes)),),
        load_islands=(LoadIsland("LOAD", tuple(nodes), tuple(edges),
                                 0.9, 1.1, 1.0, -0.3, 0.5, 2),),
        vessels=(vessel,),
        wind_levels=tuple(levels),
        uncertainty=unc, economics=eco,
        limits=Limits(max_hardened_lines=1, max_buffer_kg=700.0,
                      gap=1e-4, max_iters=200),
        name=f"bench-{buses}-{load_level}-{seed}")
    return _roundtrip(inst)


# ---------------------------------------------------------------------------
# golden resilience instance


def golden_instance() -> Instance:
    """Fixed 12-node system whose hardenable lines are E2-5 and E11-12.

    Used by the resilience-direction checks: hardening both lines and
    allowing buffering strictly reduces worst-case expected lost load.
    """
    T = 4
    rng = np.random.default_rng(20240501)
    res_nodes = (
        ResourceNode(id="G1", wt_mw=(0.0, 6.0), pv_mw=(0.0, 3.0),
                     elz_mw=(0.0, 6.0), hst_kg=(0.0, 400.0),
                     bsb_mwh=(0.0, 5.0)),
    )
    # star-ish radial layout over 12 nodes with the two named feeders
    links = [(1, 2), (2, 3), (3, 4), (2, 5), (5, 6), (6, 7), (1, 8),
             (8, 9), (9, 10), (10, 11), (11, 12)]
    he_ids = {"N2", "N10"}
    nodes = []
    for i in range(1, 13):
        nid = f"N{i}"
        he = nid in he_ids
        nodes.append(LoadNode(
            id=nid, he=he,
            pv_mw=(0.0, 12.0) if he else (0.0, 0.0),
            fc_mw=(0.0, 4.0) if he else (0.0, 0.0),
            hst_kg=(0.0, 400.0) if he else (0.0, 0.0),
            bsb_mwh=(0.0, 4.0) if he else (0.0, 0.0)))
    edges = []
    for (a, b) in links:
        eid = f"E{a}-{b}"
        hardenable = eid in ("E2-5", "E11-12")
        edges.append(Edge(
            id=eid, i=f"N{a}", j=f"N{b}", r_pu=0.01, x_pu=0.02,
            cap_fp_mw=12.0, cap_fq_mvar=6.0, hardenable=hardenable,
            hardening_cost_kusd=35.0 if hardenable else 0.0))
    vessel = VesselSpec(
        id="V1", purchase_cost_kusd=250.0, trip_cost_kusd=(8.0,),
        fill_rate_kg_h=200.0, unload_rate_kg_h=200.0,
        storage_kg=(0.0, 500.0),
        fuel_kg_h=0.5, leak_frac=0.001, transfer_eff=0.97,
        transit_steps={"RES": {"LOAD": 1}}, berth_steps={"RES": 1, "LOAD": 1})

    shares = rng.dirichlet(np.ones(12) * 3.0)
    total_load = 6.0
    lvl_spec = [
        (0.30, 0.10, 0.15, 0, 0, 0.30, (0.10, 0.40)),
        (0.70, 0.10, 0.15, 0, 0, 0.30, (0.15, 0.45)),
        (0.85, 0.05, 0.20, 1, 0, 0.45, (0.05, 0.30)),
        (0.45, 0.05, 0.25, 2, 1, 0.80, (0.00, 0.15)),
        (0.10, 0.05, 0.10, 2, 1, 1.00, (0.00, 0.12)),
    ]
    levels = []
    for u, (nom, up, dn, dl, dv, shed, pb) in enumerate(lvl_spec):
        levels.append(WindLevel(
            id=f"L{u+1}",
            wt_nominal={"G1": _const(nom, T)},
            wt_up={"G1": _const(up, T)}, wt_down={"G1": _const(dn, T)},
            line_outage_budget=dl, vessel_outage_budget=dv,
            shed_cap_p_mw={n.id: _const(round(shed * total_load
                                              * shares[i] + 0.02, 6), T)
                           for i, n in enumerate(nodes)}
            | {"G1": _const(0.4, T)},
            shed_cap_q_mvar={n.id: _const(round(0.06 * total_load
                                                * shares[i] + 0.01, 6), T)
                             for i, n in enumerate(nodes)},
            prob_lo=pb[0], prob_hi=pb[1]))
    load_p_box = {n.id: _box(round(total_load * shares[i], 6),
                             round(total_load * shares[i], 6), T)
                  for i, n in enumerate(nodes)}
    load_p_box["G1"] = _box(0.3, 0.3, T)
    load_q_box = {n.id: _box(round(0.05 * total_load * shares[i], 6),
                             round(0.05 * total_load * shares[i], 6), T)
                  for i, n in enumerate(nodes)}
    load_q_box["G1"] = _box(0.0, 0.0, T)
    unc = UncertaintyBounds(
        pv_factor_box={j: _box(0.4, 0.4, T) for j in ("N2", "N10", "G1")},
        load_p_box=load_p_box, load_q_box=load_q_box,
        tau_up_box={"G1": _box(0.0, 0.0, T)},
        tau_dn_box={"G1": tuple((0.0, 1.0) if t < 2 else (1.0, 1.0)
                                for t in range(T))},
        pv_factor_moment={},
        load_p_moment={}, load_q_moment={},
        tau_up_moment={},
        tau_dn_moment={"G1": tuple((0.2, 1.0) if t < 2 else (1.0, 1.0)
                                   for t in range(T))},
        vessel_intact_moment={"V1": (0.75, 1.0)},
        line_intact_moment={"E2-5": (0.55, 0.95), "E11-12": (0.55, 0.95)},
        hardening_moment_drop={"E2-5": 0.3, "E11-12": 0.3},
        separation_margin=0.01)
    eco = Economics(
        voll_kusd_per_mwh={n.id: 5.0 for n in nodes} | {"G1": 1.5},
        buffer_cost_kusd_per_kg={"N10": 0.05})
    inst = Instance(
        time=TimeGrid(tuple(f"t{i+1}" for i in range(T)), 2.0, 182.0),
        catalog=_catalog(),
        resource_islands=(ResourceIsland("RES", res_nodes),),
        load_islands=(LoadIsland("LOAD", tuple(nodes), tuple(edges),
                                 0.95, 1.05, 1.0, -0.3, 0.5, 2),),
        vessels=(vessel,),
        wind_levels=tuple(levels),
        uncertainty=unc, economics=eco,
        limits=Limits(max_hardened_lines=2, max_buffer_kg=200.0,
                      gap=1e-4, max_iters=200),
        name="golden-12bus")
    return _roundtrip(inst)
