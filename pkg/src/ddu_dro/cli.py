"""Command-line front end: plan, evaluate, benchmark, oracle-check, generate.

All consumers are batch users and CI: every command reads JSON inputs,
writes JSON/CSV/markdown outputs under --out, and communicates failure
through exit codes (1 input error, 2 infeasible/empty model, 3 limits).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import generator
from .ccg import (
    IterationLimitError, PlanningInfeasibleError, RunReport, Settings,
    post_evaluate, run_basic_ccg, run_ccg_dro,
)
from .compiler import FirstStageDecision, compile_instance
from .instance import (
    AmbiguityEmptyError, ValidationError, instance_to_json, load_instance,
    save_instance,
)
from .report import (
    render_csv_table, render_level_breakdown_csv, render_markdown_table,
    render_report_markdown,
)
from .wcev import AmbiguityEmptyError as EngineAmbiguityEmpty
from .wcev import InfeasibleFirstStageError

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3


def _settings(args, algorithm: str) -> Settings:
    return Settings(algorithm=algorithm, gap=args.gap,
                    max_iters=args.max_iters,
                    time_limit_s=args.time_limit,
                    pricing=args.pricing)


def _run(model, settings: Settings) -> RunReport:
    runner = {"ccg-dro": run_ccg_dro, "basic-ccg": run_basic_ccg}
    return runner[settings.algorithm](model, settings)


def cmd_plan(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        inst = load_instance(args.instance)
    except AmbiguityEmptyError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    model = compile_instance(inst)
    settings = _settings(args, args.algorithm)
    try:
        rep = _run(model, settings)
    except (PlanningInfeasibleError, EngineAmbiguityEmpty,
            InfeasibleFirstStageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except IterationLimitError as e:
        print(f"error: {e}", file=sys.stderr)
        (out / "report.json").write_text(e.report.to_json())
        return EXIT_LIMIT
    (out / "report.json").write_text(rep.to_json())
    (out / "report.md").write_text(render_report_markdown(rep, inst.name))
    (out / "cg_log.csv").write_text(rep.cg_csv())
    (out / "plan.json").write_text(json.dumps(
        {"instance": inst.name, "algorithm": rep.algorithm,
         "objective": rep.upper_bound, "plan": rep.plan,
         "plan_vector": rep.plan_vector}, indent=1) + "\n")
    print(f"{inst.name}: {rep.algorithm} finished, objective "
          f"{rep.upper_bound:.4f} (gap {rep.gap:.2e}, "
          f"{rep.iterations} iterations, {rep.scenario_count} scenarios)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        inst = load_instance(args.instance)
        plan_doc = json.loads(Path(args.plan).read_text())
        vec = np.asarray(plan_doc["plan_vector"], dtype=float)
    except (ValidationError, OSError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    model = compile_instance(inst)
    if vec.shape != (model.n_lam,):
        print(f"error: plan/instance mismatch: plan has {vec.size} "
              f"entries, instance compiles to {model.n_lam} first-stage "
              f"variables", file=sys.stderr)
        return EXIT_INPUT
    lam = FirstStageDecision(vec)
    ok, why = model.first_stage_feasible(lam)
    if not ok:
        print(f"error: plan violates the first-stage set at {why}",
              file=sys.stderr)
        return EXIT_INPUT
    try:
        per_level = post_evaluate(model, lam)
    except EngineAmbiguityEmpty as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "voll_by_level.csv").write_text(
        render_level_breakdown_csv(per_level))
    (out / "voll_report.json").write_text(
        json.dumps(per_level, indent=1, sort_keys=True) + "\n")
    print(f"total worst-case expected lost load: "
          f"{per_level['total_worst_case_voll']:.4f} k$")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    cells = cfg.get("cells", [])
    algorithms = cfg.get("algorithms", ["basic-ccg", "ccg-dro"])
    rows = []
    for cell in cells:
        inst = generator.generate_benchmark(int(cell["buses"]),
                                            float(cell["load_level"]),
                                            int(cell.get("seed", args.seed)))
        label = f"{cell['buses']} / {cell['load_level']}"
        model = compile_instance(inst)
        for alg in algorithms:
            settings = Settings(
                algorithm=alg, gap=float(cfg.get("gap", args.gap)),
                max_iters=int(cfg.get("max_iters", args.max_iters)),
                time_limit_s=cfg.get("time_limit_s", args.time_limit),
                pricing=str(cfg.get("pricing", args.pricing)))
            try:
                rep = _run(model, settings)
                rows.append((label, alg, rep))
            except (PlanningInfeasibleError, EngineAmbiguityEmpty):
                rows.append((label, alg, "infeasible"))
            except IterationLimitError:
                rows.append((label, alg, "limit"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "benchmark.md").write_text(render_markdown_table(rows))
    (out / "benchmark.csv").write_text(render_csv_table(rows))
    print(render_markdown_table(rows))
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    from .oracle import enumerate_vertices, oracle_wcev, sample_first_stage
    from .wcev import solve_wcev

    try:
        inst = load_instance(args.instance)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    model = compile_instance(inst)
    rng = np.random.default_rng(args.seed)
    verts = enumerate_vertices(model)
    lam = sample_first_stage(model, rng, verts)
    results = {}
    worst = 0.0
    for mode in ("infeasibility", "voll", "om_cost"):
        o = oracle_wcev(model, lam, mode, verts)
        try:
            w = solve_wcev(model, lam, mode).value
        except InfeasibleFirstStageError:
            w = float("inf")
        if np.isinf(o.value) or np.isinf(w):
            agree = np.isinf(o.value) == np.isinf(w)
            diff = 0.0 if agree else float("inf")
        else:
            diff = abs(o.value - w)
            agree = diff <= 1e-5 * max(1.0, abs(o.value))
        worst = max(worst, diff if np.isfinite(diff) else 1e9)
        results[mode] = {"oracle": o.value, "engine": w, "agree": agree}
        print(f"{mode}: oracle={o.value:.8g} engine={w:.8g} "
              f"{'OK' if agree else 'MISMATCH'}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "oracle_check.json").write_text(
        json.dumps(results, indent=1, default=float) + "\n")
    return EXIT_OK if all(r["agree"] for r in results.values()) else 1


def cmd_generate(args) -> int:
    kind = args.kind
    if kind == "benchmark":
        inst = generator.generate_benchmark(args.buses, args.load_level,
                                            args.seed)
    elif kind == "tiny":
        inst = generator.generate_tiny(args.seed, vessel=args.vessel,
                                       plan_grid=args.plan_grid)
    elif kind == "golden":
        inst = generator.golden_instance()
    elif kind == "minimal":
        inst = generator.minimal_instance()
    else:
        print(f"error: unknown kind {kind}", file=sys.stderr)
        return EXIT_INPUT
    if args.out_file == "-":
        print(instance_to_json(inst), end="")
    else:
        save_instance(inst, args.out_file)
        print(f"wrote {args.out_file}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ddu-dro",
        description="Distributionally robust planning of hydrogen-electrical "
                    "island microgrids")
    p.add_argument("--backend", default=None,
                   help="solver backend name (default: scipy-highs or "
                        "$DDU_DRO_BACKEND)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--algorithm", default="ccg-dro",
                        choices=["ccg-dro", "basic-ccg"])
        sp.add_argument("--gap", type=float, default=1e-4)
        sp.add_argument("--max-iters", type=int, default=200)
        sp.add_argument("--time-limit", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--pricing", default="auto",
                        choices=["auto", "kkt", "enumerate"])
        sp.add_argument("--out", default="out")

    sp = sub.add_parser("plan", help="solve a planning instance")
    sp.add_argument("instance")
    common(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("evaluate",
                        help="worst-case lost-load evaluation of a plan")
    sp.add_argument("instance")
    sp.add_argument("plan")
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("benchmark", help="run a benchmark suite config")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("oracle-check",
                        help="cross-check the engine against enumeration")
    sp.add_argument("instance")
    common(sp)
    sp.set_defaults(func=cmd_oracle_check)

    sp = sub.add_parser("generate", help="emit a synthetic instance")
    sp.add_argument("kind",
                    choices=["benchmark", "tiny", "golden", "minimal"])
    sp.add_argument("out_file")
    sp.add_argument("--buses", type=int, default=5)
    sp.add_argument("--load-level", type=float, default=0.5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--vessel", action="store_true")
    sp.add_argument("--plan-grid", action="store_true")
    sp.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.backend:
        import os

        os.environ["DDU_DRO_BACKEND"] = args.backend
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
