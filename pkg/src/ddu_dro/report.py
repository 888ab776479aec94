"""Rendering of run reports: benchmark comparison tables and level breakdowns."""

from __future__ import annotations

from .ccg import RunReport

TABLE_COLUMNS = ("LB", "UB", "Gap", "Iter.", "Scen.", "Time (s)")


def report_row(rep: RunReport) -> list[str]:
    gap = rep.gap if rep.gap != float("inf") else float("nan")
    return [f"{rep.lower_bound:.2f}", f"{rep.upper_bound:.2f}",
            f"{100 * gap:.2f}%", str(rep.iterations),
            str(rep.scenario_count), f"{rep.total_s:.2f}"]


def render_markdown_table(rows: list[tuple[str, str, RunReport | str]]) -> str:
    """One row per (system label, algorithm, report-or-failure)."""
    header = ["System", "Algorithm", *TABLE_COLUMNS]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(["---"] * len(header)) + "|"]
    for label, alg, rep in rows:
        if isinstance(rep, RunReport):
            cells = report_row(rep)
        else:
            cells = [str(rep)] + ["-"] * (len(TABLE_COLUMNS) - 1)
        lines.append("| " + " | ".join([label, alg, *cells]) + " |")
    return "\n".join(lines) + "\n"


def render_csv_table(rows: list[tuple[str, str, RunReport | str]]) -> str:
    out = ["system,algorithm,lb,ub,gap,iterations,scenarios,time_s,status"]
    for label, alg, rep in rows:
        if isinstance(rep, RunReport):
            out.append(
                f"{label},{alg},{rep.lower_bound:.6g},{rep.upper_bound:.6g},"
                f"{rep.gap:.6g},{rep.iterations},{rep.scenario_count},"
                f"{rep.total_s:.2f},{rep.status}")
        else:
            out.append(f"{label},{alg},,,,,,,{rep}")
    return "\n".join(out) + "\n"


def render_level_breakdown_csv(per_level: dict) -> str:
    """Per-wind-level worst-case probability and expected lost-load value."""
    out = ["level,probability,expected_voll_kusd"]
    for level, row in sorted(per_level.get("levels", {}).items()):
        out.append(f"{level},{row['probability']:.6g},"
                   f"{row['expected_value']:.6g}")
    out.append(f"total,{per_level.get('total_probability', 0.0):.6g},"
               f"{per_level.get('total_worst_case_voll', 0.0):.6g}")
    return "\n".join(out) + "\n"


def render_report_markdown(rep: RunReport, name: str) -> str:
    lines = [f"# Planning run: {name}", "",
             f"* algorithm: {rep.algorithm}",
             f"* status: {rep.status}",
             f"* investment cost (k$/yr): {rep.investment_cost:.3f}",
             f"* worst-case expected operating cost (k$/yr): "
             f"{rep.worst_case_om:.3f}", ""]
    lines.append(render_markdown_table([(name, rep.algorithm, rep)]))
    if rep.plan:
        lines += ["", "## Plan", ""]
        for k, v in sorted(rep.plan.items()):
            lines.append(f"* `{k}` = {v}")
    if rep.per_level:
        lines += ["", "## Worst-case lost load by wind level", "",
                  "| Level | Probability | E[VOLL] (k$) |", "|---|---|---|"]
        for level, row in sorted(rep.per_level.get("levels", {}).items()):
            lines.append(f"| {level} | {row['probability']:.4f} | "
                         f"{row['expected_value']:.3f} |")
        lines.append(f"| total | "
                     f"{rep.per_level.get('total_probability', 0.0):.4f} | "
                     f"{rep.per_level.get('total_worst_case_voll', 0.0):.3f}"
                     f" |")
    return "\n".join(lines) + "\n"
