"""Narrow LP/MILP kernel interface plus Farkas certificate synthesis.

The default backend wraps scipy's HiGHS bindings. Everything upstream talks
to :class:`LinearProblem` / :class:`SolveResult` only, so a different kernel
can be dropped in through the backend registry (``DDU_DRO_BACKEND``).

Dual sign convention (used by every caller): the reported dual of a row is
the sensitivity of the reported optimal objective to that row's right-hand
side. For a maximization problem with a ``<=`` row this dual is >= 0; an
equality row's dual is free.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

INF = float("inf")

LE, GE, EQ = "<=", ">=", "=="

#: absolute tolerance for cross-module value comparisons
VALUE_TOL = 1e-6
#: tolerance under which a synthesized Farkas objective counts as "no ray"
_RAY_TOL = 1e-7


class KernelError(RuntimeError):
    """Solver kernel failed in a way the caller cannot recover from."""


class CertificateNotFound(KernelError):
    """farkas_ray was called on a problem that is actually feasible."""


@dataclass
class SolverConfig:
    """Per-solve limits and tolerances passed down to the kernel."""

    time_limit: float | None = None
    mip_gap: float = 1e-6
    feas_tol: float = 1e-9
    presolve: bool = True

    def milp_options(self) -> dict:
        opts = {"mip_rel_gap": self.mip_gap, "presolve": self.presolve}
        if self.time_limit is not None:
            opts["time_limit"] = self.time_limit
        return opts


@dataclass
class SolveResult:
    """Kernel verdict for one problem.

    ``duals`` is aligned with the problem's row order and present only for
    optimally solved LPs.
    """

    status: str  # optimal | infeasible | unbounded | limit | error
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    bound: float | None = None  # best proven bound (MILP limit case)
    wall_ms: float = 0.0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, idx) -> float:
        return float(self.x[idx])


class LinearProblem:
    """Incrementally assembled LP/MILP in row form.

    Rows are stored as sparse triplets; senses are normalized at solve time.
    Variable and row names exist for diagnostics and golden-file dumps.
    """

    def __init__(self, name: str = "lp", maximize: bool = False):
        self.name = name
        self.maximize = maximize
        self.var_names: list[str] = []
        self._var_index: dict[str, int] = {}
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []
        self.obj: list[float] = []
        self.row_names: list[str] = []
        self.row_sense: list[str] = []
        self.row_rhs: list[float] = []
        self._ri: list[int] = []
        self._ci: list[int] = []
        self._cv: list[float] = []

    # -- construction -----------------------------------------------------

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF,
                integer: bool = False, obj: float = 0.0) -> int:
        if name in self._var_index:
            raise ValueError(f"duplicate variable {name!r}")
        j = len(self.var_names)
        self._var_index[name] = j
        self.var_names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.integer.append(integer)
        self.obj.append(obj)
        return j

    def var(self, name: str) -> int:
        return self._var_index[name]

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.row_names)

    def add_row(self, name: str, coefs: dict[int, float], sense: str,
                rhs: float) -> int:
        if sense not in (LE, GE, EQ):
            raise ValueError(f"bad sense {sense!r}")
        i = len(self.row_names)
        self.row_names.append(name)
        self.row_sense.append(sense)
        self.row_rhs.append(float(rhs))
        for j, v in coefs.items():
            if v != 0.0:
                self._ri.append(i)
                self._ci.append(j)
                self._cv.append(float(v))
        return i

    def set_obj(self, idx: int, coef: float) -> None:
        self.obj[idx] = float(coef)

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self._cv, (self._ri, self._ci)),
            shape=(self.num_rows, self.num_vars),
        )

    @property
    def is_mip(self) -> bool:
        return any(self.integer)

    # -- diagnostics -------------------------------------------------------

    def dump_triplets(self) -> str:
        """Sparse `row col value` text plus a named-row manifest."""
        lines = [f"# problem {self.name}: {self.num_rows} rows, "
                 f"{self.num_vars} cols"]
        order = np.lexsort((self._ci, self._ri))
        for k in order:
            lines.append(f"{self._ri[k]} {self._ci[k]} {self._cv[k]:.12g}")
        lines.append("# rows")
        for i, nm in enumerate(self.row_names):
            lines.append(f"# {i} {nm} {self.row_sense[i]} "
                         f"{self.row_rhs[i]:.12g}")
        lines.append("# cols")
        for j, nm in enumerate(self.var_names):
            lines.append(f"# {j} {nm} [{self.lb[j]:.6g},{self.ub[j]:.6g}]"
                         f"{' int' if self.integer[j] else ''}")
        return "\n".join(lines) + "\n"


class ScipyHighsBackend:
    """LP/MILP kernel on top of scipy.optimize (HiGHS)."""

    name = "scipy-highs"

    def solve_lp(self, prob: LinearProblem,
                 config: SolverConfig | None = None) -> SolveResult:
        config = config or SolverConfig()
        t0 = time.perf_counter()
        A = prob.matrix()
        sense = np.asarray(prob.row_sense)
        rhs = np.asarray(prob.row_rhs, dtype=float)
        c = np.asarray(prob.obj, dtype=float)
        sign = -1.0 if prob.maximize else 1.0

        eq_mask = sense == EQ
        ub_mask = ~eq_mask
        # normalize >= rows to <= by negation; remember to flip their duals
        flip = np.where(sense == GE, -1.0, 1.0)
        A_ub = sp.diags(flip[ub_mask]) @ A[ub_mask] if ub_mask.any() else None
        b_ub = (flip[ub_mask] * rhs[ub_mask]) if ub_mask.any() else None
        A_eq = A[eq_mask] if eq_mask.any() else None
        b_eq = rhs[eq_mask] if eq_mask.any() else None

        options = {"presolve": True}
        if config.time_limit is not None:
            options["time_limit"] = config.time_limit
        res = linprog(
            sign * c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
            bounds=list(zip(prob.lb, prob.ub)), method="highs",
            options=options,
        )
        wall = (time.perf_counter() - t0) * 1e3
        status = {0: "optimal", 1: "limit", 2: "infeasible",
                  3: "unbounded", 4: "error"}.get(res.status, "error")
        if status != "optimal":
            return SolveResult(status=status, wall_ms=wall,
                               message=str(res.message))

        duals = np.zeros(prob.num_rows)
        if ub_mask.any():
            duals[ub_mask] = flip[ub_mask] * sign * res.ineqlin.marginals
        if eq_mask.any():
            duals[eq_mask] = sign * res.eqlin.marginals
        red = sign * (res.lower.marginals + res.upper.marginals)
        return SolveResult(
            status="optimal", x=np.asarray(res.x),
            objective=float(sign * res.fun), duals=duals,
            reduced_costs=red, wall_ms=wall,
        )

    def solve_milp(self, prob: LinearProblem,
                   config: SolverConfig | None = None) -> SolveResult:
        config = config or SolverConfig()
        t0 = time.perf_counter()
        A = prob.matrix()
        sense = np.asarray(prob.row_sense)
        rhs = np.asarray(prob.row_rhs, dtype=float)
        lo = np.where(sense == LE, -np.inf, rhs)
        hi = np.where(sense == GE, np.inf, rhs)
        c = np.asarray(prob.obj, dtype=float)
        sign = -1.0 if prob.maximize else 1.0
        constraints = (LinearConstraint(A, lo, hi)
                       if prob.num_rows else None)
        res = milp(
            sign * c,
            constraints=constraints,
            integrality=np.asarray(prob.integer, dtype=int),
            bounds=Bounds(np.asarray(prob.lb), np.asarray(prob.ub)),
            options=config.milp_options(),
        )
        wall = (time.perf_counter() - t0) * 1e3
        status = {0: "optimal", 1: "limit", 2: "infeasible",
                  3: "unbounded", 4: "error"}.get(res.status, "error")
        if res.x is None and status in ("optimal", "limit"):
            status = "infeasible" if status == "optimal" else status
            return SolveResult(status=status, wall_ms=wall,
                               message=str(res.message))
        if status not in ("optimal", "limit"):
            return SolveResult(status=status, wall_ms=wall,
                               message=str(res.message))
        obj = float(sign * res.fun)
        bound = obj
        if status == "limit" and res.mip_dual_bound is not None:
            bound = float(sign * res.mip_dual_bound)
        return SolveResult(status=status, x=np.asarray(res.x),
                           objective=obj, bound=bound, wall_ms=wall,
                           message=str(res.message))


_BACKENDS = {"scipy-highs": ScipyHighsBackend}


def get_backend(name: str | None = None):
    """Resolve a backend by argument, environment, or default."""
    name = name or os.environ.get("DDU_DRO_BACKEND", "scipy-highs")
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise KernelError(f"unknown solver backend {name!r}; "
                          f"available: {sorted(_BACKENDS)}") from None


def solve_lp(prob: LinearProblem, config: SolverConfig | None = None,
             backend=None) -> SolveResult:
    backend = backend or get_backend()
    res = backend.solve_lp(prob, config)
    if res.status == "error":
        raise KernelError(f"kernel error on {prob.name}: {res.message} "
                          f"({prob.num_rows} rows, {prob.num_vars} cols)")
    return res


def solve_milp(prob: LinearProblem, config: SolverConfig | None = None,
               backend=None) -> SolveResult:
    backend = backend or get_backend()
    res = backend.solve_milp(prob, config)
    if res.status == "error":
        raise KernelError(f"kernel error on {prob.name}: {res.message} "
                          f"({prob.num_rows} rows, {prob.num_vars} cols)")
    return res


def farkas_ray(prob: LinearProblem, backend=None) -> np.ndarray:
    """Infeasibility certificate for an LP over nonnegative variables.

    For ``{x >= 0 : A_eq x = b_eq, A_ub x <= b_ub}`` returns row multipliers
    ``y`` (free on equalities, >= 0 on inequalities) with ``A^T y >= 0`` and
    ``b^T y < 0``, synthesized by minimizing ``b^T y`` over the box-normalized
    dual cone. Raises :class:`CertificateNotFound` when no ray exists, which
    signals the problem was feasible after all.
    """
    if any(l != 0.0 or u != INF for l, u in zip(prob.lb, prob.ub)):
        raise ValueError("farkas_ray expects nonnegative unbounded variables")
    ranges = {EQ: (-1.0, 1.0), LE: (0.0, 1.0), GE: (-1.0, 0.0)}
    alt = LinearProblem(name=f"{prob.name}.alt")
    y = [
        alt.add_var(f"y[{i}]", lb=ranges[s][0], ub=ranges[s][1],
                    obj=prob.row_rhs[i])
        for i, s in enumerate(prob.row_sense)
    ]
    A = prob.matrix().tocsc()
    for j in range(prob.num_vars):
        col = A.getcol(j).tocoo()
        coefs = {y[i]: v for i, v in zip(col.row, col.data)}
        alt.add_row(f"cone[{j}]", coefs, GE, 0.0)
    res = solve_lp(alt, backend=backend)
    if not res.optimal or res.objective >= -_RAY_TOL:
        raise CertificateNotFound(
            f"no Farkas ray for {prob.name}: alternative objective "
            f"{res.objective if res.optimal else res.status}")
    return res.x
