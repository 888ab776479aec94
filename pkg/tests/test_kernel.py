import numpy as np
import pytest

from ddu_dro.kernel import (
    EQ, GE, INF, LE, CertificateNotFound, LinearProblem, farkas_ray,
    get_backend, solve_lp, solve_milp,
)


def test_lp_optimal_with_dual():
    p = LinearProblem("t", maximize=True)
    x = p.add_var("x", lb=-10, ub=10, obj=1.0)
    p.add_row("cap", {x: 1.0}, LE, 1.0)
    r = solve_lp(p)
    assert r.optimal
    assert r.objective == pytest.approx(1.0)
    assert r.x[x] == pytest.approx(1.0)
    assert r.duals[0] == pytest.approx(1.0)


def test_lp_infeasible():
    p = LinearProblem("t")
    x = p.add_var("x", obj=1.0)
    p.add_row("a", {x: 1.0}, GE, 1.0)
    p.add_row("b", {x: 1.0}, LE, 0.0)
    assert solve_lp(p).status == "infeasible"


def test_lp_unbounded():
    p = LinearProblem("t", maximize=True)
    p.add_var("x", obj=1.0)
    assert solve_lp(p).status == "unbounded"


def test_milp_gap_and_integrality():
    p = LinearProblem("t", maximize=True)
    a = p.add_var("a", 0, 10, integer=True, obj=5.0)
    b = p.add_var("b", 0, 10, integer=True, obj=4.0)
    p.add_row("r1", {a: 6, b: 4}, LE, 24)
    p.add_row("r2", {a: 1, b: 2}, LE, 6)
    r = solve_milp(p)
    assert r.optimal
    assert r.objective == pytest.approx(20.0)
    assert np.allclose(r.x, np.round(r.x), atol=1e-7)


def test_deterministic_resolve():
    def run():
        p = LinearProblem("t")
        xs = [p.add_var(f"x{i}", 0, 5, obj=(i % 3) - 1) for i in range(8)]
        p.add_row("s", {x: 1.0 for x in xs}, GE, 3.0)
        return solve_lp(p)

    a, b = run(), run()
    assert np.array_equal(a.x, b.x)
    assert a.objective == b.objective


def test_dual_identity_on_distribution_lp():
    # max 10 pA + 4 pB over the two-point moment polytope
    p = LinearProblem("pmp", maximize=True)
    pa = p.add_var("pA", obj=10.0)
    pb = p.add_var("pB", obj=4.0)
    p.add_row("norm", {pa: 1, pb: 1}, EQ, 1.0)
    p.add_row("A_hi", {pa: 1}, LE, 0.6)
    p.add_row("A_lo", {pa: -1}, LE, -0.2)
    p.add_row("B_hi", {pb: 1}, LE, 0.8)
    p.add_row("B_lo", {pb: -1}, LE, -0.4)
    r = solve_lp(p)
    assert r.objective == pytest.approx(7.6)
    assert r.x[pa] == pytest.approx(0.6)
    pi, kap = r.duals[0], r.duals[1:]
    assert (kap >= -1e-9).all()
    rhs = np.array([0.6, -0.2, 0.8, -0.4])
    assert pi + rhs @ kap == pytest.approx(7.6)
    psi_a = np.array([1, -1, 0, 0])
    psi_b = np.array([0, 0, 1, -1])
    assert pi + psi_a @ kap >= 10.0 - 1e-8
    assert pi + psi_b @ kap >= 4.0 - 1e-8


def test_farkas_ray_moment_direction():
    # single scenario at level A cannot meet E[level B] >= 0.4
    p = LinearProblem("pmp", maximize=True)
    pa = p.add_var("p[A]", obj=10.0)
    p.add_row("norm", {pa: 1.0}, EQ, 1.0)
    p.add_row("B_lo", {pa: 0.0}, LE, -0.4)
    ray = farkas_ray(p)
    assert ray[1] > 1e-6  # multiplier on the violated moment direction
    assert 1.0 * ray[0] + (-0.4) * ray[1] < -1e-8
    assert ray[0] + 0.0 * ray[1] >= -1e-9  # scenario column stays covered


def test_farkas_ray_rejects_feasible():
    p = LinearProblem("pmp", maximize=True)
    pa = p.add_var("p[A]", obj=1.0)
    p.add_row("norm", {pa: 1.0}, EQ, 1.0)
    with pytest.raises(CertificateNotFound):
        farkas_ray(p)


def test_farkas_ray_empty_support():
    p = LinearProblem("pmp", maximize=True)
    p.add_var("dummy", lb=0.0, ub=INF, obj=0.0)
    q = LinearProblem("empty", maximize=True)
    # no columns can satisfy the normalization row
    q_norm_only = LinearProblem("none", maximize=True)
    x = q_norm_only.add_var("x", obj=0.0)
    q_norm_only.add_row("norm", {x: 0.0}, EQ, 1.0)
    ray = farkas_ray(q_norm_only)
    assert ray[0] * 1.0 < -1e-8


def test_unknown_backend():
    with pytest.raises(Exception):
        get_backend("no-such-kernel")
