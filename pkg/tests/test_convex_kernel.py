import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from oracles import capacity_of, grid_waterfill
from tile360.convex_kernel import (ConvexProgram, InfeasibleStartError, ProgramBuilder, SolverOptions,
                                   bisect, kkt_residual, solve_convex, waterfill)


# --- bisection and water-filling ---------------------------------------------


def test_bisect_examples():
    assert bisect(lambda x: x - 2, 0, 10) == pytest.approx(2, abs=1e-10)
    level = bisect(lambda L: np.maximum(L - np.ones(2), 0).sum() - 2, 1.0, 5.0)
    assert level == pytest.approx(2, abs=1e-10)
    assert bisect(lambda x: 5 - x, 0, 5) == 5
    with pytest.raises(ValueError):
        bisect(lambda x: x + 1, 0, 1)


def test_waterfill_examples():
    v, C, _ = waterfill([3.0], 2.0, 0.5, 10.0)
    assert v.tolist() == [2.0] and C == pytest.approx(10 * np.log2(1 + 3 * 2 / 0.5))
    v, _, _ = waterfill([2.0, 2.0], 1.0, 1.0, 1.0)
    assert np.allclose(v, 0.5)
    v, C, _ = waterfill([4.0, 1.0], 1.0, 1.0, 1.0)
    assert abs(C - grid_waterfill([4.0, 1.0], 1.0, 1.0, 1.0)) <= 1e-5
    assert np.allclose(v, (0.875, 0.125))
    with pytest.raises(ValueError):
        waterfill([0.0, 0.0], 1.0, 1.0, 1.0)


def test_waterfill_zero_power_and_dead_subcarrier():
    v, C, _ = waterfill([1.0, 2.0], 0.0, 1.0, 1.0)
    assert C == 0 and not v.any()
    v, C, _ = waterfill([0.0, 2.0], 1.0, 1.0, 1.0)
    assert v.tolist() == [0.0, 1.0]


@given(st.integers(0, 10_000))
def test_water_level_uniform_and_budget_met(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(1, 9))
    g = rng.exponential(size=N)
    P, s = rng.uniform(0.01, 10), rng.uniform(0.05, 3)
    v, C, rho = waterfill(g, P, s, 1.0)
    level = 1 / (rho * np.log(2))
    on = v > 0
    assert np.all(np.abs(s / g[on] + v[on] - level) <= 1e-8 * max(1.0, level))
    assert np.all(s / g[~on] >= level - 1e-8 * max(1.0, level))
    assert abs(v.sum() - P) <= 1e-12 * P
    assert C == pytest.approx(capacity_of(g, v, s, 1.0), rel=1e-12)


# --- solve_convex -------------------------------------------------------------


def _quadratic(Q, c, A=None, b=None, lower=None, upper=None):
    def obj(x):
        return -0.5 * x @ Q @ x + c @ x, -Q @ x + c

    cons = None
    if A is not None:
        def cons(x):
            return A @ x - b, A
    return ConvexProgram(Q.shape[0], obj, cons, objective_hessian=lambda x: -Q,
                         constraints_hessian=None if A is None else (lambda x, lam: np.zeros_like(Q)),
                         lower=lower, upper=upper)


def test_box_quadratic_goes_to_center():
    n = 4
    prog = _quadratic(np.eye(n), np.zeros(n), lower=-np.ones(n), upper=np.ones(n))
    x, rep = solve_convex(prog, np.full(n, 0.5))
    assert np.allclose(x, 0, atol=1e-7) and rep.status == "optimal"


def test_log_sum_on_simplex():
    def obj(x):
        return np.sum(np.log(x)), 1 / x

    prog = ConvexProgram(3, obj, lambda x: (np.array([x.sum() - 1]), np.ones((1, 3))),
                         objective_hessian=lambda x: -np.diag(1 / x ** 2),
                         constraints_hessian=lambda x, lam: np.zeros((3, 3)),
                         lower=np.zeros(3), in_domain=lambda x: bool(np.all(x > 0)))
    x, rep = solve_convex(prog, np.array([0.1, 0.2, 0.3]))
    assert np.allclose(x, 1 / 3, atol=1e-7)
    assert rep.kkt_residual <= 1e-8


def _random_qp(seed, n=8, m=5):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    Q = B @ B.T + 0.1 * np.eye(n)
    c = rng.normal(size=n) * 5
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.5, 2.0, m)
    return Q, c, A, b


@pytest.mark.parametrize("seed", range(5))
def test_random_qp_matches_independent_optimizer(seed):
    Q, c, A, b = _random_qp(seed)
    x, rep = solve_convex(_quadratic(Q, c, A, b), np.zeros(8))
    f = -0.5 * x @ Q @ x + c @ x
    ref = minimize(lambda z: 0.5 * z @ Q @ z - c @ z, np.zeros(8), jac=lambda z: Q @ z - c,
                   method="SLSQP", constraints=[{"type": "ineq", "fun": lambda z: b - A @ z,
                                                 "jac": lambda z: -A}],
                   options={"ftol": 1e-15, "maxiter": 1000})
    assert abs(f - (-ref.fun)) <= 1e-6 * max(1.0, abs(ref.fun))
    assert rep.kkt_residual <= 1e-8


@pytest.mark.parametrize("method", ["barrier", "primal_dual"])
def test_both_methods_reach_tolerance(method):
    Q, c, A, b = _random_qp(11)
    x, rep = solve_convex(_quadratic(Q, c, A, b), np.zeros(8), SolverOptions(method=method))
    assert rep.status == "optimal" and rep.kkt_residual <= 1e-8


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_solution_never_worse_than_start(seed):
    Q, c, A, b = _random_qp(seed, n=4, m=3)
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=4) * 0.01
    prog = _quadratic(Q, c, A, b)
    if not prog.feasible(x0):
        return
    x, _ = solve_convex(prog, x0)
    assert prog.value(x) >= prog.value(x0) - 1e-12


def test_infeasible_start_goes_through_phase_one():
    Q, c, A, b = _random_qp(3)
    prog = _quadratic(Q, c, A, b)
    x0 = 100 * np.ones(8)
    assert not prog.feasible(x0)
    x, rep = solve_convex(prog, x0)
    assert rep.status == "optimal"
    with pytest.raises(InfeasibleStartError):
        solve_convex(prog, x0, SolverOptions(phase_one=False))


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(mu=1.0)
    with pytest.raises(ValueError):
        SolverOptions(tolerance=0.0)


# --- KKT residual ---------------------------------------------------------------


def _waterfill_program(g, P, s):
    def obj(v):
        return float(np.sum(np.log2(1 + g * v / s))), g / ((s + g * v) * np.log(2))

    return ConvexProgram(g.size, obj, lambda v: (np.array([v.sum() - P]), np.ones((1, g.size))),
                         lower=np.zeros(g.size))


def _waterfill_kkt():
    g, P, s = np.array([4.0, 1.0, 0.05]), 1.0, 1.0
    v, _, rho = waterfill(g, P, s, 1.0)
    prog = _waterfill_program(g, P, s)
    grad = prog.objective(v)[1]
    # general row multiplier rho, then lower-bound rows -v <= 0
    lam = np.concatenate(([rho], np.where(v > 0, 0.0, rho - grad)))
    return prog, v, lam


def test_kkt_residual_zero_at_waterfill_optimum():
    prog, v, lam = _waterfill_kkt()
    assert kkt_residual(prog, v, lam) <= 1e-10


def test_kkt_residual_flags_suboptimal_point():
    prog, v, lam = _waterfill_kkt()
    assert kkt_residual(prog, v * 0.5, lam) > 1e-8


def test_kkt_residual_grows_with_perturbation():
    prog, v, lam = _waterfill_kkt()
    d = np.array([1.0, -0.5, 0.0])
    res = [kkt_residual(prog, v + s * d, lam) for s in (1e-5, 1e-4, 1e-3)]
    assert res[0] < res[1] < res[2]


# --- assembled rows -------------------------------------------------------------


def test_builder_rows_and_objective():
    b = ProgramBuilder()
    x = b.add_variables("x", 2, lower=0.1, upper=5.0)
    b.add_row(x, [1.0, 1.0], const=-3.0)
    b.add_row([x[0]], [0.0], const=0.5, log_var=x[1], log_coef=1.0)
    b.add_row([], [], const=-4.0, quad=[(x, [1.0, -1.0])])
    b.add_objective(x, [1.0, 0.0], log_vars=[x[1]], log_coefs=[2.0])
    prog = b.build()
    z = np.array([1.0, 2.0])
    g, J = prog.constraints(z)
    J = J.toarray() if hasattr(J, "toarray") else np.asarray(J)
    assert np.allclose(g, [0.0, 0.5 - np.log(2.0), 1.0 - 4.0])
    assert np.allclose(J, [[1, 1], [0, -0.5], [-2, 2]])
    f, grad = prog.objective(z)
    assert f == pytest.approx(1 + 2 * np.log(2)) and np.allclose(grad, [1, 1])
    with pytest.raises(ValueError):
        b.add_row([x[0]], [1.0], log_var=x[1], log_coef=-1.0)
