import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import active_set_oracle, random_box_qp

from etac.qp import (MAX_ITER, PRIMAL_INFEASIBLE, SOLVED, QpNumericalError, QpProblem, QpSettings, QpSolver,
                     WarmStart, kkt_residuals, solve_qp, warm_start_shift)


def test_unconstrained_scalar():
    p = QpProblem([[1.0]], [-1.0], np.zeros((0, 1)), [], [])
    s = solve_qp(p)
    assert s.status == SOLVED
    assert s.x_star[0] == pytest.approx(1.0, abs=1e-6)


def test_active_upper_bound():
    p = QpProblem([[1.0]], [-1.0], [[1.0]], [-np.inf], [0.5])
    s = solve_qp(p)
    assert s.status == SOLVED
    assert s.x[0] == pytest.approx(0.5, abs=1e-6)
    assert s.y[0] == pytest.approx(0.5, abs=1e-6)


def test_equality_row():
    p = QpProblem(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [1.0], [1.0])
    np.testing.assert_allclose(solve_qp(p).x, [0.5, 0.5], atol=1e-6)


def test_oracle_suite(rng):
    for _ in range(100):
        p = random_box_qp(rng)
        s = solve_qp(p)
        f, x_ref = active_set_oracle(p)
        assert s.status == SOLVED
        assert np.abs(s.x - x_ref).max() <= 1e-5
        prim, dual = kkt_residuals(p, s.x, s.y)
        assert prim <= 1e-6 and dual <= 1e-4
        assert s.objective <= f + 1e-6


def test_reported_residuals_are_true_kkt(rng):
    p = random_box_qp(rng)
    s = solve_qp(p)
    assert (s.primal_residual, s.dual_residual) == kkt_residuals(p, s.x, s.y)


def test_primal_infeasible():
    p = QpProblem(np.eye(2), [0.0, 0.0], [[1.0, 0.0], [1.0, 0.0]], [1.0, -np.inf], [np.inf, 0.0])
    assert solve_qp(p).status == PRIMAL_INFEASIBLE


def test_max_iter_returns_best_iterate(rng):
    p = random_box_qp(rng)
    s = solve_qp(p, QpSettings(max_iter=3, polish=False, adaptive_rho=False))
    assert s.status == MAX_ITER
    assert s.iterations == 3
    assert np.all(np.isfinite(s.x))


def test_non_finite_iterate_raises():
    # a huge linear term over a tiny regularised curvature overflows the first KKT solve
    p = QpProblem([[0.0]], [1e308], [[1.0]], [-1.0], [1.0])
    with np.errstate(all="ignore"), pytest.raises(QpNumericalError):
        solve_qp(p, QpSettings(rho=1e-6, polish=False, adaptive_rho=False))


def test_deterministic(rng):
    p = random_box_qp(rng)
    a, b = solve_qp(p), solve_qp(p)
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations


@pytest.mark.parametrize("kw", [
    dict(H=[[1.0, 2.0], [0.0, 1.0]]),
    dict(H=[[-1.0, 0.0], [0.0, 1.0]]),
    dict(lower=[1.0], upper=[0.0]),
    dict(g=[np.nan, 0.0]),
])
def test_invalid_problem(kw):
    base = dict(H=np.eye(2), g=[0.0, 0.0], A=[[1.0, 0.0]], lower=[-1.0], upper=[1.0])
    base.update(kw)
    with pytest.raises(ValueError):
        QpProblem(**base)


def test_factorisation_cached_across_solves(rng):
    p = random_box_qp(rng)
    solver = QpSolver(QpSettings(adaptive_rho=False))
    solver.solve(p)
    q = QpProblem(p.H, p.g + 0.1, p.A, p.lower, p.upper)
    solver.solve(q)
    assert solver.factorizations == 1


def test_warm_start_from_solution_is_fast(rng):
    p = random_box_qp(rng)
    cold = solve_qp(p)
    warm = solve_qp(p, warm_start=WarmStart(cold.x, cold.y))
    assert warm.iterations <= cold.iterations
    np.testing.assert_allclose(warm.x, cold.x, atol=1e-5)


class TestShift:
    def test_constant(self):
        seq = np.ones((5, 1))
        assert np.array_equal(warm_start_shift(seq), seq)

    def test_definition(self):
        assert warm_start_shift(np.arange(4.0), stages=4).tolist() == [1.0, 2.0, 3.0, 3.0]

    def test_multi_shift(self):
        assert warm_start_shift(np.arange(4.0), stages=4, shift=3).tolist() == [3.0, 3.0, 3.0, 3.0]

    def test_warm_start_object(self):
        ws = warm_start_shift(WarmStart(np.arange(3.0), np.ones(2)), stages=3)
        assert ws.x.tolist() == [1.0, 2.0, 2.0] and ws.y is None


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_solution_feasible_and_stationary(seed):
    p = random_box_qp(np.random.default_rng(seed))
    s = solve_qp(p)
    assert s.status == SOLVED
    Ax = p.A @ s.x
    assert np.all(Ax >= p.lower - 1e-6) and np.all(Ax <= p.upper + 1e-6)
    assert np.abs(p.H @ s.x + p.g + p.A.T @ s.y).max() <= 1e-4
