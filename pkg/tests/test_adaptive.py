import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rothe_wavelet import adaptive as A
from rothe_wavelet import wavelets as W
from rothe_wavelet.errors import AssumptionViolation, NonconvergenceError
from rothe_wavelet.linear import linear_system
from rothe_wavelet.spectral import ModelParams

SIN = ModelParams(K=64, nonlinearity="sin")
LIN = ModelParams(K=64, nonlinearity="linear")


def l2_nodal(c, J):
    return math.sqrt(float(c @ linear_system(J, 1.0).apply_mass(c)))


def smooth_nodal(J, k=1, amp=1.0):
    x = np.arange(1, 1 << J) * 2.0 ** -J
    return amp * np.sin(k * math.pi * x)


def problem(J, tau, params, prev, w):
    op = A.PreconditionedOperator(J, tau)
    return A.StepProblem.build(op, params, prev, w)


def test_schedule_validation():
    s = A.ToleranceSchedule.uniform(0.1, 4)
    assert s.N == 4 and s.total == pytest.approx(0.1)
    with pytest.raises(ValueError):
        A.ToleranceSchedule((0.1, 0.0))
    with pytest.raises(ValueError):
        A.ToleranceSchedule((0.1,), eta_rule=1.0)


def test_operator_matches_dense(rng):
    op = A.PreconditionedOperator(6, 0.01)
    y = rng.standard_normal(op.dim)
    assert np.allclose(op.apply(y), op.dense() @ y, atol=1e-12)
    lo, hi = op.gamma()
    ev = np.linalg.eigvalsh(op.dense())
    assert lo == pytest.approx(ev[0]) and hi == pytest.approx(ev[-1])
    assert hi / lo < 50            # diagonal scaling keeps the system well conditioned


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.02, 0.3))
def test_apply_operator_exact_on_expansion(seed, density):
    rng = np.random.default_rng(seed)
    J = 7
    op = A.PreconditionedOperator(J, 1e-3)
    vals = rng.standard_normal(op.dim) * (rng.random(op.dim) < density)
    v = W.coarsen(W.WaveletCoeffs.from_dense(vals, tree=True), 0.0)
    out = A.apply_operator(op, v)
    full = op.dense() @ v.values
    assert out.is_tree()
    assert np.allclose(out.values, full, atol=1e-11)
    assert np.all(out.mask >= v.mask)


def test_apply_operator_requires_tree():
    op = A.PreconditionedOperator(5, 0.01)
    mask = np.zeros(31, bool)
    mask[-1] = True
    v = W.WaveletCoeffs(5, np.where(mask, 1.0, 0.0), mask)
    with pytest.raises(ValueError):
        A.apply_operator(op, v)


def test_eval_nonlinear_zero_and_linear(rng):
    J, tau = 6, 0.05
    v = W.WaveletCoeffs.from_dense(rng.standard_normal(63), tree=True)
    w = rng.standard_normal(63)
    zero = A.eval_nonlinear(v, w, tau, 1e-3, ModelParams(K=8, nonlinearity="zero"))
    assert zero.norm() == 0.0
    tol = 1e-3
    lin = A.eval_nonlinear(v, w, tau, tol, LIN)
    exact = tau * (v.values + W.fwt_array(w, J))
    assert np.linalg.norm(lin.values - exact) <= tol * (1 + 1e-12)


def test_eval_nonlinear_sin_against_dense(rng):
    J, tau = 5, 0.1
    v = W.WaveletCoeffs.from_dense(W.fwt_array(smooth_nodal(J), J), tree=True)
    w = 0.1 * rng.standard_normal(31)
    tol = 1e-9
    got = A.eval_nonlinear(v, w, tau, tol, SIN)
    loads = A.nonlinear_hat_loads(SIN, smooth_nodal(J) + w, J)
    ref = tau * W.fwt_array(W.solve_mass(J, loads), J)
    assert np.linalg.norm(got.values - ref) <= tol
    # a finer w lifts the evaluation level
    fine = A.eval_nonlinear(v, A.prolong_nodal(w, J, J + 2), tau, tol, SIN)
    assert fine.J == J + 2


def test_prolongation_is_exact(rng):
    c = rng.standard_normal(15)
    f = A.prolong_nodal(c, 4, 7)
    x = np.linspace(0, 1, 301)
    assert np.allclose(W.eval_nodal(c, 4, x), W.eval_nodal(f, 7, x), atol=1e-13)


def test_residual_accuracy(rng):
    J, tau = 7, 1 / 64
    prev = smooth_nodal(J) + 0.01 * rng.standard_normal(127)
    pb = problem(J, tau, SIN, prev, 0.01 * rng.standard_normal(127))
    y = W.WaveletCoeffs.from_dense(rng.standard_normal(127), tree=True)
    exact = pb.exact_residual(y.values)
    for eta in (1e-1, 1e-3, 1e-6):
        r = A.residual_RES(eta, pb, y)
        assert r.is_tree()
        assert np.linalg.norm(r.values - exact) <= eta * (1 + 1e-10)
    with pytest.raises(ValueError):
        A.residual_RES(0.0, pb, y)


def test_zero_data_gives_zero_step():
    pb = problem(6, 0.05, SIN, np.zeros(63), np.zeros(63))
    x, stats = A.solve_step(pb, W.WaveletCoeffs.zeros(6), 1e-6)
    assert x.norm() == 0.0
    assert stats.iterations == 0


@pytest.mark.parametrize("params", [LIN, SIN], ids=["linear", "sin"])
@pytest.mark.parametrize("eps", [1e-2, 1e-4, 1e-7])
def test_certified_against_dense(params, eps, rng):
    J, tau = 7, 1 / 32
    prev = smooth_nodal(J, 1) + 0.3 * smooth_nodal(J, 5)
    w = 0.05 * rng.standard_normal(127)
    pb = problem(J, tau, params, prev, w)
    x, stats = A.solve_step(pb, W.WaveletCoeffs.zeros(J), eps)
    truth = A.dense_step(prev, w, tau, params)
    err = l2_nodal(W.ifwt_array(x.values, J) - truth, J)
    assert err <= eps
    assert stats.achieved_residual <= eps
    assert x.is_tree()
    assert stats.support_size == x.support_size


def test_linear_case_matches_linear_solve(rng):
    # f(u) = a u moves a tau-multiple of the mass matrix to the left side
    J, tau, a = 6, 0.05, 0.7
    params = ModelParams(K=8, nonlinearity="linear", amplitude=a)
    prev = rng.standard_normal(63)
    M = np.diag(np.full(63, 2 / 3)) + np.diag(np.full(62, 1 / 6), 1) + np.diag(np.full(62, 1 / 6), -1)
    M *= 2.0 ** -J
    S = (np.diag(np.full(63, 2.0)) - np.diag(np.ones(62), 1) - np.diag(np.ones(62), -1)) * 2.0 ** J
    lhs = (1 - tau * a) * M + tau * S
    expected = np.linalg.solve(lhs, M @ prev)
    assert np.allclose(A.dense_step(prev, np.zeros(63), tau, params), expected, atol=1e-12)


def test_step_lipschitz_in_previous_state(rng):
    J, tau = 6, 0.1
    w = rng.standard_normal(63) * 0.5
    for _ in range(5):
        p1, p2 = rng.standard_normal(63), rng.standard_normal(63)
        d_out = l2_nodal(A.dense_step(p1, w, tau, SIN) - A.dense_step(p2, w, tau, SIN), J)
        assert d_out <= l2_nodal(p1 - p2, J) / (1 - tau * SIN.lipschitz_L)


def test_run_nonlinear_zero_and_deterministic(rng):
    J, N, tau = 6, 4, 0.05
    zero = A.run_nonlinear(np.zeros(63), np.zeros((N + 1, 63)), tau,
                           A.ToleranceSchedule.uniform(1e-3, N), SIN)
    assert not np.any(zero.u_nodal)
    w = np.cumsum(0.05 * rng.standard_normal((N + 1, 63)), axis=0)
    w[0] = 0
    sched = A.ToleranceSchedule.uniform(1e-3, N)
    r1 = A.run_nonlinear(smooth_nodal(J), w, tau, sched, SIN)
    r2 = A.run_nonlinear(smooth_nodal(J), w, tau, sched, SIN)
    assert np.array_equal(r1.u_nodal, r2.u_nodal)
    assert all(v.is_tree() for v in r1.v)
    assert len(r1.stats) == N
    with pytest.raises(ValueError):
        A.run_nonlinear(np.zeros(63), w, tau, A.ToleranceSchedule.uniform(1e-3, N + 1), SIN)


def test_run_accumulates_within_budget(rng):
    J, N, tau = 6, 8, 1 / 8
    w = np.cumsum(0.05 * rng.standard_normal((N + 1, 63)), axis=0)
    w[0] = 0
    u0 = smooth_nodal(J)
    sched = A.ToleranceSchedule.uniform(1e-2, N)
    run = A.run_nonlinear(u0, w, tau, sched, SIN)
    dense = A.dense_trajectory(u0, w, tau, SIN)
    errs = [l2_nodal(a - b, J) for a, b in zip(run.u_nodal, dense)]
    bound = sched.total / (1 - tau * SIN.lipschitz_L) ** N
    assert max(errs) <= bound


def test_work_grows_as_tolerance_shrinks(rng):
    J, tau = 8, 1 / 32
    prev = smooth_nodal(J) + 0.2 * smooth_nodal(J, 9)
    ops, sizes = [], []
    for eps in (1e-1, 1e-3, 1e-5, 1e-7):
        pb = problem(J, tau, SIN, prev, np.zeros(255))
        x, st_ = A.solve_step(pb, W.WaveletCoeffs.zeros(J), eps)
        ops.append(st_.op_count)
        sizes.append(x.support_size)
    assert ops == sorted(ops)
    assert sizes == sorted(sizes)


def test_nonconvergence_and_assumptions(rng):
    pb = problem(6, 0.05, SIN, rng.standard_normal(63), np.zeros(63))
    with pytest.raises(NonconvergenceError) as exc:
        A.solve_step(pb, W.WaveletCoeffs.zeros(6), 1e-12, max_iter=1)
    assert exc.value.residual > 1e-12
    big = problem(6, 0.6, SIN, np.zeros(63), np.zeros(63))
    with pytest.raises(AssumptionViolation):
        A.solve_step(big, W.WaveletCoeffs.zeros(6), 1e-3)
    with pytest.raises(ValueError):
        A.solve_step(pb, W.WaveletCoeffs.zeros(6), 0.0)
