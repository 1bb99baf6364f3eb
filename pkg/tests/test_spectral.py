import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rothe_wavelet import spectral as S
from rothe_wavelet.errors import AssumptionViolation

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def field_strategy(K=16):
    return arrays(np.float64, K, elements=finite).map(S.SpectralField)


# -- eigenpairs ---------------------------------------------------------------

@pytest.mark.parametrize("k,expected", [(1, math.pi ** 2), (2, 4 * math.pi ** 2),
                                        (10, 100 * math.pi ** 2)])
def test_eigenvalue(k, expected):
    assert S.eigenvalue(k) == pytest.approx(expected, rel=1e-15)


def test_eigenvalue_rejects_zero():
    with pytest.raises(ValueError):
        S.eigenvalue(0)


@pytest.mark.parametrize("k,x,expected", [(1, 0.5, math.sqrt(2)), (2, 0.5, 0.0), (1, 0.0, 0.0)])
def test_eigenfunction_values(k, x, expected):
    assert S.eval_eigenfunction(k, x) == pytest.approx(expected, abs=1e-15)


def test_eigenfunction_rejects_outside_interval():
    with pytest.raises(ValueError):
        S.eval_eigenfunction(1, 1.5)


def test_eigenfunctions_orthonormal():
    x, w = np.polynomial.legendre.leggauss(200)
    x, w = (x + 1) / 2, w / 2
    E = np.array([S.eval_eigenfunction(k, x) for k in range(1, 9)])
    assert np.allclose((E * w) @ E.T, np.eye(8), atol=1e-12)


# -- field operations ---------------------------------------------------------

def test_field_rejects_nonfinite():
    with pytest.raises(ValueError):
        S.SpectralField(np.array([1.0, np.nan]))


@given(field_strategy())
def test_parseval(f):
    assert f.l2_norm() == pytest.approx(np.linalg.norm(f.coeffs), rel=1e-14, abs=1e-300)


@given(field_strategy())
def test_fractional_identity_and_group(f):
    assert np.array_equal(S.fractional_apply(0.0, f).coeffs, f.coeffs)
    back = S.fractional_apply(0.5, S.fractional_apply(-0.5, f))
    assert np.allclose(back.coeffs, f.coeffs, rtol=1e-13, atol=1e-300)


def test_fractional_on_first_mode():
    e1 = S.SpectralField.mode(1, 4)
    assert np.allclose(S.fractional_apply(1.0, e1).coeffs, [math.pi ** 2, 0, 0, 0])


def test_hdot_norm_examples():
    f = S.SpectralField(np.array([3.0, 4.0]))
    assert S.hdot_norm(0.0, f) == pytest.approx(5.0)
    assert S.hdot_norm(2.0, S.SpectralField.mode(1, 3)) == pytest.approx(math.pi ** 2)
    k = np.arange(1, 1001)
    direct = math.sqrt(sum((kk * math.pi) ** 2 * kk ** -4.0 for kk in range(1, 1001)))
    assert S.hdot_norm(1.0, S.SpectralField(k ** -2.0)) == pytest.approx(direct, rel=1e-13)


@given(field_strategy(), st.floats(0, 0.1), st.floats(0, 0.1))
def test_semigroup_law(f, s, t):
    lhs = S.semigroup_apply(s, S.semigroup_apply(t, f)).coeffs
    rhs = S.semigroup_apply(s + t, f).coeffs
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-300)


def test_semigroup_identity_and_negative_time():
    f = S.SpectralField(np.arange(1.0, 5.0))
    assert np.array_equal(S.semigroup_apply(0.0, f).coeffs, f.coeffs)
    with pytest.raises(ValueError):
        S.semigroup_apply(-1.0, f)


def test_semigroup_smoothing_constant(rng):
    # ||A^{1/2} e^{-tA} f|| <= C t^{-1/2} ||f|| with C = sup x e^{-x^2}... = (2e)^{-1/2}
    C = 1 / math.sqrt(2 * math.e)
    for _ in range(20):
        f = S.SpectralField(rng.standard_normal(256))
        for t in (1e-4, 1e-3, 1e-2, 1e-1):
            lhs = S.hdot_norm(1.0, S.semigroup_apply(t, f))
            assert lhs <= C * t ** -0.5 * f.l2_norm() * (1 + 1e-12)


def test_euler_rational_examples():
    f = S.SpectralField(np.arange(1.0, 4.0))
    assert np.array_equal(S.euler_rational_apply(0.1, 0, f).coeffs, f.coeffs)
    # single-mode multiplier for tau * lambda = 1
    lam1 = math.pi ** 2
    one = S.euler_rational_apply(1 / lam1, 1, S.SpectralField.mode(1, 1))
    assert one.coeffs[0] == pytest.approx(0.5)


@pytest.mark.parametrize("lam", [1.0, 10.0, 100.0])
@pytest.mark.parametrize("tau", [0.1, 0.01])
def test_discrete_l2_in_time_identity(lam, tau):
    n = np.arange(1, 100001)
    partial = tau * np.sum((1 + tau * lam) ** (-2.0 * n))
    closed = 1 / (lam * (2 + tau * lam))
    assert abs(partial - closed) <= 1e-10
    assert partial <= 1 / (2 * lam)


def test_discrete_smoothing_sum(rng):
    # sum_n tau ||A^{1/2} r^n(tau A) v||^2 <= ||v||^2 / 2 (+10%)
    K, tau = 256, 1e-3
    lam = S.eigenvalues(K)
    for _ in range(10):
        v = rng.standard_normal(K)
        r = 1 / (1 + tau * lam)
        total = tau * np.sum(lam * v * v * (r * r / (1 - r * r)))
        assert total <= 0.55 * np.sum(v * v)


# -- nonlinearities -----------------------------------------------------------

def test_model_params_lipschitz_validation():
    assert S.ModelParams(nonlinearity="sin").lipschitz_L == 1.0
    assert S.ModelParams(nonlinearity="sin", amplitude=0.25).lipschitz_L == 0.25
    with pytest.raises(ValueError):
        S.ModelParams(nonlinearity="sin", lipschitz_L=2.0)
    with pytest.raises(ValueError):
        S.ModelParams(nonlinearity="cubic")


@pytest.mark.parametrize("name", ["sin", "rational", "linear"])
def test_lipschitz_constant_is_sharp_bound(name):
    f, df, lip = S.NONLINEARITIES[name]
    u = np.linspace(-20, 20, 40001)
    assert np.max(np.abs(df(u))) <= lip + 1e-12
    assert np.max(np.abs(df(u))) >= 0.99 * lip


def test_grid_transforms_roundtrip(rng):
    c = rng.standard_normal(32)
    g = S.to_grid(c, 64)
    assert np.allclose(S.from_grid(g, 32), c, atol=1e-13)
    x = np.arange(1, 64) / 64
    direct = sum(c[k - 1] * S.eval_eigenfunction(k, x) for k in range(1, 33))
    assert np.allclose(g, direct, atol=1e-12)


def test_nonlinear_coeffs_linear_map_is_identity(rng):
    params = S.ModelParams(K=32, nonlinearity="linear")
    c = rng.standard_normal(32)
    assert np.allclose(S.nonlinear_coeffs(params, c), c, atol=1e-13)


# -- time stepping ------------------------------------------------------------

def test_step_restriction():
    params = S.ModelParams(K=8)
    with pytest.raises(AssumptionViolation):
        S.spectral_backward_euler(params, 0.5, np.zeros((2, 8)), np.zeros(8))


def test_backward_euler_free_decay():
    params = S.ModelParams(K=4, nonlinearity="zero")
    tau, N = 0.05, 10
    traj = S.spectral_backward_euler(params, tau, np.zeros((N, 4)), np.eye(4)[0])
    expected = (1 + tau * math.pi ** 2) ** -np.arange(N + 1.0)
    assert np.allclose(traj[:, 0], expected, rtol=1e-14)
    assert np.all(traj[:, 1:] == 0)


def test_backward_euler_linear_case_matches_recursion(rng):
    params = S.ModelParams(K=16, nonlinearity="zero")
    tau, N = 0.01, 20
    inc = rng.standard_normal((N, 16)) * 0.1
    traj = S.spectral_backward_euler(params, tau, inc, np.zeros(16))
    r = 1 / (1 + tau * S.eigenvalues(16))
    u = np.zeros(16)
    for n in range(N):
        u = r * (u + inc[n])
    assert np.allclose(traj[-1], u, rtol=1e-13, atol=1e-16)


def test_fixed_point_iteration_count(rng):
    params = S.ModelParams(K=32, nonlinearity="sin")
    tau = 0.25
    log = S.FixedPointLog()
    S.spectral_backward_euler(params, tau, rng.standard_normal((4, 32)), np.zeros(32), log=log)
    bound = math.ceil(math.log(1e-12) / math.log(tau * params.lipschitz_L))
    assert max(log.iterations) <= bound


def test_implicit_step_solves_equation(rng):
    params = S.ModelParams(K=32, nonlinearity="sin")
    tau = 0.1
    rhs = rng.standard_normal(32)
    u, _ = S.implicit_step(params, tau, rhs, np.zeros(32))
    lhs = u * (1 + tau * S.eigenvalues(32)) - tau * S.nonlinear_coeffs(params, u)
    assert np.allclose(lhs, rhs, atol=1e-11)


def test_deterministic_euler_first_order():
    # Q = 0, f = 0, smooth u0: error against the semigroup at T halves with tau
    params = S.ModelParams(K=8, nonlinearity="zero")
    u0 = S.SpectralField(1.0 / np.arange(1, 9) ** 3)
    exact = S.semigroup_apply(1.0, u0).coeffs
    errs = []
    for N in (256, 512, 1024, 2048):
        traj = S.spectral_backward_euler(params, 1 / N, np.zeros((N, 8)), u0.coeffs)
        errs.append(np.linalg.norm(traj[-1] - exact))
    slopes = -np.diff(np.log2(errs))
    assert np.all(np.abs(slopes - 1.0) < 0.1)


def test_mild_reference_self_consistency():
    # successive halvings of the fine step change the reference by less and less
    from rothe_wavelet import noise
    params = S.ModelParams(K=32)
    spec = noise.CovarianceSpec(2.0, 32)
    base = [noise.sample_path(spec, noise.TimeGrid(1.0, 8), 3, pid) for pid in range(8)]
    refs = []
    for N in (128, 256, 512, 1024):
        inc = np.stack([noise.refine_path(p, N // 8).increments for p in base])
        refs.append(S.mild_reference(params, 1 / N, inc, np.zeros(32), store_every=N // 8))
    gaps = [np.sqrt(np.mean(np.sum((a - b) ** 2, axis=-1), axis=0)).max()
            for a, b in zip(refs, refs[1:])]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] / gaps[0] < 0.8


# -- exact convolution --------------------------------------------------------

def test_convolution_moments_closed_form():
    v1, v2, cov = S.convolution_moments(np.array([1.0]), 1.0)
    assert v1[0] == pytest.approx((1 - math.exp(-2)) / 2, rel=1e-14)
    assert cov[0] == pytest.approx(1 - math.exp(-1), rel=1e-14)
    assert v2[0] == 1.0
    # Riemann-sum oracle for the same integrals
    s = (np.arange(200000) + 0.5) / 200000
    assert v1[0] == pytest.approx(np.mean(np.exp(-2 * (1 - s))), rel=1e-9)
    assert cov[0] == pytest.approx(np.mean(np.exp(-(1 - s))), rel=1e-9)


def test_convolution_moments_small_argument_limit():
    for x in (1e-9, 1e-7):
        v1, _, cov = S.convolution_moments(np.array([x]), 1.0)
        assert v1[0] == pytest.approx(1.0, rel=1e-6)
        assert cov[0] == pytest.approx(1.0, rel=1e-6)
    # the series branch agrees with the closed form where both are accurate
    x = 0.99e-6
    v1, _, cov = S.convolution_moments(np.array([x]), 1.0)
    assert v1[0] == pytest.approx(-math.expm1(-2 * x) / (2 * x), rel=1e-12)
    assert cov[0] == pytest.approx(-math.expm1(-x) / x, rel=1e-12)


def test_exact_convolution_variance():
    M, K = 100000, 3
    gen = np.random.default_rng(5)
    prev = S.SpectralField(np.zeros((M, K)))
    new, (integral, dB) = S.exact_convolution_step(1.0 / math.pi ** 2, prev, np.ones(K), gen)
    lam = S.eigenvalues(K)
    v1, v2, cov = S.convolution_moments(lam, 1.0 / math.pi ** 2)
    emp = integral.var(axis=0)
    se = v1 * math.sqrt(2.0 / M)
    assert np.all(np.abs(emp - v1) < 3 * se)
    emp_cov = np.mean(integral * dB, axis=0)
    assert np.all(np.abs(emp_cov - cov) < 4 * np.sqrt((v1 * v2 + cov ** 2) / M))


def test_exact_convolution_rejects_nonpositive_tau(rng):
    with pytest.raises(ValueError):
        S.exact_convolution_step(0.0, S.SpectralField(np.zeros(2)), np.ones(2), rng)
