import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rothe_wavelet import noise, wavelets
from rothe_wavelet.errors import AssumptionViolation, TruncationError


def test_time_grid():
    g = noise.TimeGrid(1.0, 3)
    assert g.nodes[-1] == 1.0
    assert g.tau == 1 / 3
    assert g.refine(4).N == 12
    with pytest.raises(ValueError):
        noise.TimeGrid(0.0, 4)


def test_covariance_assumption():
    noise.CovarianceSpec(1.2, beta_target=1.0)
    with pytest.raises(AssumptionViolation):
        noise.CovarianceSpec(1.0, beta_target=1.0)
    with pytest.raises(ValueError):
        noise.CovarianceSpec(-0.5, beta_target=0.0)


def test_hs_norm_trace_class():
    spec = noise.CovarianceSpec(2.0, K=512)
    val = noise.hs_weighted_norm(spec, 1.0)
    assert val == pytest.approx(math.sqrt(math.pi ** 2 / 6), rel=1e-3)
    # integral-test tail bound dominates the true tail
    head, tail = noise.hs_norm_parts(spec, 1.0)
    assert head + tail >= math.pi ** 2 / 6


def test_hs_norm_borderline_diverges():
    spec = noise.CovarianceSpec(2.0, K=64, beta_target=1.0)
    with pytest.raises(AssumptionViolation):
        noise.hs_weighted_norm(spec, 1.5)          # rho == 2 beta - 1


def test_hs_norm_tail_check():
    spec = noise.CovarianceSpec(1.2, K=16)
    with pytest.raises(TruncationError):
        noise.hs_weighted_norm(spec, 1.0)
    assert noise.hs_weighted_norm(spec, 1.0, tail_rtol=None) > 0


def test_hs_norm_increases_with_beta():
    # lambda_k >= pi**2 > 1, so each weight lambda_k**(beta-1) grows with beta
    spec = noise.CovarianceSpec(4.0, K=512, beta_target=0.5)
    vals = [noise.hs_weighted_norm(spec, b, tail_rtol=None) for b in (0.25, 0.5, 1.0, 1.5)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_sampling_determinism():
    spec = noise.CovarianceSpec(2.0, K=32)
    g = noise.TimeGrid(1.0, 16)
    a = noise.sample_path(spec, g, 7, 3)
    b = noise.sample_path(spec, g, 7, 3)
    c = noise.sample_path(spec, g, 7, 4)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.xi, c.xi)
    with pytest.raises(ValueError):
        a.xi[0, 0] = 1.0


def test_increment_statistics():
    spec = noise.CovarianceSpec(1.0, K=4, beta_target=0.5)
    g = noise.TimeGrid(1.0, 100000)
    inc = noise.sample_path(spec, g, 11).increments
    var = inc[:, 0].var()
    target = spec.q[0] * g.tau
    assert abs(var - target) < 3 * target * math.sqrt(2 / g.N)
    corr = np.corrcoef(inc.T)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) < 3 / math.sqrt(g.N)


@given(st.integers(0, 2 ** 32), st.sampled_from([2, 4, 8]))
def test_refinement_sums_to_coarse(seed, factor):
    spec = noise.CovarianceSpec(1.5, K=8)
    path = noise.sample_path(spec, noise.TimeGrid(1.0, 4), seed)
    fine = noise.refine_path(path, factor)
    assert fine.grid.N == 4 * factor
    summed = noise.coarsen_increments(fine.increments, factor)
    assert np.max(np.abs(summed - path.increments)) < 1e-14


def test_refinement_composition_bit_exact():
    spec = noise.CovarianceSpec(1.5, K=8)
    path = noise.sample_path(spec, noise.TimeGrid(1.0, 4), 99)
    once = noise.refine_path(path, 4)
    twice = noise.refine_path(noise.refine_path(path, 2), 2)
    assert np.array_equal(once.xi, twice.xi)


def test_refinement_rejects_bad_factor():
    path = noise.sample_path(noise.CovarianceSpec(2.0, K=4), noise.TimeGrid(1.0, 2), 0)
    for f in (1, 3, 6):
        with pytest.raises(ValueError):
            noise.refine_path(path, f)


def test_refined_variance():
    spec = noise.CovarianceSpec(2.0, K=2)
    path = noise.sample_path(spec, noise.TimeGrid(1.0, 12500), 5)
    fine = noise.refine_path(path, 8)
    var = fine.increments[:, 0].var()
    target = spec.q[0] * fine.grid.tau
    assert abs(var - target) < 3 * target * math.sqrt(2 / fine.grid.N)


def test_increment_loads():
    spec = noise.CovarianceSpec(2.0, K=16)
    path = noise.sample_path(spec, noise.TimeGrid(1.0, 4), 1)
    zero = noise.NoisePath(spec, path.grid, 0, 0, np.zeros((4, 16)))
    assert not np.any(noise.increment_in_SJ(zero, 1, 5))
    # single-mode increment reproduces the mixed inner products by quadrature
    xi = np.zeros((4, 16))
    xi[1, 2] = 1.0
    single = noise.NoisePath(spec, path.grid, 0, 0, xi)
    b = noise.increment_in_SJ(single, 2, 5)
    x, w, *_ = wavelets.cell_quadrature(5, npts=8, sub=4)
    e3 = math.sqrt(2) * np.sin(3 * math.pi * x)
    H = np.array([wavelets.eval_nodal(np.eye(31)[j], 5, x) for j in range(31)])
    expected = math.sqrt(spec.q[2] * path.grid.tau) * (H * w) @ e3
    assert np.allclose(b, expected, atol=1e-13)
    with pytest.raises(ValueError):
        noise.increment_in_SJ(path, 0, 5)


def test_projected_increment_contracts():
    spec = noise.CovarianceSpec(0.5, K=256, beta_target=0.5)
    path = noise.sample_path(spec, noise.TimeGrid(1.0, 8), 2)
    M = wavelets.gram_matrix(6)
    for n in range(1, 9):
        p = noise.project_increment(path, n, 6)
        assert p @ (M @ p) <= np.sum(path.increments[n - 1] ** 2)


def test_dump_roundtrip(tmp_path):
    spec = noise.CovarianceSpec(2.0, K=8)
    path = noise.refine_path(noise.sample_path(spec, noise.TimeGrid(2.0, 4), 2 ** 63 + 5, 3), 2)
    buf = io.BytesIO()
    noise.dump_path(path, buf)
    raw = buf.getvalue()
    assert raw[:16] == noise.PATH_MAGIC
    back = noise.load_path(io.BytesIO(raw), spec)
    assert np.array_equal(back.xi, path.xi)
    assert (back.seed, back.path_id, back.level, back.grid) == (path.seed, 3, 1, path.grid)
    noise.dump_path(path, tmp_path / "p.bin")
    assert np.array_equal(noise.load_path(tmp_path / "p.bin", spec).xi, path.xi)
    with pytest.raises(ValueError):
        noise.load_path(io.BytesIO(b"x" * 64), spec)
    with pytest.raises(ValueError):
        noise.load_path(io.BytesIO(raw), spec.with_K(4))
