"""Monte Carlo convergence studies.

Every study is reproducible from its :class:`StudyConfig`: paths are keyed by
``(seed, path_id)`` and results are merged in path order, so the worker count
does not change any number.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import math
import time

import numpy as np

from .. import adaptive, linear, noise, spectral, wavelets
from ..errors import InsufficientDataError
from .config import StudyConfig
from .report import RateReport, environment_meta, fit_rate, max_of_rms, rms_with_stderr

MEMORY_BUDGET = 1 << 28          # bytes of noise per chunk


# -- shared plumbing ----------------------------------------------------------

def covariance(cfg: StudyConfig, K: int | None = None) -> noise.CovarianceSpec:
    spec = noise.CovarianceSpec(cfg.rho_value, K or cfg.K, beta_target=cfg.beta)
    noise.hs_weighted_norm(spec, cfg.beta, tail_rtol=None)   # raises on divergence
    return spec


def model(cfg: StudyConfig, K: int | None = None) -> spectral.ModelParams:
    return spectral.ModelParams(K=K or cfg.K, nonlinearity=cfg.nonlinearity,
                                amplitude=cfg.amplitude)


def path_chunks(samples: int, chunk: int):
    return [list(range(i, min(i + chunk, samples))) for i in range(0, samples, chunk)]


def run_chunks(fn, args_list, workers: int):
    """Apply ``fn`` to each argument tuple; results come back in input order."""
    if workers <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *a) for a in args_list]
        return [f.result() for f in futures]


def _meta(cfg: StudyConfig, started: float) -> dict:
    meta = environment_meta()
    meta.update(config_hash=cfg.digest(), seconds=round(time.time() - started, 2))
    return meta


def _finish(report: RateReport) -> RateReport:
    try:
        report.refit()
    except InsufficientDataError as exc:
        report.notes.append(f"fit skipped: {exc}")
    return report


def l2_hat_vs_spectral(c: np.ndarray, s: np.ndarray, J: int) -> np.ndarray:
    return linear.mr_error(c, s, J)


def l2_hat(c: np.ndarray, J: int) -> np.ndarray:
    system = linear.linear_system(J, 1.0)
    return np.sqrt(np.maximum(np.sum(c * system.apply_mass(c), axis=-1), 0.0))


# -- spatial rate -------------------------------------------------------------

def space_design(cfg: StudyConfig):
    """``(J, N, K)`` per level.

    The spatial bound holds uniformly in ``tau``; its sharp rate is seen along
    ``tau = c h**2`` with ``K`` proportional to ``2**J``, where the error is
    scale invariant.  ``space_N_fixed > 0`` switches to a fixed ``(N, K)``.
    """
    out = []
    for J in cfg.J_list:
        if cfg.space_N_fixed > 0:
            out.append((J, cfg.space_N_fixed, cfg.K))
        else:
            N = max(1, int(round(cfg.T * 4.0 ** J / cfg.space_tau_factor)))
            out.append((J, N, cfg.space_K_factor * (1 << J)))
    Ns = [d[1] for d in out]
    top = max(Ns)
    for N in Ns:
        if top % N:
            raise ValueError("step counts of the spatial design must divide the finest one")
    return out


def _space_chunk(cfg: StudyConfig, ids, design):
    N_top = max(d[1] for d in design)
    K_top = max(d[2] for d in design)
    spec = covariance(cfg, K_top)
    grid = noise.TimeGrid(cfg.T, N_top)
    inc = np.stack([noise.sample_path(spec, grid, cfg.seed, pid).increments for pid in ids])
    out = []
    for J, N, K in design:
        inc_J = noise.coarsen_increments(inc, N_top // N)[..., :K]
        tau = cfg.T / N
        wJ = linear.run_linear_increments(inc_J, tau, J)
        ref = linear.spectral_reference_increments(inc_J, tau)
        out.append(linear.mr_error(wJ, ref, J) ** 2)
    return out


def study_space(cfg: StudyConfig) -> RateReport:
    started = time.time()
    design = space_design(cfg)
    N_top = max(d[1] for d in design)
    K_top = max(d[2] for d in design)
    chunk = max(1, min(cfg.chunk, MEMORY_BUDGET // (8 * N_top * K_top)))
    parts = run_chunks(_space_chunk, [(cfg, ids, design)
                                      for ids in path_chunks(cfg.samples, chunk)],
                       cfg.workers)
    rep = RateReport("rates-space", [], [], [], target=min(cfg.beta, wavelets.ORDER),
                     tol=0.25)
    for i, (J, N, K) in enumerate(design):
        sq = np.concatenate([p[i] for p in parts])
        val, se, rmax, semax = max_of_rms(sq)
        rep.levels.append(J)
        rep.error_rms.append(val)
        rep.stderr.append(se)
        rep.rms_of_max.append(rmax)
    rep.extra["design"] = [{"J": J, "N": N, "K": K} for J, N, K in design]
    rep.meta = _meta(cfg, started)
    return _finish(rep)


def exact_space_error(J: int, N: int, K: int, rho: float, T: float = 1.0) -> float:
    """Exact ``max_n (E ||w_J^n - w^n||^2)**(1/2)`` for the linear problem.

    Each mode contributes independently; the deterministic impulse responses
    are propagated through both recursions.  Cost ``O(N K 2**J)``.
    """
    tau = T / N
    system = linear.linear_system(J, tau)
    G = wavelets.mixed_matrix(J, K)
    q = np.arange(1, K + 1, dtype=float) ** -rho
    r = 1.0 / (1.0 + tau * spectral.eigenvalues(K))
    C = system.solve((G * np.sqrt(q * tau)).T).T
    s = r * np.sqrt(q * tau)
    total = best = 0.0
    for _ in range(N):
        MC = system.apply_mass(C.T).T
        total += float(np.sum(C * MC) - 2 * np.sum(C * (G * s)) + np.sum(s * s))
        best = max(best, total)
        C = system.solve(MC.T).T
        s = r * s
    return math.sqrt(max(best, 0.0))


# -- temporal rate ------------------------------------------------------------

def _time_chunk(cfg: StudyConfig, ids):
    spec = covariance(cfg)
    params = model(cfg)
    N0 = cfg.N_list[0]
    N_fine = cfg.N_list[-1]
    N_ref = N_fine * cfg.ref_factor
    base = [noise.sample_path(spec, noise.TimeGrid(cfg.T, N0), cfg.seed, pid) for pid in ids]
    u0 = np.zeros(cfg.K)
    ref_paths = [noise.refine_path(p, N_ref // N0) for p in base]
    inc_ref = np.stack([p.increments for p in ref_paths])
    ref = spectral.mild_reference(params, cfg.T / N_ref, inc_ref, u0,
                                  store_every=cfg.ref_factor)       # nodes of N_fine
    out = []
    for N in cfg.N_list:
        paths = [noise.refine_path(p, N // N0) if N > N0 else p for p in base]
        inc = np.stack([p.increments for p in paths])
        traj = spectral.spectral_backward_euler(params, cfg.T / N, inc, u0)
        err = traj - ref[:, ::N_fine // N, :]
        out.append(np.sum(err * err, axis=-1))
    return out


def study_time(cfg: StudyConfig) -> RateReport:
    started = time.time()
    parts = run_chunks(_time_chunk, [(cfg, ids) for ids in path_chunks(cfg.samples, cfg.chunk)],
                       cfg.workers)
    rep = RateReport("rates-time", [], [], [], target=cfg.beta / 2, tol=0.15)
    for i, N in enumerate(cfg.N_list):
        sq = np.concatenate([p[i] for p in parts])
        val, se, rmax, _ = max_of_rms(sq)
        rep.levels.append(int(round(math.log2(N))))
        rep.error_rms.append(val)
        rep.stderr.append(se)
        rep.rms_of_max.append(rmax)
    rep.extra["N_list"] = list(cfg.N_list)
    rep.extra["N_ref"] = cfg.N_list[-1] * cfg.ref_factor
    rep.meta = _meta(cfg, started)
    return _finish(rep)


# -- Hoelder continuity of the stochastic convolution -------------------------

def exact_increment_ms(rho: float, K: int, s: float, lag: float) -> float:
    """``E ||w(s + lag) - w(s)||^2`` for the stochastic convolution (closed form)."""
    lam = spectral.eigenvalues(K)
    q = np.arange(1, K + 1, dtype=float) ** -rho
    var_s = -np.expm1(-2 * lam * s) / (2 * lam)
    return float(np.sum(q * (np.expm1(-lam * lag) ** 2 * var_s
                             - np.expm1(-2 * lam * lag) / (2 * lam))))


def study_hoelder(cfg: StudyConfig) -> RateReport:
    started = time.time()
    spec = covariance(cfg)
    q = spec.q
    rep = RateReport("hoelder", [], [], [], target=cfg.beta / 2, tol=0.1)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, 0])))
    zero = spectral.SpectralField(np.zeros((cfg.samples, cfg.K)))
    ws, _ = spectral.exact_convolution_step(cfg.hoelder_base, zero, q, gen)
    exact = []
    for j in cfg.hoelder_lags:
        lag = 2.0 ** -j
        g = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, 1, j])))
        wt, _ = spectral.exact_convolution_step(lag, ws, q, g)
        sq = np.sum((wt.coeffs - ws.coeffs) ** 2, axis=-1)
        rms, se = rms_with_stderr(sq)
        rep.levels.append(j)
        rep.error_rms.append(float(rms))
        rep.stderr.append(float(se))
        exact.append(math.sqrt(exact_increment_ms(spec.rho, spec.K, cfg.hoelder_base, lag)))
    rep.extra["exact_rms"] = exact
    rep.checks["monotone"] = all(b < a for a, b in zip(rep.error_rms, rep.error_rms[1:]))
    rep.meta = _meta(cfg, started)
    return _finish(rep)


# -- Gronwall perturbation ----------------------------------------------------

def gronwall_constant(L: float, T: float) -> float:
    return 2 * L * T * math.exp(2 * L * T)


def hat_on_grid(c: np.ndarray, J: int, x: np.ndarray) -> np.ndarray:
    """Hat expansions (batch along leading axes) evaluated at points ``x``."""
    n = (1 << J) - 1
    pos = x * (n + 1)
    i = np.minimum(np.floor(pos).astype(int), n)
    t = pos - i
    pad = np.concatenate((np.zeros(c.shape[:-1] + (1,)), c, np.zeros(c.shape[:-1] + (2,))),
                         axis=-1)
    return pad[..., i] * (1 - t) + pad[..., i + 1] * t


def _gronwall_chunk(cfg: StudyConfig, ids):
    spec = covariance(cfg)
    params = model(cfg)
    N = cfg.N_fixed
    tau = cfg.T / N
    grid = noise.TimeGrid(cfg.T, N)
    inc = np.stack([noise.sample_path(spec, grid, cfg.seed, pid).increments for pid in ids])
    w = linear.spectral_reference_increments(inc, tau)
    x = spectral.sine_grid(params)
    zero_inc = np.zeros_like(inc)
    u0 = np.zeros(cfg.K)
    w_grid = spectral.to_grid(w, params.grid_size)
    v = spectral.spectral_backward_euler(params, tau, zero_inc, u0,
                                         extra_grid=lambda n: w_grid[:, n, :])
    out = []
    for J in cfg.J_list:
        wJ = linear.run_linear_increments(inc, tau, J)
        wJ_grid = hat_on_grid(wJ, J, x)
        vbar = spectral.spectral_backward_euler(params, tau, zero_inc, u0,
                                                extra_grid=lambda n: wJ_grid[:, n, :])
        dv = np.sum((vbar - v) ** 2, axis=-1)
        dw = linear.mr_error(wJ, w, J) ** 2
        out.append((dv, dw))
    return out


def study_gronwall(cfg: StudyConfig) -> RateReport:
    started = time.time()
    parts = run_chunks(_gronwall_chunk,
                       [(cfg, ids) for ids in path_chunks(cfg.samples, cfg.chunk)],
                       cfg.workers)
    L = model(cfg).lipschitz_L
    C = gronwall_constant(L, cfg.T)
    rep = RateReport("gronwall", [], [], [])
    ratios, w_err = [], []
    for i, J in enumerate(cfg.J_list):
        dv = np.concatenate([p[i][0] for p in parts])
        dw = np.concatenate([p[i][1] for p in parts])
        lhs, se, _, _ = max_of_rms(dv)
        rhs, _, _, _ = max_of_rms(dw)
        rep.levels.append(J)
        rep.error_rms.append(lhs)
        rep.stderr.append(se)
        w_err.append(rhs)
        ratios.append(lhs / rhs if rhs > 0 else 0.0)
    rep.extra.update(ratio=ratios, w_error=w_err, constant=C)
    rep.checks["ratio<=C"] = all(r <= C for r in ratios)
    rep.meta = _meta(cfg, started)
    return _finish(rep)


# -- adaptive pipeline helpers ------------------------------------------------

def schedule_for(cfg: StudyConfig, total: float, N: int) -> adaptive.ToleranceSchedule:
    if cfg.eps_schedule == "uniform":
        return adaptive.ToleranceSchedule.uniform(total, N)
    weights = 0.5 ** np.arange(N)[::-1] + 1.0      # later steps get more budget
    weights = weights / weights.sum()
    return adaptive.ToleranceSchedule(tuple(total * weights))


def _adaptive_paths(cfg, params, w_traj, tau, schedule, ids, u0):
    """Adaptive runs per path; returns hat trajectories and stats records."""
    us, records = [], []
    for row, pid in enumerate(ids):
        run = adaptive.run_nonlinear(u0, w_traj[row], tau, schedule, params)
        us.append(run.u_nodal)
        for n, st in enumerate(run.stats, 1):
            records.append(dict(path_id=pid, n=n, eps_n=st.eps, support=st.support_size,
                                iterations=st.iterations, op_count=st.op_count,
                                residual=st.achieved_residual))
    return np.stack(us), records


# -- tolerance accumulation ---------------------------------------------------

CERTIFICATE_MARGIN = 2.0


def accumulation_bound(eps_total: float, tau: float, L: float, N: int) -> float:
    """Stability bound ``(1 - tau L)**-N * eps_total`` for the accumulated error."""
    return (1.0 - tau * L) ** (-N) * eps_total


def _tol_chunk(cfg: StudyConfig, ids):
    spec = covariance(cfg)
    params = model(cfg)
    N, J = cfg.N_fixed, cfg.J_fixed
    tau = cfg.T / N
    grid = noise.TimeGrid(cfg.T, N)
    inc = np.stack([noise.sample_path(spec, grid, cfg.seed, pid).increments for pid in ids])
    w = linear.run_linear_increments(inc, tau, J)
    u0 = np.zeros(w.shape[-1])
    dense = adaptive.dense_trajectory(u0, w, tau, params)
    out, records = [], []
    for total in cfg.eps_totals:
        u, rec = _adaptive_paths(cfg, params, w, tau, schedule_for(cfg, total, N), ids, u0)
        out.append(l2_hat(u - dense, J) ** 2)
        for r in rec:
            r["eps_total"] = total
        records.extend(rec)
    return out, records


def ratio_test(errors, totals, slack: float = 0.6, noise_rel: float = 0.02):
    """Pairwise check that errors fall with the tolerance, but at most linearly.

    For consecutive sweep points ``err_b / err_a`` must be at most
    ``1 + noise_rel`` and at least ``slack * total_b / total_a``.
    Returns per-pair records.
    """
    pairs = []
    for a in range(len(errors) - 1):
        b = a + 1
        ratio = errors[b] / errors[a] if errors[a] > 0 else 0.0
        lin = totals[b] / totals[a]
        pairs.append(dict(pair=(a, b), ratio=ratio, linear=lin,
                          ok=(ratio <= 1 + noise_rel) and (ratio >= slack * lin),
                          plateau=ratio > 0.9))
    return pairs


def study_tolerance(cfg: StudyConfig):
    started = time.time()
    results = run_chunks(_tol_chunk, [(cfg, ids) for ids in path_chunks(cfg.samples, cfg.chunk)],
                         cfg.workers)
    params = model(cfg)
    tau = cfg.T / cfg.N_fixed
    rep = RateReport("rates-tol", [], [], [], target=None, tol=None)
    records = [r for _, rec in results for r in rec]
    bounds = []
    for i, total in enumerate(cfg.eps_totals):
        sq = np.concatenate([res[0][i] for res in results])
        val, se, _, _ = max_of_rms(sq)
        rep.levels.append(-math.log2(total))
        rep.error_rms.append(val)
        rep.stderr.append(se)
        bounds.append(accumulation_bound(total, tau, params.lipschitz_L, cfg.N_fixed))
    pairs = ratio_test(rep.error_rms, list(cfg.eps_totals))
    rep.extra.update(eps_totals=list(cfg.eps_totals), certificate=bounds, pairs=pairs)
    rep.checks["certificate"] = all(CERTIFICATE_MARGIN * e <= b
                                    for e, b in zip(rep.error_rms, bounds))
    rep.checks["pairwise"] = all(p["ok"] for p in pairs)
    if any(p["plateau"] for p in pairs):
        rep.notes.append("plateau: error stopped decreasing with the tolerance")
    rep.meta = _meta(cfg, started)
    return _finish(rep), records


# -- full pipeline ------------------------------------------------------------

def initial_state(cfg: StudyConfig, K: int):
    u0 = np.zeros(K)
    u0[0] = cfg.u0_amplitude
    return u0


def _full_chunk(cfg: StudyConfig, ids, runs, N_ref):
    """Errors of ``u_eps = v_eps + w_J`` against a fine spectral reference."""
    spec = covariance(cfg)
    params = model(cfg)
    u0 = initial_state(cfg, cfg.K)
    N0 = min(r[0] for r in runs)
    base = [noise.sample_path(spec, noise.TimeGrid(cfg.T, N0), cfg.seed, pid) for pid in ids]
    ref_inc = np.stack([noise.refine_path(p, N_ref // N0).increments for p in base])
    N_max = max(r[0] for r in runs)
    ref = spectral.mild_reference(params, cfg.T / N_ref, ref_inc, u0,
                                  store_every=N_ref // N_max)
    out, records = [], []
    for N, J, total in runs:
        inc = noise.coarsen_increments(ref_inc, N_ref // N)
        tau = cfg.T / N
        w = linear.run_linear_increments(inc, tau, J)
        u0_J = wavelets.project_PJ(spectral.SpectralField(u0), J)
        u, rec = _adaptive_paths(cfg, params, w, tau, schedule_for(cfg, total, N), ids, u0_J)
        for r in rec:
            r.update(N=N, J=J, eps_total=total)
        records.extend(rec)
        err = l2_hat_vs_spectral(u, ref[:, ::N_max // N, :], J)
        out.append(err ** 2)
    return out, records


# Each ladder starts where its own term dominates; the floor run takes that knob
# beyond the ladder so that only the other two terms remain.
EPS_FINE = 0.05
FULL_LADDERS = {
    "tau": [(4, 2, EPS_FINE), (16, 2, EPS_FINE), (64, 2, EPS_FINE), (256, 2, EPS_FINE)],
    "space": [(256, 2, EPS_FINE), (256, 3, EPS_FINE), (256, 4, EPS_FINE), (256, 5, EPS_FINE)],
    "eps": [(64, 4, 4.0), (64, 4, 1.0), (64, 4, 0.25), (64, 4, 0.0625)],
}
FULL_FLOORS = {
    "tau": (1024, 2, EPS_FINE),
    "space": (256, 7, EPS_FINE),
    "eps": (64, 4, 1e-3),
}
FULL_BALANCED = [(4, 3, 0.1), (16, 4, 0.05), (64, 5, 0.025), (256, 6, 0.0125)]


def dominance_matrix(ladders: dict, floors: dict, first_drop_max: float = 0.8,
                     plateau_rtol: float = 0.25, noise_rel: float = 0.05):
    """Per knob: the first refinement cuts the error, errors never grow, and the
    last rung sits within ``plateau_rtol`` of the floor run."""
    rows = {}
    for knob, errs in ladders.items():
        floor = floors[knob]
        first_drop = errs[1] / errs[0]
        row = dict(errors=list(errs), floor=floor, first_drop=first_drop,
                   reduces=first_drop <= first_drop_max,
                   plateau=abs(errs[-1] - floor) <= plateau_rtol * floor,
                   monotone=all(b <= a * (1 + noise_rel) for a, b in zip(errs, errs[1:])))
        row["ok"] = row["reduces"] and row["plateau"] and row["monotone"]
        rows[knob] = row
    return rows


def study_full(cfg: StudyConfig, ladders=None, floors=None, balanced=None):
    started = time.time()
    ladders = ladders or FULL_LADDERS
    floors = floors or FULL_FLOORS
    balanced = balanced or FULL_BALANCED
    runs = sorted({r for lad in ladders.values() for r in lad} | set(floors.values())
                  | set(balanced))
    N_ref = max(r[0] for r in runs) * cfg.ref_factor
    results = run_chunks(_full_chunk, [(cfg, ids, runs, N_ref)
                                       for ids in path_chunks(cfg.samples, cfg.chunk)],
                         cfg.workers)
    records = [r for _, rec in results for r in rec]
    err = {}
    for i, run in enumerate(runs):
        sq = np.concatenate([res[0][i] for res in results])
        err[run] = max_of_rms(sq)[:2]
    matrix = dominance_matrix({k: [err[r][0] for r in lad] for k, lad in ladders.items()},
                              {k: err[r][0] for k, r in floors.items()})
    # levels are log2 N, so the slope is measured against tau
    rep = RateReport("full", [], [], [], target=0.5, tol=0.2)
    for run in balanced:
        rep.levels.append(int(round(math.log2(run[0]))))
        rep.error_rms.append(err[run][0])
        rep.stderr.append(err[run][1])
    rep.checks.update({f"dominance-{k}": r["ok"] for k, r in matrix.items()})
    rep.extra.update(dominance=matrix, runs={f"N={r[0]},J={r[1]},eps={r[2]}": err[r][0] for r in runs},
                     N_ref=N_ref)
    rep.meta = _meta(cfg, started)
    return _finish(rep), records


# -- adaptive solve contract -------------------------------------------------

def random_step_problem(rng, J: int, K: int, amplitude: float, decay: float):
    """Hat coefficients of ``(v_prev, w)`` with random spectral content ``~ k**-decay``."""
    k = np.arange(1, K + 1, dtype=float)
    fields = [spectral.SpectralField(amplitude * rng.standard_normal(K) * k ** -decay)
              for _ in range(2)]
    return tuple(wavelets.project_PJ(f, J) for f in fields)


def study_solve_contract(trials: int = 20, eps_list=(1e-2, 1e-3, 1e-4, 1e-5), J: int = 8,
                         tau: float = 1 / 32, K: int = 64, amplitude: float = 0.003,
                         decay: float = 2.0, seed: int = 1, nonlinearity: str = "sin"):
    """Certified per-step solves against the dense direct solve.

    The problem amplitude keeps the support below the full space for the whole
    tolerance sweep.  Support sizes are fitted as ``N ~ C eps**slope`` on all
    ``(eps, support)`` pairs; ``s = -1/slope`` is the empirical approximation
    order.
    """
    rng = np.random.default_rng(seed)
    params = spectral.ModelParams(K=K, nonlinearity=nonlinearity)
    errors = np.empty((trials, len(eps_list)))
    support = np.empty((trials, len(eps_list)), dtype=int)
    for t in range(trials):
        vp, w = random_step_problem(rng, J, K, amplitude, decay)
        dense = adaptive.dense_step(vp, w, tau, params)
        init = wavelets.WaveletCoeffs.from_dense(wavelets.fwt_array(vp), tree=True)
        for i, eps in enumerate(eps_list):
            v, st = adaptive.step_vbar(init, w, eps, tau, params)
            errors[t, i] = float(l2_hat(wavelets.ifwt_array(v.values) - dense, J))
            support[t, i] = st.support_size
    x = np.repeat(np.log(np.asarray(eps_list, dtype=float))[None, :], trials, axis=0).ravel()
    y = np.log(np.maximum(support, 1)).ravel()
    slope, intercept = np.polyfit(x, y, 1)
    r2 = float(np.corrcoef(x, y)[0, 1] ** 2) if np.ptp(y) > 0 else 0.0
    within = errors <= np.asarray(eps_list)[None, :]
    return dict(errors=errors, support=support, within=within,
                fraction_within=float(within.mean()), slope=float(slope), r2=r2,
                s_empirical=float(-1 / slope) if slope < 0 else float("inf"),
                dim=(1 << J) - 1)


# -- basis suite --------------------------------------------------------------

def biorthogonality_error(J: int = 7) -> float:
    """``max |(psi_l, dual psi_m) - delta|`` over all indices of ``S_J``.

    Duals are represented in ``S_J`` as ``M^-1 T^-T``; pairings use Gauss
    quadrature (two points per cell, exact for products of hats).
    """
    T = wavelets.synthesis_matrix(J)
    n = T.shape[0]
    Tinv_T = np.linalg.inv(T).T
    dual = np.column_stack([wavelets.solve_mass(J, Tinv_T[:, i]) for i in range(n)])
    x, w, *_ = wavelets.cell_quadrature(J, npts=2)
    P = np.column_stack([wavelets.eval_nodal(T[:, i], J, x) for i in range(n)])
    Q = np.column_stack([wavelets.eval_nodal(dual[:, i], J, x) for i in range(n)])
    G = P.T @ (Q * w[:, None])
    return float(np.max(np.abs(G - np.eye(n))))


def ritz_rates(funcs=None, levels=range(3, 10)):
    funcs = funcs or {"x(1-x)": lambda x: x * (1 - x),
                      "sin(pi x)": lambda x: np.sin(np.pi * x)}
    reports = []
    for name, f in funcs.items():
        errs = [wavelets.l2_distance(wavelets.ritz_project(f, J), J, f, npts=6)
                for J in levels]
        rep = RateReport(f"ritz {name}", list(levels), errs, [0.0] * len(errs),
                         target=float(wavelets.ORDER), tol=0.15)
        reports.append(rep.refit())
    return reports


def study_basis(cfg: StudyConfig | None = None, bior_level: int = 7):
    """Round trip, biorthogonality and Ritz rates; the first report carries the checks."""
    rng = np.random.default_rng(0 if cfg is None else cfg.seed)
    roundtrip = 0.0
    for J in range(2, 13):
        x = rng.standard_normal((1 << J) - 1)
        roundtrip = max(roundtrip, float(np.max(np.abs(
            wavelets.ifwt_array(wavelets.fwt_array(x), J) - x))))
    bior = biorthogonality_error(bior_level)
    reports = ritz_rates()
    reports[0].checks.update({"roundtrip<=1e-12": roundtrip <= 1e-12,
                              "biorthogonality<=1e-8": bior <= 1e-8})
    reports[0].extra.update(roundtrip=roundtrip, biorthogonality=bior)
    return reports
