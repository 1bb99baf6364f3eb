"""Rate fitting and report records."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import math
import platform

import numpy as np
from scipy import stats as sstats

from ..errors import InsufficientDataError

NOISE_RULE = 0.2        # points with stderr >= 20% of the error are dropped


@dataclass(frozen=True)
class RateFit:
    slope: float
    ci_lo: float
    ci_hi: float
    used: tuple
    intercept: float = 0.0
    r2: float = 1.0


def fit_rate(errors, levels, stderrs=None, confidence: float = 0.95) -> RateFit:
    """Least-squares decay rate of ``log2(error)`` against ``level``.

    The slope is reported with a positive sign for decreasing errors (errors
    halving per level give 1).  Points whose standard error is not below
    ``NOISE_RULE`` times the error are excluded; at least three points must
    remain.  The interval is a Student-t interval from the residual variance.
    """
    errors = np.asarray(errors, dtype=float)
    levels = np.asarray(levels, dtype=float)
    if errors.shape != levels.shape:
        raise ValueError("errors and levels must have the same length")
    use = np.isfinite(errors) & (errors > 0)
    if stderrs is not None:
        stderrs = np.asarray(stderrs, dtype=float)
        use &= stderrs < NOISE_RULE * errors
    n = int(use.sum())
    if n < 3:
        raise InsufficientDataError(f"only {n} usable points (need >= 3)")
    x = levels[use]
    y = -np.log2(errors[use])
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise InsufficientDataError("levels must not all coincide")
    slope = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xm)
    resid = y - (intercept + slope * x)
    s2 = float(np.sum(resid ** 2)) / (n - 2)
    half = float(sstats.t.ppf(0.5 + confidence / 2, n - 2)) * math.sqrt(s2 / sxx)
    syy = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / syy if syy > 0 else 1.0
    return RateFit(slope, slope - half, slope + half, tuple(np.flatnonzero(use)),
                   intercept, r2)


def rms_with_stderr(sq: np.ndarray, axis: int = 0):
    """RMS of samples of squared errors and its delta-method standard error."""
    sq = np.asarray(sq, dtype=float)
    m = sq.shape[axis]
    mean = sq.mean(axis=axis)
    sd = sq.std(axis=axis, ddof=1)
    rms = np.sqrt(mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(rms > 0, sd / math.sqrt(m) / (2 * rms), 0.0)
    return rms, se


def max_of_rms(sq_paths_by_step: np.ndarray):
    """``max_n sqrt(E err_n^2)`` from squared errors of shape ``(paths, steps)``.

    Returns ``(value, stderr, rms_of_max, stderr_of_that)``.
    """
    rms, se = rms_with_stderr(sq_paths_by_step, axis=0)
    n = int(np.argmax(rms))
    rmax, semax = rms_with_stderr(sq_paths_by_step.max(axis=1), axis=0)
    return float(rms[n]), float(se[n]), float(rmax), float(semax)


@dataclass
class RateReport:
    """Per-resolution errors of a study plus the fitted rate."""

    study: str
    levels: list
    error_rms: list
    stderr: list
    target: float | None = None
    tol: float | None = None
    fit: RateFit | None = None
    rms_of_max: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)      # name -> bool

    def refit(self) -> "RateReport":
        self.fit = fit_rate(self.error_rms, self.levels, self.stderr)
        return self

    @property
    def slope(self) -> float:
        return self.fit.slope if self.fit else float("nan")

    @property
    def passed(self) -> bool | None:
        verdicts = [bool(v) for v in self.checks.values()]
        if self.target is not None and self.tol is not None:
            verdicts.append(self.fit is not None
                            and abs(self.fit.slope - self.target) <= self.tol)
        return all(verdicts) if verdicts else None

    def summary(self) -> str:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]
        parts = [f"[{status}] {self.study}"]
        if self.fit is not None:
            parts.append(f"slope={self.fit.slope:.3f} "
                         f"CI=[{self.fit.ci_lo:.3f},{self.fit.ci_hi:.3f}]")
        if self.target is not None:
            parts.append(f"target={self.target:.3f}+-{self.tol:.3f}")
        parts.extend(f"{k}={'ok' if v else 'FAILED'}" for k, v in self.checks.items())
        return " ".join(parts)

    def rows(self):
        fit = self.fit
        for i, lev in enumerate(self.levels):
            yield {
                "study": self.study,
                "level": lev,
                "error_rms": self.error_rms[i],
                "stderr": self.stderr[i],
                "slope": fit.slope if fit else "",
                "slope_ci_lo": fit.ci_lo if fit else "",
                "slope_ci_hi": fit.ci_hi if fit else "",
            }


REPORT_COLUMNS = ("study", "level", "error_rms", "stderr", "slope", "slope_ci_lo",
                  "slope_ci_hi")
STATS_COLUMNS = ("path_id", "n", "eps_n", "support", "iterations", "op_count", "residual")


def write_reports(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for rep in reports:
            for row in rep.rows():
                writer.writerow(row)


def write_stats(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=STATS_COLUMNS)
        writer.writeheader()
        for rec in records:
            writer.writerow({k: rec[k] for k in STATS_COLUMNS})


def environment_meta() -> dict:
    import scipy
    from .. import __version__
    from ..kernels import BACKEND
    return {"package": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernels": BACKEND}
