"""Study configuration: defaults, ``key=value`` files and validation."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
import hashlib
import json
import math

from ..errors import AssumptionViolation
from ..spectral import NONLINEARITIES

STUDIES = ("rates-time", "rates-space", "rates-tol", "hoelder", "gronwall", "full",
           "basis-check")

# (beta, rho) pairs; rho sits 0.2 above the borderline 2*beta - 1
DEFAULT_SUITE = ((0.5, 0.2), (1.0, 1.2), (2.0, 4.0))


def suite_rho(beta: float) -> float:
    for b, r in DEFAULT_SUITE:
        if math.isclose(b, beta):
            return r
    return 2 * beta - 1 + 0.2


@dataclass(frozen=True)
class StudyConfig:
    """All knobs of a convergence study.

    List-valued keys are tuples; in config files they are comma separated.
    ``rho=None`` picks the suite value for ``beta``.
    """

    study: str = "rates-space"
    beta: float = 1.0
    rho: float | None = None
    K: int = 512
    T: float = 1.0
    nonlinearity: str = "sin"
    amplitude: float = 1.0
    u0_amplitude: float = 0.0      # initial state u0_amplitude * sqrt(2) sin(pi x)
    J_list: tuple = (3, 4, 5, 6, 7, 8)
    N_list: tuple = (8, 16, 32, 64, 128)
    eps_totals: tuple = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
    eps_schedule: str = "uniform"
    samples: int = 128
    seed: int = 20240601
    # rates-space: tau = space_tau_factor * h**2 and K = space_K_factor * 2**J
    space_tau_factor: float = 16.0
    space_K_factor: int = 8
    space_N_fixed: int = 0          # > 0 uses this N for every J instead
    # rates-time: reference refinement factor over the finest N
    ref_factor: int = 16
    # hoelder: lags 2**-j for j in hoelder_lags, base time s
    hoelder_lags: tuple = (8, 9, 10, 11, 12, 13, 14)
    hoelder_base: float = 0.5
    # tolerance / gronwall / full-run discretization
    J_fixed: int = 7
    N_fixed: int = 32
    chunk: int = 16
    workers: int = 1

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}; choose from {STUDIES}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.samples < 2:
            raise ValueError("samples must be >= 2")
        if self.eps_schedule not in ("uniform", "geometric"):
            raise ValueError("eps_schedule must be 'uniform' or 'geometric'")
        for name in ("N_list", "J_list", "eps_totals", "hoelder_lags"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        lip = abs(self.amplitude) * NONLINEARITIES[self.nonlinearity][2]
        steps = list(self.N_list) + [self.N_fixed]
        for N in steps:
            if self.T / N * lip >= 0.5:
                raise AssumptionViolation(
                    f"N={N}: tau*L_f = {self.T / N * lip:g} violates tau*L_f < 1/2")
        _check_dyadic("N_list", self.N_list, ratio=True)
        _check_dyadic("J_list", self.J_list, ratio=False)
        if self.ref_factor < 2 or self.ref_factor & (self.ref_factor - 1):
            raise ValueError("ref_factor must be a power of 2")

    @property
    def rho_value(self) -> float:
        return suite_rho(self.beta) if self.rho is None else float(self.rho)

    def with_(self, **kw) -> "StudyConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["rho"] = self.rho_value
        return d

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def echo(self) -> str:
        lines = [f"# config hash {self.digest()}"]
        for k, v in self.as_dict().items():
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"


def _check_dyadic(name, values, ratio):
    values = list(values)
    if len(values) < 2:
        return
    for a, b in zip(values, values[1:]):
        ok = (b == 2 * a) if ratio else (b == a + 1)
        if not ok:
            raise ValueError(f"{name} must be a dyadic ladder, got {values}")


def _convert(f, raw: str):
    raw = raw.strip()
    if f.name in ("rho",) and raw.lower() in ("", "none", "auto"):
        return None
    default = f.default
    if isinstance(default, tuple):
        elem = type(default[0]) if default else float
        return tuple(elem(x) for x in raw.split(",") if x.strip())
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float) or default is None:
        return float(raw)
    return raw


def parse_config(text: str, base: StudyConfig | None = None) -> StudyConfig:
    """Parse ``key=value`` lines (``#`` comments allowed) on top of ``base``."""
    by_name = {f.name: f for f in fields(StudyConfig)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in by_name:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _convert(by_name[key], value)
    return replace(base or StudyConfig(), **updates)


def load_config(path, base: StudyConfig | None = None) -> StudyConfig:
    with open(path) as fh:
        return parse_config(fh.read(), base)


DEFAULTS_BY_STUDY = {
    "rates-time": dict(K=512, N_list=(8, 16, 32, 64, 128)),
    "rates-space": dict(J_list=(3, 4, 5, 6, 7, 8)),
    "rates-tol": dict(samples=8, J_fixed=7, N_fixed=32),
    "hoelder": dict(samples=4096),
    "gronwall": dict(samples=64, J_list=(3, 4, 5, 6, 7), N_fixed=64),
    "full": dict(samples=16, beta=1.0, K=128, u0_amplitude=0.5),
    "basis-check": dict(),
}


def default_config(study: str, **overrides) -> StudyConfig:
    kw = dict(DEFAULTS_BY_STUDY.get(study, {}))
    kw.update(overrides)
    return StudyConfig(study=study, **kw)
