"""Maximum-likelihood fitting of the LSD and LSD/OTB models.

Every estimator works on the observed frequency table ``f_r`` (users with
exactly ``r`` usage incidences, ``r >= 1``). The zero class is never used.

Internally the iterations run on user proportions ``f_r / n``, so a table
with every count scaled by a constant produces bit-identical parameters.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .distributions import (
    Q_MAX,
    Q_MIN,
    LsdOtbParams,
    LsdParams,
    lsd_logpmf,
    lsd_otb_pmf,
    lsd_pmf,
    lsd_q_from_mean,
)
from .exceptions import NotEstimable, NumericDomainError

__all__ = [
    "MIN_USERS",
    "FrequencyTable",
    "ModelKind",
    "FitMethod",
    "ModelFit",
    "fit_lsd",
    "loglik_lsd",
    "loglik_lsd_otb",
    "fit_lsd_otb",
    "fit_lsd_otb_em",
    "fit_lsd_otb_direct",
]

# items need "more than 10 observations"
MIN_USERS = 11

EM_TOL = 1e-9
EM_MAXITER = 1000
# pi below this counts as a boundary fit: the plain LSD suffices
PI_BOUNDARY = 1e-6


@dataclass(frozen=True, eq=True)
class FrequencyTable:
    """Counts of users by number of usage incidences in one period.

    ``counts`` maps ``r >= 1`` to ``f_r >= 0``; zero rows are dropped and the
    remaining rows are stored in increasing ``r``.
    """

    counts: Mapping[int, int]
    period_id: str = ""

    def __post_init__(self):
        clean = {}
        for r, f in self.counts.items():
            r_int, f_int = int(r), int(f)
            if r_int != r or f_int != f:
                raise ValueError(f"non-integer row {r!r}: {f!r}")
            if r_int < 1:
                raise ValueError(f"usage count r must be >= 1, got {r_int}")
            if f_int < 0:
                raise ValueError(f"f_r must be nonnegative, got {f_int} at r={r_int}")
            if f_int:
                clean[r_int] = clean.get(r_int, 0) + f_int
        object.__setattr__(self, "counts", dict(sorted(clean.items())))

    __hash__ = None

    @classmethod
    def from_observations(cls, usages, period_id: str = "") -> FrequencyTable:
        """Build a table from one usage count per user (zeros are ignored)."""
        vals, freq = np.unique(np.asarray(usages, dtype=np.int64), return_counts=True)
        return cls({int(v): int(c) for v, c in zip(vals, freq) if v > 0}, period_id)

    @property
    def r(self) -> np.ndarray:
        return np.fromiter(self.counts.keys(), dtype=np.int64, count=len(self.counts))

    @property
    def f(self) -> np.ndarray:
        return np.fromiter(self.counts.values(), dtype=np.int64, count=len(self.counts))

    @property
    def n_users(self) -> int:
        return sum(self.counts.values())

    @property
    def n_usages(self) -> int:
        return sum(r * f for r, f in self.counts.items())

    @property
    def max_r(self) -> int:
        return max(self.counts, default=0)

    def scaled(self, factor: int) -> FrequencyTable:
        return FrequencyTable({r: f * factor for r, f in self.counts.items()}, self.period_id)

    def __add__(self, other: FrequencyTable) -> FrequencyTable:
        merged = dict(self.counts)
        for r, f in other.counts.items():
            merged[r] = merged.get(r, 0) + f
        return FrequencyTable(merged, self.period_id)

    def to_dict(self) -> dict:
        return {"period_id": self.period_id, "counts": {str(r): f for r, f in self.counts.items()}}

    @classmethod
    def from_dict(cls, payload: dict) -> FrequencyTable:
        return cls({int(r): int(f) for r, f in payload["counts"].items()}, str(payload.get("period_id", "")))


class ModelKind(str, enum.Enum):
    LSD = "lsd"
    LSD_OTB = "lsd_otb"


class FitMethod(str, enum.Enum):
    MEAN_MATCH = "mean_match"
    EM = "em"
    DIRECT = "direct"


@dataclass(frozen=True)
class ModelFit:
    """Result of fitting one model to one frequency table.

    ``boundary`` marks an LSD/OTB fit whose one-time share collapsed to zero.
    ``well_conditioned`` is False when the likelihood surface is nearly flat
    along some direction at the estimate, so the parameters are poorly pinned.
    """

    kind: ModelKind
    params: LsdParams | LsdOtbParams
    loglik: float
    n_users: int
    converged: bool
    iterations: int
    method: FitMethod
    boundary: bool = False
    well_conditioned: bool = True
    loglik_trace: tuple[float, ...] = field(default=(), repr=False, compare=False)

    @property
    def q(self) -> float:
        return self.params.q

    @property
    def pi(self) -> float:
        return getattr(self.params, "pi", 0.0)

    @property
    def n_params(self) -> int:
        return 1 if self.kind is ModelKind.LSD else 2

    def otb_params(self) -> LsdOtbParams:
        return LsdOtbParams(self.q, self.pi)

    def pmf(self, r):
        return lsd_otb_pmf(self.otb_params(), r)


def _check_users(table: FrequencyTable, min_users: int) -> None:
    n = table.n_users
    if n <= 0:
        raise NotEstimable("empty frequency table")
    if n < min_users:
        raise NotEstimable(f"{n} users is below the minimum of {min_users}")


def loglik_lsd(table: FrequencyTable, params: LsdParams) -> float:
    """``sum f_r ln P_LSD(r)``."""
    return float(np.dot(table.f, lsd_logpmf(params, table.r)))


def loglik_lsd_otb(table: FrequencyTable, params: LsdOtbParams) -> float:
    """Log-likelihood ``sum f_r ln P_LSD/OTB(r | q, pi)`` over observed rows.

    Raises
    ------
    NumericDomainError
        If some observed row has zero model probability in floating point.
    """
    if table.n_users <= 0:
        raise NotEstimable("empty frequency table")
    r, f = table.r, table.f
    logp = _otb_logpmf(params.q, params.pi, r)
    bad = ~np.isfinite(logp)
    if bad.any():
        raise NumericDomainError(f"model probability underflows at r={int(r[bad][0])}")
    return float(np.dot(f, logp))


def _otb_logpmf(q: float, pi: float, r: np.ndarray) -> np.ndarray:
    lsd = lsd_logpmf(LsdParams(q), r)
    with np.errstate(divide="ignore"):
        rest = math.log1p(-pi) + lsd if pi < 1.0 else np.full_like(lsd, -np.inf)
        at_one = np.logaddexp(math.log(pi) if pi > 0 else -np.inf, rest)
    return np.where(r == 1, at_one, rest)


def _proportions(table: FrequencyTable) -> tuple[np.ndarray, np.ndarray]:
    n = table.n_users
    return table.r, table.f / n


def fit_lsd(table: FrequencyTable, min_users: int = MIN_USERS) -> ModelFit:
    """Fit the LSD by matching the sample mean, which is its MLE.

    Raises
    ------
    NotEstimable
        If fewer than ``min_users`` users were observed, or every user used
        the item exactly once.
    """
    _check_users(table, min_users)
    omega_hat = table.n_usages / table.n_users
    params = lsd_q_from_mean(omega_hat)
    return ModelFit(
        kind=ModelKind.LSD,
        params=params,
        loglik=loglik_lsd(table, params),
        n_users=table.n_users,
        converged=True,
        iterations=0,
        method=FitMethod.MEAN_MATCH,
    )


def _check_identifiable(table: FrequencyTable, min_users: int) -> None:
    _check_users(table, min_users)
    if table.max_r < 2:
        raise NotEstimable("no user with r >= 2: q and pi are not jointly identifiable")


def _mean_loglik(q: float, pi: float, r: np.ndarray, p: np.ndarray) -> float:
    return float(np.dot(p, _otb_logpmf(q, pi, r)))


def _starting_point(table: FrequencyTable) -> tuple[float, float]:
    r, p = _proportions(table)
    q_full = fit_lsd(table, min_users=1).q
    excess = p[0] - lsd_pmf(LsdParams(q_full), 1) if r[0] == 1 else 0.0
    pi0 = max(0.05, float(excess))
    repeat = FrequencyTable({rr: ff for rr, ff in table.counts.items() if rr >= 2})
    q0 = fit_lsd(repeat, min_users=1).q
    return q0, pi0


def _boundary_fit(table: FrequencyTable, r: np.ndarray, p: np.ndarray) -> tuple[float, float, bool]:
    """The pi = 0 candidate: LSD q, its per-user log-likelihood, and whether
    the score in pi at pi = 0 is nonpositive (a KKT point on the boundary)."""
    q = fit_lsd(table, min_users=1).q
    p1 = float(p[0]) if r[0] == 1 else 0.0
    one = lsd_pmf(LsdParams(q), 1)
    score = p1 * (1.0 - one) / one - (1.0 - p1)
    return q, _mean_loglik(q, 0.0, r, p), score <= 0.0


def fit_lsd_otb_em(
    table: FrequencyTable,
    min_users: int = MIN_USERS,
    tol: float = EM_TOL,
    maxiter: int = EM_MAXITER,
    start: tuple[float, float] | None = None,
) -> ModelFit:
    """Fit the LSD/OTB mixture by expectation maximization.

    The r = 1 users are split between the one-time point mass and the LSD
    component. The E-step gives each such user the responsibility
    ``tau = pi / (pi + (1 - pi) P_LSD(1))`` of being a one-time user. The
    M-step sets ``pi = tau * f_1 / n`` and refits ``q`` by mean matching on
    the usage attributed to the LSD component.

    Iteration stops when the per-user log-likelihood changes by less than
    ``tol`` or after ``maxiter`` steps. A decrease in log-likelihood larger
    than rounding noise raises ``RuntimeError``.

    Parameters
    ----------
    table : FrequencyTable
    min_users : int
        Tables with fewer observed users raise :class:`NotEstimable`.
    tol, maxiter :
        Convergence controls.
    start : (q, pi), optional
        Starting point; defaults to the same start used by the direct method.
    """
    _check_identifiable(table, min_users)
    r, p = _proportions(table)
    p1 = float(p[0]) if r[0] == 1 else 0.0
    repeat = r >= 2
    repeat_users = float(p[repeat].sum())
    repeat_usage = float(np.dot(r[repeat], p[repeat]))

    q, pi = start if start is not None else _starting_point(table)
    if p1 == 0.0:
        pi = 0.0
    ll = _mean_loglik(q, pi, r, p)
    trace = [ll * table.n_users]
    converged = False
    it = 0
    for it in range(1, maxiter + 1):
        lsd_one = lsd_pmf(LsdParams(q), 1)
        tau = pi / (pi + (1.0 - pi) * lsd_one) if pi > 0.0 else 0.0
        pi = tau * p1
        attributed = (1.0 - tau) * p1
        q = lsd_q_from_mean((repeat_usage + attributed) / (repeat_users + attributed)).q
        new_ll = _mean_loglik(q, pi, r, p)
        trace.append(new_ll * table.n_users)
        if new_ll < ll - 1e-13 * max(1.0, abs(ll)):
            raise RuntimeError(f"EM log-likelihood decreased at iteration {it}: {ll} -> {new_ll}")
        if abs(new_ll - ll) < tol:
            ll = new_ll
            converged = True
            break
        ll = new_ll

    # EM creeps toward pi = 0 sublinearly; take the boundary when it is better
    q_b, ll_b, kkt = _boundary_fit(table, r, p)
    if ll_b >= ll:
        q, pi, converged = q_b, 0.0, converged or kkt

    params = LsdOtbParams(q, pi)
    return ModelFit(
        kind=ModelKind.LSD_OTB,
        params=params,
        loglik=loglik_lsd_otb(table, params),
        n_users=table.n_users,
        converged=converged,
        iterations=it,
        method=FitMethod.EM,
        boundary=pi < PI_BOUNDARY,
        well_conditioned=_well_conditioned(q, pi, r, p),
        loglik_trace=tuple(trace),
    )


def _well_conditioned(q: float, pi: float, r: np.ndarray, p: np.ndarray) -> bool:
    # observed information in (q, pi) by central differences; flat ridges and
    # estimates pressed against the parameter bounds are both flagged
    if pi < PI_BOUNDARY or pi > 1.0 - 1e-4 or q < 1e-6 or q > 1.0 - 1e-6:
        return False
    h = 1e-5 * min(q, 1.0 - q, pi, 1.0 - pi)

    def ll(a, b):
        return _mean_loglik(q + a, pi + b, r, p)

    f0 = ll(0, 0)
    hqq = (ll(h, 0) - 2 * f0 + ll(-h, 0)) / h**2
    hpp = (ll(0, h) - 2 * f0 + ll(0, -h)) / h**2
    hqp = (ll(h, h) - ll(h, -h) - ll(-h, h) + ll(-h, -h)) / (4 * h**2)
    info = -np.array([[hqq, hqp], [hqp, hpp]])
    eig = np.linalg.eigvalsh(info)
    if eig[0] <= 0:
        return False
    return bool(eig[1] / eig[0] < 1e4)


def fit_lsd_otb_direct(
    table: FrequencyTable,
    min_users: int = MIN_USERS,
    start: tuple[float, float] | None = None,
) -> ModelFit:
    """Fit the LSD/OTB mixture by direct likelihood maximization.

    Nelder-Mead over ``(logit q, logit pi)``, starting from
    ``pi0 = max(0.05, excess share at r = 1 over the LSD fit)`` and ``q0``
    from mean matching on the rows with ``r >= 2``.
    """
    _check_identifiable(table, min_users)
    r, p = _proportions(table)
    p1 = float(p[0]) if r[0] == 1 else 0.0
    q0, pi0 = start if start is not None else _starting_point(table)

    if p1 == 0.0:
        # no r = 1 mass: the likelihood is maximized at pi = 0 exactly
        res = minimize(
            lambda x: -_mean_loglik(float(np.clip(expit(x[0]), Q_MIN, Q_MAX)), 0.0, r, p),
            x0=[logit(q0)],
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000},
        )
        q, pi = float(np.clip(expit(res.x[0]), Q_MIN, Q_MAX)), 0.0
    else:

        def objective(x):
            q_, pi_ = float(np.clip(expit(x[0]), Q_MIN, Q_MAX)), float(expit(x[1]))
            if pi_ >= 1.0:
                return np.inf
            return -_mean_loglik(q_, pi_, r, p)

        res = minimize(
            objective,
            x0=[logit(q0), logit(pi0)],
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 8000, "maxfev": 16000},
        )
        q = float(np.clip(expit(res.x[0]), Q_MIN, Q_MAX))
        pi = float(expit(res.x[1]))

    converged = bool(res.success)
    q_b, ll_b, kkt = _boundary_fit(table, r, p)
    if ll_b >= _mean_loglik(q, pi, r, p):
        q, pi, converged = q_b, 0.0, converged or kkt

    params = LsdOtbParams(q, pi)
    return ModelFit(
        kind=ModelKind.LSD_OTB,
        params=params,
        loglik=loglik_lsd_otb(table, params),
        n_users=table.n_users,
        converged=converged,
        iterations=int(res.nit),
        method=FitMethod.DIRECT,
        boundary=pi < PI_BOUNDARY,
        well_conditioned=_well_conditioned(q, pi, r, p),
    )


def fit_lsd_otb(table: FrequencyTable, method: str | FitMethod = FitMethod.EM, **kwargs) -> ModelFit:
    """Fit the LSD/OTB model with EM (default) or direct maximization."""
    method = FitMethod(method)
    if method is FitMethod.EM:
        return fit_lsd_otb_em(table, **kwargs)
    if method is FitMethod.DIRECT:
        return fit_lsd_otb_direct(table, **kwargs)
    raise ValueError(f"unsupported LSD/OTB method {method.value!r}")
