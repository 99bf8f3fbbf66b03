"""Probability mass functions for the LSD family and the NBD.

All pmfs accept a scalar ``r`` or an integer array and are evaluated in log
space. ``q`` is clamped to ``[Q_MIN, Q_MAX]`` before any logarithm is taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .exceptions import NotEstimable, NumericDomainError

__all__ = [
    "Q_MIN",
    "Q_MAX",
    "LsdParams",
    "LsdOtbParams",
    "NbdParams",
    "lsd_pmf",
    "lsd_logpmf",
    "lsd_mean",
    "lsd_q_from_mean",
    "lsd_otb_pmf",
    "lsd_otb_logpmf",
    "lsd_otb_moments",
    "nbd_pmf",
    "nbd_logpmf",
    "nbd_summary",
    "zt_nbd_pmf",
]

Q_MIN = 1e-9
Q_MAX = 1.0 - 1e-9

# omega(q) <= 1 + this is treated as "no repeat usage"
_OMEGA_FLOOR = 1e-9


def _clamp_q(q: float) -> float:
    return min(max(float(q), Q_MIN), Q_MAX)


@dataclass(frozen=True)
class LsdParams:
    """Logarithmic series distribution, support r = 1, 2, ..."""

    q: float

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q!r}")

    @property
    def omega(self) -> float:
        return lsd_mean(self)


@dataclass(frozen=True)
class LsdOtbParams:
    """LSD mixed with a point mass at r = 1 of weight ``pi`` (one-time users)."""

    q: float
    pi: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q!r}")
        if not 0.0 <= self.pi < 1.0:
            raise ValueError(f"pi must lie in [0, 1), got {self.pi!r}")

    @property
    def lsd(self) -> LsdParams:
        return LsdParams(self.q)


@dataclass(frozen=True)
class NbdParams:
    """Negative binomial with mean ``m`` and exponent ``k``."""

    m: float
    k: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m!r}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k!r}")

    @property
    def q(self) -> float:
        """The LSD parameter the zero-truncated NBD tends to as k -> 0."""
        return self.m / (self.m + self.k)


def _as_support(r, lowest: int) -> np.ndarray:
    arr = np.asarray(r)
    if arr.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("r must be integer valued")
        arr = arr.astype(np.int64)
    if np.any(arr < lowest):
        raise ValueError(f"r must be >= {lowest}, got {arr.min()}")
    return arr


def _unwrap(r, values: np.ndarray):
    return float(values) if np.ndim(r) == 0 else values


def lsd_logpmf(params: LsdParams, r):
    """``log P(R = r)`` for the LSD."""
    rr = _as_support(r, 1)
    q = _clamp_q(params.q)
    out = rr * math.log(q) - np.log(rr) - math.log(-math.log1p(-q))
    return _unwrap(r, out)


def lsd_pmf(params: LsdParams, r):
    """``P(R = r) = -q**r / (r * ln(1 - q))`` for r >= 1.

    Raises
    ------
    ValueError
        If any ``r < 1``; the LSD puts no mass at zero.
    """
    return _unwrap(r, np.exp(lsd_logpmf(params, r)))


def _omega(q: float) -> float:
    return -q / ((1.0 - q) * math.log1p(-q))


def lsd_mean(params: LsdParams) -> float:
    """Mean usage per observed user, ``-q / ((1 - q) ln(1 - q))``."""
    return _omega(_clamp_q(params.q))


def lsd_q_from_mean(omega: float, tol: float = 1e-10, maxiter: int = 200) -> LsdParams:
    """Invert :func:`lsd_mean`.

    ``omega(q)`` is increasing on (0, 1), so the root is bracketed by the clamp
    interval. Each step tries a false-position point (Illinois weighting) and
    falls back to bisection when the bracket stops shrinking fast enough.
    Stops once ``|omega(q) - omega| <= tol * max(1, omega)``.

    Raises
    ------
    NotEstimable
        If ``omega <= 1 + 1e-9``.
    """
    omega = float(omega)
    if not omega > 1.0 + _OMEGA_FLOOR:
        raise NotEstimable(f"mean usage {omega!r} carries no repeat-usage signal")
    target_tol = tol * max(1.0, omega)

    lo, hi = Q_MIN, Q_MAX
    f_lo, f_hi = _omega(lo) - omega, _omega(hi) - omega
    if f_hi <= 0.0:
        return LsdParams(hi)
    if f_lo >= 0.0:
        return LsdParams(lo)

    side = 0
    width = hi - lo
    q = lo
    for _ in range(maxiter):
        q = hi - f_hi * (hi - lo) / (f_hi - f_lo)
        if not lo < q < hi:
            q = 0.5 * (lo + hi)
        f = _omega(q) - omega
        if abs(f) <= target_tol:
            break
        if f < 0.0:
            lo, f_lo = q, f
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            hi, f_hi = q, f
            if side == 1:
                f_lo *= 0.5
            side = 1
        if hi - lo > 0.5 * width:
            # false position stalled: force a bisection step
            mid = 0.5 * (lo + hi)
            fm = _omega(mid) - omega
            if abs(fm) <= target_tol:
                q = mid
                break
            if fm < 0.0:
                lo, f_lo = mid, fm
            else:
                hi, f_hi = mid, fm
            side = 0
        width = hi - lo
        if width <= 4 * np.finfo(float).eps * hi:
            q = 0.5 * (lo + hi)
            break
    return LsdParams(q)


def lsd_otb_logpmf(params: LsdOtbParams, r):
    """``log P(R = r)`` for the LSD/OTB mixture."""
    return _unwrap(r, np.log(np.asarray(lsd_otb_pmf(params, r))))


def lsd_otb_pmf(params: LsdOtbParams, r):
    """``pi * [r == 1] + (1 - pi) * lsd_pmf(q, r)``.

    With ``pi == 0`` this returns exactly :func:`lsd_pmf`.
    """
    base = np.asarray(lsd_pmf(params.lsd, r))
    pi = params.pi
    out = pi * (np.asarray(r) == 1) + (1.0 - pi) * base
    return _unwrap(r, out)


def lsd_otb_moments(params: LsdOtbParams) -> tuple[float, float]:
    """Mean and variance of the LSD/OTB mixture.

    The variance is expanded so no ``1/pi`` factor appears, which makes
    ``pi = 0`` an ordinary evaluation rather than a limit.
    """
    q = _clamp_q(params.q)
    pi = params.pi
    w = _omega(q)
    mean = pi + (1.0 - pi) * w
    var = (1.0 - pi) * w / (1.0 - q) + pi * (1.0 - pi) * (1.0 - 2.0 * w) - (1.0 - pi) ** 2 * w * w
    return mean, var


def nbd_logpmf(params: NbdParams, r):
    """``log P(R = r)`` for the NBD via log-gamma."""
    rr = _as_support(r, 0)
    m, k = params.m, params.k
    out = (
        -k * math.log1p(m / k)
        + gammaln(k + rr)
        - gammaln(rr + 1.0)
        - gammaln(k)
        + rr * math.log(m / (m + k))
    )
    return _unwrap(r, out)


def nbd_pmf(params: NbdParams, r):
    """NBD probability of r purchases in the period, r >= 0."""
    return _unwrap(r, np.exp(nbd_logpmf(params, r)))


def nbd_summary(params: NbdParams) -> tuple[float, float]:
    """Penetration ``b = 1 - P(0)`` and mean per buyer ``omega = m / b``."""
    b = -math.expm1(-params.k * math.log1p(params.m / params.k))
    omega = params.m / b if b > 0.0 else math.inf
    return b, omega


def zt_nbd_pmf(params: NbdParams, r):
    """Zero-truncated NBD, ``nbd_pmf(r) / (1 - nbd_pmf(0))`` for r >= 1.

    Raises
    ------
    NumericDomainError
        If the penetration ``b`` underflows to zero.
    """
    rr = _as_support(r, 1)
    b, _ = nbd_summary(params)
    if not b > 0.0:
        raise NumericDomainError(f"penetration underflows for m={params.m}, k={params.k}")
    return _unwrap(r, np.exp(nbd_logpmf(params, rr) - math.log(b)))
