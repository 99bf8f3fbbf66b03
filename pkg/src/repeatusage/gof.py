"""Chi-square goodness of fit for fitted LSD and LSD/OTB models."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincc

from .estimation import FrequencyTable, ModelFit
from .exceptions import NotTestable

__all__ = ["Bin", "GofResult", "chi2_cdf", "chi2_sf", "chi2_verdict", "chisq_gof"]

MIN_EXPECTED = 5.0
MIN_CELLS = 3


def chi2_cdf(x: float, df: int) -> float:
    """Chi-square CDF, the regularized lower incomplete gamma ``P(df/2, x/2)``."""
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x!r}")
    if df < 1:
        raise ValueError(f"df must be a positive integer, got {df!r}")
    return float(gammainc(0.5 * df, 0.5 * x))


def chi2_sf(x: float, df: int) -> float:
    """Upper tail ``1 - chi2_cdf(x, df)`` without cancellation."""
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x!r}")
    if df < 1:
        raise ValueError(f"df must be a positive integer, got {df!r}")
    return float(gammaincc(0.5 * df, 0.5 * x))


def chi2_verdict(chi2: float, df: int, alpha: float = 0.05) -> tuple[float, bool]:
    """p-value and whether the difference is significant at ``alpha``."""
    p = chi2_sf(chi2, df)
    return p, p < alpha


@dataclass(frozen=True)
class Bin:
    """Cell ``lo <= r <= hi``; ``hi is None`` for the open right tail."""

    lo: int
    hi: int | None
    observed: int
    expected: float

    @property
    def label(self) -> str:
        if self.hi is None:
            return f">={self.lo}"
        return str(self.lo) if self.lo == self.hi else f"{self.lo}-{self.hi}"


@dataclass(frozen=True)
class GofResult:
    chi2: float
    df: int
    p_value: float
    alpha: float
    significant: bool
    bins: tuple[Bin, ...]

    @property
    def verdict(self) -> str:
        return "significant" if self.significant else "non_significant"


def chisq_gof(
    table: FrequencyTable,
    fit: ModelFit,
    alpha: float = 0.05,
    min_expected: float = MIN_EXPECTED,
) -> GofResult:
    """Pearson chi-square test of ``fit`` against ``table``.

    Cells are ``r = 1, 2, ...`` for as long as both the cell and everything
    to its right are expected to hold at least ``min_expected`` users; the
    rest is one open tail cell whose expected count uses the exact tail mass.
    Degrees of freedom are ``cells - 1 - fitted parameters``.

    Raises
    ------
    NotTestable
        If fewer than three cells survive, or no degree of freedom is left.
    """
    n = table.n_users
    if n <= 0:
        raise NotTestable("empty frequency table")

    bins: list[Bin] = []
    cum = 0.0
    r = 1
    while True:
        p_r = float(fit.pmf(r))
        tail_after = max(1.0 - cum - p_r, 0.0)
        if n * p_r < min_expected or n * tail_after < min_expected:
            break
        bins.append(Bin(r, r, table.counts.get(r, 0), n * p_r))
        cum += p_r
        r += 1
    tail_obs = sum(f for rr, f in table.counts.items() if rr >= r)
    bins.append(Bin(r, None, tail_obs, n * max(1.0 - cum, 0.0)))

    df = len(bins) - 1 - fit.n_params
    if len(bins) < MIN_CELLS or df < 1:
        raise NotTestable(f"{len(bins)} cells after merging leave {df} degrees of freedom")

    obs = np.array([b.observed for b in bins], dtype=float)
    exp = np.array([b.expected for b in bins])
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    p, significant = chi2_verdict(chi2, df, alpha)
    if math.isnan(p):
        raise NotTestable("p-value is undefined")
    return GofResult(chi2=chi2, df=df, p_value=p, alpha=alpha, significant=significant, bins=tuple(bins))
