"""Repeat-usage characteristics and parameter trends across time windows.

Under stationarity, two consecutive periods of equal length share the same
``q``. Users active in both periods are *repeat users*, users active only in
the second are *new users*, and users active only in the first are *lost
users*. From ``q`` alone:

* ``repeat_user_share`` (b_R / b) is ``ln(1 - q^2) / ln(1 - q)``, the share of
  a period's users who also use the item in the next period. It includes
  users seen once this period who will return.
* ``repeat_usage_share`` (m_R / m) is ``q``, the share of usage by repeat users.
* ``mean_per_repeat_user`` (omega_R) is ``-q^2 / ((1 - q) ln(1 - q^2))``.
* ``mean_per_new_or_lost_user`` (omega_L = omega_N) is ``q / ln(1 + q)``.

These follow from the NBD period-doubling argument in the ``k -> 0`` limit
and satisfy ``b_R/b * omega_R = q * omega(q)``. For an LSD/OTB fit the
repeat subpopulation's ``q`` is used, so the shares refer to users other
than the one-time users.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Mapping, Sequence

from .distributions import LsdParams, lsd_mean
from .estimation import MIN_USERS, ModelFit, fit_lsd_otb
from .exceptions import NotEstimable
from .sessionize import DEFAULT_TIMEOUT, UsageEvent, build_sessions, count_frequencies

__all__ = [
    "RepeatUsageSummary",
    "WindowedFit",
    "TrendRow",
    "TrendReport",
    "repeat_usage_summary",
    "window_edges",
    "windowed_fits",
    "trend_report",
    "summary_for_fit",
    "consistency_gap",
]


@dataclass(frozen=True)
class RepeatUsageSummary:
    q: float
    repeat_user_share: float
    repeat_usage_share: float
    mean_per_repeat_user: float
    mean_per_new_or_lost_user: float

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "repeat_user_share": self.repeat_user_share,
            "repeat_usage_share": self.repeat_usage_share,
            "mean_per_repeat_user": self.mean_per_repeat_user,
            "mean_per_new_or_lost_user": self.mean_per_new_or_lost_user,
        }


def repeat_usage_summary(q: float) -> RepeatUsageSummary:
    """Repeat-usage characteristics for a stationary LSD with parameter ``q``."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q!r}")
    log_1mq = math.log1p(-q)
    log_1mq2 = math.log1p(-q * q)
    return RepeatUsageSummary(
        q=q,
        repeat_user_share=log_1mq2 / log_1mq,
        repeat_usage_share=q,
        mean_per_repeat_user=-q * q / ((1.0 - q) * log_1mq2),
        mean_per_new_or_lost_user=q / math.log1p(q),
    )


@dataclass(frozen=True)
class WindowedFit:
    """LSD/OTB fit of one item in one window; ``fit is None`` marks a gap."""

    label: str
    start: float
    end: float
    n_users: int
    fit: ModelFit | None
    reason: str = ""

    @property
    def q(self) -> float | None:
        return None if self.fit is None else self.fit.q

    @property
    def pi(self) -> float | None:
        return None if self.fit is None else self.fit.pi


def _calendar_quarters(year: int) -> list[tuple[float, float, str]]:
    out = []
    for i in range(4):
        lo = datetime(year, 3 * i + 1, 1, tzinfo=timezone.utc).timestamp()
        hi_dt = datetime(year + 1, 1, 1) if i == 3 else datetime(year, 3 * i + 4, 1)
        out.append((lo, hi_dt.replace(tzinfo=timezone.utc).timestamp(), f"{year}Q{i + 1}"))
    return out


def window_edges(
    start: float,
    end: float,
    n_windows: int = 4,
    mode: str = "auto",
) -> list[tuple[float, float, str]]:
    """Disjoint, ordered windows covering ``[start, end)``.

    ``mode="equal"`` splits the span into equal lengths. ``mode="quarters"``
    uses the calendar quarters of the year containing ``start``. ``"auto"``
    picks quarters when ``n_windows == 4`` and the data sit inside one
    calendar year spanning at least 300 days, otherwise equal lengths.
    """
    if n_windows < 1:
        raise ValueError("n_windows must be >= 1")
    if not end > start:
        raise ValueError("empty time range")
    if mode == "auto":
        y0 = datetime.fromtimestamp(start, timezone.utc).year
        year_end = datetime(y0 + 1, 1, 1, tzinfo=timezone.utc).timestamp()
        one_year = end <= year_end and end - start >= 300 * 86400
        mode = "quarters" if n_windows == 4 and one_year else "equal"
    if mode == "quarters":
        if n_windows != 4:
            raise ValueError("quarters mode needs n_windows == 4")
        return _calendar_quarters(datetime.fromtimestamp(start, timezone.utc).year)
    if mode != "equal":
        raise ValueError(f"unknown window mode {mode!r}")
    width = (end - start) / n_windows
    edges = [start + i * width for i in range(n_windows)] + [end]
    return [(edges[i], edges[i + 1], f"W{i + 1}") for i in range(n_windows)]


def windowed_fits(
    events: Iterable[UsageEvent],
    n_windows: int = 4,
    start: float | None = None,
    end: float | None = None,
    mode: str = "auto",
    timeout: float = DEFAULT_TIMEOUT,
    min_users: int = MIN_USERS,
    method: str = "em",
) -> dict[str, list[WindowedFit]]:
    """Fit the LSD/OTB model per item and window.

    Sessions belong to the window containing their start. Every item seen in
    any window gets one entry per window; windows where the item is absent
    or not estimable carry ``fit=None`` and a reason.
    """
    events = list(events)
    if not events:
        return {}
    lo = min(e.timestamp for e in events) if start is None else start
    hi = max(e.timestamp for e in events) + 1 if end is None else end
    windows = window_edges(lo, hi, n_windows, mode)
    sessions = build_sessions(events, timeout)

    per_window = [count_frequencies(sessions, (w0, w1), label) for w0, w1, label in windows]
    items = sorted(set().union(*per_window))
    out: dict[str, list[WindowedFit]] = {}
    for item in items:
        rows = []
        for (w0, w1, label), tables in zip(windows, per_window):
            table = tables.get(item)
            if table is None:
                rows.append(WindowedFit(label, w0, w1, 0, None, "absent"))
                continue
            try:
                fit = fit_lsd_otb(table, method=method, min_users=min_users)
            except NotEstimable as exc:
                rows.append(WindowedFit(label, w0, w1, table.n_users, None, str(exc)))
                continue
            rows.append(WindowedFit(label, w0, w1, table.n_users, fit))
        out[item] = rows
    return out


@dataclass(frozen=True)
class TrendRow:
    label: str
    users: int
    q: float | None
    pi: float | None
    delta_q: float | None
    delta_pi: float | None
    flagged: bool
    gap: str = ""


@dataclass(frozen=True)
class TrendReport:
    item_id: str
    rows: tuple[TrendRow, ...]

    @property
    def nonstationary(self) -> bool:
        return any(r.flagged for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "nonstationary": self.nonstationary,
            "rows": [
                {
                    "window": r.label,
                    "users": r.users,
                    "q": r.q,
                    "pi": r.pi,
                    "delta_q": r.delta_q,
                    "delta_pi": r.delta_pi,
                    "flagged": r.flagged,
                    "gap": r.gap,
                }
                for r in self.rows
            ],
        }


def trend_report(
    fits: Mapping[str, Sequence[WindowedFit]],
    q_threshold: float = 0.2,
    pi_threshold: float = 0.2,
) -> dict[str, TrendReport]:
    """Per-window parameters with first differences.

    A window is flagged when ``|delta q| > q_threshold`` or
    ``|delta pi| > pi_threshold`` against the previous window. Differences
    touching a gap are ``None`` and never flag.
    """
    out = {}
    for item, windows in fits.items():
        if len(windows) < 2:
            raise ValueError(f"item {item!r}: at least 2 windows are required")
        rows = []
        prev = None
        for w in windows:
            dq = dpi = None
            if prev is not None and prev.fit is not None and w.fit is not None:
                dq, dpi = w.q - prev.q, w.pi - prev.pi
            flagged = (dq is not None and abs(dq) > q_threshold) or (dpi is not None and abs(dpi) > pi_threshold)
            rows.append(TrendRow(w.label, w.n_users, w.q, w.pi, dq, dpi, flagged, w.reason if w.fit is None else ""))
            prev = w
        out[item] = TrendReport(item, tuple(rows))
    return out


def summary_for_fit(fit: ModelFit) -> RepeatUsageSummary:
    """Repeat-usage characteristics from a fitted model's ``q``."""
    return repeat_usage_summary(fit.q)


def consistency_gap(q: float) -> float:
    """``b_R/b * omega_R - q * omega(q)``; zero up to rounding."""
    s = repeat_usage_summary(q)
    return s.repeat_user_share * s.mean_per_repeat_user - q * lsd_mean(LsdParams(q))
