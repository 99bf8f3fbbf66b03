"""Per-item fit reports and the portfolio summary built from them.

Each model's block in an item report carries one status:

``no_q``
    the parameter could not be estimated (too few users, or no repeat usage)
``no_test``
    fitted, but too few cells remained for a chi-square test
``non_significant`` / ``significant``
    the chi-square verdict at ``alpha``
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .diagnostics import repeat_usage_summary
from .estimation import MIN_USERS, FrequencyTable, ModelFit, fit_lsd, fit_lsd_otb
from .exceptions import NotEstimable, NotTestable
from .gof import chisq_gof

__all__ = [
    "STATUSES",
    "ModelReport",
    "ItemReport",
    "item_report",
    "PortfolioRow",
    "portfolio_summary",
    "format_portfolio",
    "curve_rows",
]

STATUSES = ("no_q", "no_test", "non_significant", "significant")
MODELS = ("lsd", "lsd_otb")


@dataclass
class ModelReport:
    status: str
    q: float | None = None
    pi: float | None = None
    loglik: float | None = None
    chi2: float | None = None
    df: int | None = None
    p_value: float | None = None
    method: str | None = None
    converged: bool | None = None
    boundary: bool | None = None
    well_conditioned: bool | None = None
    reason: str = ""


@dataclass
class ItemReport:
    item_id: str
    period_id: str
    n_users: int
    n_usages: int
    lsd: ModelReport | None = None
    lsd_otb: ModelReport | None = None
    diagnostics: dict | None = None
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> ItemReport:
        data = dict(payload)
        for key in MODELS:
            if data.get(key) is not None:
                data[key] = ModelReport(**data[key])
        return cls(**data)


def _model_block(table: FrequencyTable, fit_fn, alpha: float) -> tuple[ModelReport, ModelFit | None]:
    try:
        fit = fit_fn(table)
    except NotEstimable as exc:
        return ModelReport(status="no_q", reason=str(exc)), None
    block = ModelReport(
        status="no_test",
        q=fit.q,
        pi=fit.pi if fit.n_params == 2 else None,
        loglik=fit.loglik,
        method=fit.method.value,
        converged=fit.converged,
        boundary=fit.boundary if fit.n_params == 2 else None,
        well_conditioned=fit.well_conditioned if fit.n_params == 2 else None,
    )
    try:
        gof = chisq_gof(table, fit, alpha)
    except NotTestable as exc:
        block.reason = str(exc)
        return block, fit
    block.chi2, block.df, block.p_value = gof.chi2, gof.df, gof.p_value
    block.status = gof.verdict
    return block, fit


def item_report(
    item_id: str,
    table: FrequencyTable,
    model: str = "both",
    min_users: int = MIN_USERS,
    alpha: float = 0.05,
    method: str = "em",
) -> ItemReport:
    """Fit, test and summarize one item. Failures become statuses, never errors."""
    rep = ItemReport(item_id, table.period_id, table.n_users, table.n_usages)
    fits: dict[str, ModelFit | None] = {}
    if model in ("lsd", "both"):
        rep.lsd, fits["lsd"] = _model_block(table, lambda t: fit_lsd(t, min_users=min_users), alpha)
    if model in ("lsd-otb", "lsd_otb", "both"):
        rep.lsd_otb, fits["lsd_otb"] = _model_block(
            table, lambda t: fit_lsd_otb(t, method=method, min_users=min_users), alpha
        )
    chosen = fits.get("lsd_otb") or fits.get("lsd")
    if chosen is not None:
        rep.diagnostics = repeat_usage_summary(chosen.q).to_dict()
    blocks = [b for b in (rep.lsd, rep.lsd_otb) if b is not None]
    rep.flags = {
        "no_q": any(b.status == "no_q" for b in blocks),
        "no_test": any(b.status == "no_test" for b in blocks),
    }
    return rep


@dataclass(frozen=True)
class PortfolioRow:
    model: str
    items: int
    no_q: int
    no_test: int
    non_significant: int
    significant: int

    @property
    def tested(self) -> int:
        return self.non_significant + self.significant

    @property
    def pct_fitting(self) -> float | None:
        """Share of tested items without significant differences, in percent."""
        return None if self.tested == 0 else 100.0 * self.non_significant / self.tested


def portfolio_summary(reports: Iterable[ItemReport]) -> list[PortfolioRow]:
    tallies = {m: dict.fromkeys(STATUSES, 0) for m in MODELS}
    items = {m: 0 for m in MODELS}
    seen = set()
    for rep in reports:
        for m in MODELS:
            block = getattr(rep, m)
            if block is None:
                continue
            seen.add(m)
            items[m] += 1
            tallies[m][block.status] += 1
    models = [m for m in MODELS if m in seen] or list(MODELS)
    return [PortfolioRow(m, items[m], **tallies[m]) for m in models]


def format_portfolio(rows: Iterable[PortfolioRow]) -> str:
    header = ("model", "items", "no_q", "no_test", "non_significant", "significant", "pct_fitting")
    lines = ["\t".join(header)]
    for row in rows:
        pct = "–" if row.pct_fitting is None else f"{row.pct_fitting:.2f}%"
        name = "LSD" if row.model == "lsd" else "LSD/OTB"
        lines.append(
            "\t".join(
                map(str, (name, row.items, row.no_q, row.no_test, row.non_significant, row.significant, pct))
            )
        )
    return "\n".join(lines)


def curve_rows(
    table: FrequencyTable,
    lsd_fit: ModelFit | None,
    otb_fit: ModelFit | None,
    max_r: int = 30,
) -> list[dict]:
    """Observed ``f_r`` against expected ``n * P(r)`` for r = 1..max_r plus a tail row."""
    if max_r < 1:
        raise ValueError("max_r must be >= 1")
    n = table.n_users
    r = np.arange(1, max_r + 1)
    expected = {}
    for name, fit in (("lsd", lsd_fit), ("lsd_otb", otb_fit)):
        if fit is None:
            expected[name] = None
            continue
        e = n * np.asarray(fit.pmf(r))
        expected[name] = (e, n - e.sum())
    rows = []
    for i, rr in enumerate(r):
        row = {"r": str(rr), "observed": table.counts.get(int(rr), 0)}
        for name in ("lsd", "lsd_otb"):
            row[f"expected_{name}"] = None if expected[name] is None else float(expected[name][0][i])
        rows.append(row)
    tail = {"r": f">{max_r}", "observed": sum(f for rr, f in table.counts.items() if rr > max_r)}
    for name in ("lsd", "lsd_otb"):
        tail[f"expected_{name}"] = None if expected[name] is None else float(expected[name][1])
    rows.append(tail)
    return rows
