"""Repeat-usage models for web items: LSD and LSD/OTB fitting from access logs.

Basic example
-------------

.. code:: python

    from repeatusage import FrequencyTable, fit_lsd, fit_lsd_otb, chisq_gof

    table = FrequencyTable({1: 120, 2: 31, 3: 14, 4: 8, 5: 4, 7: 2, 12: 1})
    lsd = fit_lsd(table)
    otb = fit_lsd_otb(table)
    chisq_gof(table, otb).p_value
"""

from .diagnostics import (
    RepeatUsageSummary,
    TrendReport,
    WindowedFit,
    repeat_usage_summary,
    trend_report,
    windowed_fits,
)
from .distributions import (
    LsdOtbParams,
    LsdParams,
    NbdParams,
    lsd_mean,
    lsd_otb_moments,
    lsd_otb_pmf,
    lsd_pmf,
    lsd_q_from_mean,
    nbd_pmf,
    nbd_summary,
    zt_nbd_pmf,
)
from .estimation import (
    FitMethod,
    FrequencyTable,
    ModelFit,
    ModelKind,
    fit_lsd,
    fit_lsd_otb,
    fit_lsd_otb_direct,
    fit_lsd_otb_em,
    loglik_lsd_otb,
)
from .exceptions import LogFormatError, NotEstimable, NotTestable, NumericDomainError
from .gof import GofResult, chi2_cdf, chi2_verdict, chisq_gof
from .sessionize import (
    LogFormat,
    RobotFilter,
    Session,
    UsageEvent,
    build_sessions,
    count_frequencies,
    filter_robots,
    parse_log,
)
from .simulate import PopulationSpec, sample_counts, sample_events, sample_lsd_otb

__version__ = "0.1.0"
