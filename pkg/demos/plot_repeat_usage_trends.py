"""
Repeat-usage characteristics and quarterly trends
=================================================

What a fitted q says about repeat, new and lost users, and how to watch
q and the one-time share drift across calendar quarters.
"""

from datetime import datetime, timezone

import numpy as np

from repeatusage.diagnostics import repeat_usage_summary, trend_report, windowed_fits
from repeatusage.simulate import PopulationSpec, events_from_counts, sample_user_counts

# characteristics for three q values
print(f"{'q':>6} {'w_R':>7} {'b_R/b':>7} {'m_R/m':>7} {'w_L':>7}")
for q in (0.717, 0.807, 0.916):
    s = repeat_usage_summary(q)
    print(
        f"{q:6.3f} {s.mean_per_repeat_user:7.3f} {s.repeat_user_share:7.3f} "
        f"{s.repeat_usage_share:7.3f} {s.mean_per_new_or_lost_user:7.3f}"
    )


def quarter(year, i):
    lo = datetime(year, 3 * i + 1, 1, tzinfo=timezone.utc).timestamp()
    hi = datetime(year + (i == 3), 1 if i == 3 else 3 * i + 4, 1, tzinfo=timezone.utc).timestamp()
    return lo, hi


# one item whose one-time share climbs from 0.2 to 0.6 over the year
events = []
for i, pi in enumerate(np.linspace(0.2, 0.6, 4)):
    spec = PopulationSpec.for_lsd(0.85, n_users=1500, otb_fraction=pi, seed=i)
    rng = np.random.default_rng(spec.seed)
    lo, hi = quarter(2001, i)
    events += events_from_counts(sample_user_counts(spec, rng), "portal", lo, hi, rng, user_prefix=f"q{i}")

fits = windowed_fits(events, n_windows=4)
report = trend_report(fits, q_threshold=0.1, pi_threshold=0.1)["portal"]
for row in report.rows:
    dq = "" if row.delta_q is None else f"{row.delta_q:+.3f}"
    dpi = "" if row.delta_pi is None else f"{row.delta_pi:+.3f}"
    print(f"{row.label}  users={row.users:5d}  q={row.q:.3f} {dq:>7}  pi={row.pi:.3f} {dpi:>7}  {'*' if row.flagged else ''}")
print("non-stationary:", report.nonstationary)
