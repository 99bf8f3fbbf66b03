"""
From an access log to a portfolio summary
=========================================

Synthetic access log -> sessions -> per-item frequency tables -> fits ->
the share of items whose usage is consistent with each model.
"""

import io

from repeatusage.report import format_portfolio, item_report, portfolio_summary
from repeatusage.sessionize import RobotFilter, build_sessions, count_frequencies, filter_robots, parse_log, write_log
from repeatusage.simulate import PopulationSpec, sample_events

# twelve items with different repeat behavior, one year of traffic each
events = []
for i, (q, pi) in enumerate([(0.7, 0.2), (0.9, 0.5), (0.8, 0.0), (0.95, 0.4)] * 3):
    spec = PopulationSpec.for_lsd(q, n_users=800, otb_fraction=pi, seed=i)
    events += sample_events(spec, f"item{i:02d}", start=978307200.0)  # 2001-01-01
events.sort()

# write and re-read the log the way a real one would arrive
buf = io.StringIO()
write_log(events, buf)
parsed = list(parse_log(buf.getvalue().splitlines()))
kept = filter_robots(parsed, RobotFilter())
print(f"{len(parsed)} events parsed, {len(parsed) - len(kept)} dropped as robots")

# 20-minute sessions, each item counted once per session
sessions = build_sessions(kept, timeout=1200)
tables = count_frequencies(sessions)
print(f"{len(sessions)} sessions over {len(tables)} items")

reports = [item_report(item, table) for item, table in tables.items()]
for rep in reports[:4]:
    o = rep.lsd_otb
    print(f"{rep.item_id}: n={rep.n_users:4d} q={o.q:.3f} pi={o.pi:.3f} LSD/OTB {o.status}, LSD {rep.lsd.status}")

print()
print(format_portfolio(portfolio_summary(reports)))
