"""
Fitting one item: LSD against LSD/OTB
=====================================

A single item whose users split into one-time users and a repeat-usage
population. The plain LSD cannot absorb the excess at r = 1; adding the
one-time share fixes that.
"""

import numpy as np

from repeatusage import (
    FrequencyTable,
    LsdParams,
    chisq_gof,
    fit_lsd,
    fit_lsd_otb_direct,
    fit_lsd_otb_em,
    lsd_pmf,
)
from repeatusage.report import curve_rows
from repeatusage.simulate import sample_lsd_otb

# 3000 users, repeat population with q = 0.954, 39% one-time users
table = sample_lsd_otb(3000, q=0.954, pi=0.39, seed=5)
print("users:", table.n_users, "usages:", table.n_usages)
print("first rows:", dict(list(table.counts.items())[:6]))

# the LSD is fitted by matching the mean; LSD/OTB by EM
lsd = fit_lsd(table)
otb = fit_lsd_otb_em(table)
print(f"LSD      q={lsd.q:.3f}             LL={lsd.loglik:.1f}")
print(f"LSD/OTB  q={otb.q:.3f}  pi={otb.pi:.3f}  LL={otb.loglik:.1f}  ({otb.iterations} EM steps)")

# a direct optimizer lands on the same point
direct = fit_lsd_otb_direct(table)
print(f"direct   q={direct.q:.3f}  pi={direct.pi:.3f}")

# chi-square tests after pooling cells to expected counts >= 5
for name, fit in (("LSD", lsd), ("LSD/OTB", otb)):
    res = chisq_gof(table, fit)
    print(f"{name:8s} chi2={res.chi2:8.2f} df={res.df:2d} p={res.p_value:.4f} -> {res.verdict}")

# observed against expected, truncated at r = 10 for display
print(f"{'r':>4} {'obs':>6} {'LSD':>9} {'LSD/OTB':>9}")
for row in curve_rows(table, lsd, otb, max_r=10):
    print(f"{row['r']:>4} {row['observed']:>6} {row['expected_lsd']:9.1f} {row['expected_lsd_otb']:9.1f}")

# a table with no excess at r = 1 sends the one-time share to zero
r = np.arange(1, 300)
clean = FrequencyTable(dict(zip(r.tolist(), np.rint(5000 * lsd_pmf(LsdParams(0.8), r)).astype(int).tolist())))
fit = fit_lsd_otb_em(clean)
print(f"pure LSD data: pi={fit.pi:.4f} boundary={fit.boundary}")
