"""Acceptance suite: one marked group of tests per criterion.

Run ``pytest tests/test_acceptance.py`` and read the "acceptance criteria"
section at the end of the report for one PASS/FAIL line per criterion.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from repeatusage.cli import main
from repeatusage.diagnostics import repeat_usage_summary
from repeatusage.distributions import (
    LsdOtbParams,
    LsdParams,
    NbdParams,
    lsd_otb_moments,
    lsd_otb_pmf,
    lsd_pmf,
    zt_nbd_pmf,
)
from repeatusage.estimation import FrequencyTable, fit_lsd, fit_lsd_otb_direct, fit_lsd_otb_em
from repeatusage.gof import chi2_verdict, chisq_gof
from repeatusage.report import ItemReport, ModelReport
from repeatusage.sessionize import build_sessions, count_frequencies, UsageEvent
from repeatusage.simulate import sample_lsd_otb

DATA = Path(__file__).parent / "data"


def criterion(key, title):
    return pytest.mark.criterion(key, title)


def report(key, ok, detail):
    print(f"[criterion {key}] {'PASS' if ok else 'FAIL'}: {detail}")


# --------------------------------------------------------------------------- 1

REFERENCE_ROWS = [
    (0.717, {"mean_per_repeat_user": 2.519, "repeat_user_share": 0.572, "repeat_usage_share": 0.717, "mean_per_new_or_lost_user": 1.327}),
    (0.807, {"mean_per_repeat_user": 3.205, "repeat_user_share": 0.640, "repeat_usage_share": 0.807, "mean_per_new_or_lost_user": 1.364}),
    (0.916, {"mean_per_repeat_user": 5.456, "repeat_user_share": 0.737, "repeat_usage_share": 0.916, "mean_per_new_or_lost_user": 1.409}),
]


@criterion("1", "repeat-usage table: 12 values within 0.01")
def test_repeat_usage_table():
    misses = []
    for q, expected in REFERENCE_ROWS:
        s = repeat_usage_summary(q)
        for field, value in expected.items():
            got = getattr(s, field)
            if abs(got - value) > 0.01:
                misses.append(f"q={q} {field}: {got:.4f} vs {value} (|err|={abs(got - value):.4f})")
    report("1", not misses, "; ".join(misses) or "all 12 values within 0.01")
    assert not misses, misses


# --------------------------------------------------------------------------- 2


@criterion("2", "significance verdicts at alpha=0.05")
def test_verdicts():
    p1, sig1 = chi2_verdict(1.922, 5, 0.05)
    p2, sig2 = chi2_verdict(15.134, 6, 0.05)
    ok = (not sig1) and sig2
    report("2", ok, f"(1.922, 5) p={p1:.4f} significant={sig1}; (15.134, 6) p={p2:.4f} significant={sig2}")
    assert ok


# --------------------------------------------------------------------------- 3


@criterion("3", "portfolio arithmetic: 65.34% and 93.14%")
def test_portfolio_percentages(tmp_path, capsys):
    statuses = ("no_q", "no_test", "non_significant", "significant")
    lsd = [s for s, n in zip(statuses, (713, 786, 475, 252)) for _ in range(n)]
    otb = [s for s, n in zip(statuses, (834, 838, 516, 38)) for _ in range(n)]
    path = tmp_path / "reports.jsonl"
    with open(path, "w") as fh:
        for i, (a, b) in enumerate(zip(lsd, otb)):
            fh.write(json.dumps(ItemReport(f"i{i}", "", 20, 30, ModelReport(a), ModelReport(b)).to_dict()) + "\n")
    assert main(["report", "--reports", str(path)]) == 0
    out = capsys.readouterr().out.splitlines()
    pct = [line.split("\t")[-1] for line in out[1:]]
    ok = pct == ["65.34%", "93.14%"]
    with capsys.disabled():
        report("3", ok, f"LSD {pct[0]}, LSD/OTB {pct[1]}")
    assert ok


# -------------------------------------------------------------------------- 4a

GRID = [(q, pi) for q in (0.7, 0.9) for pi in (0.2, 0.5)]


@criterion("4a", "estimator recovery, MAE(q)<0.02, MAE(pi)<0.03, EM vs direct within 1e-3")
def test_estimator_recovery():
    t0 = time.perf_counter()
    q_err, pi_err, gap = [], [], []
    for i in range(20):
        q, pi = GRID[i % 4]
        table = sample_lsd_otb(5000, q, pi, seed=500 + i)
        em, direct = fit_lsd_otb_em(table), fit_lsd_otb_direct(table)
        q_err.append(abs(em.q - q))
        pi_err.append(abs(em.pi - pi))
        gap.append(max(abs(em.q - direct.q), abs(em.pi - direct.pi)))
    elapsed = time.perf_counter() - t0
    ok = np.mean(q_err) < 0.02 and np.mean(pi_err) < 0.03 and max(gap) < 1e-3 and elapsed < 10
    report(
        "4a", ok,
        f"MAE(q)={np.mean(q_err):.4f} MAE(pi)={np.mean(pi_err):.4f} max EM-direct gap={max(gap):.2e} in {elapsed:.1f}s",
    )
    assert ok


# -------------------------------------------------------------------------- 4b


@criterion("4b", "GoF calibration: rejection rate in [2%, 9%] over 500 replicates")
def test_gof_calibration():
    t0 = time.perf_counter()
    fitted = fit_lsd_otb_em(sample_lsd_otb(2000, 0.954, 0.39, seed=2024))
    q, pi = fitted.q, fitted.pi
    rejections = tested = 0
    for rep in range(500):
        table = sample_lsd_otb(2000, q, pi, seed=10_000 + rep)
        res = chisq_gof(table, fit_lsd_otb_em(table))
        tested += 1
        rejections += res.significant
    rate = rejections / tested
    elapsed = time.perf_counter() - t0
    ok = 0.02 <= rate <= 0.09 and elapsed < 60
    report("4b", ok, f"rejection rate {rate:.3f} at fitted q={q:.3f} pi={pi:.3f} in {elapsed:.1f}s")
    assert ok


# -------------------------------------------------------------------------- 4c


@criterion("4c", "zero-truncated NBD at k=0.01 within 0.01 of LSD over r<=200")
def test_lsd_limit():
    r = np.arange(1, 201)
    k = 0.01
    worst = 0.0
    for q in (0.3, 0.5, 0.7, 0.8, 0.9, 0.954, 0.99):
        m = q * k / (1 - q)
        worst = max(worst, float(np.abs(zt_nbd_pmf(NbdParams(m, k), r) - lsd_pmf(LsdParams(m / (m + k)), r)).max()))
    report("4c", worst < 0.01, f"worst sup-norm gap {worst:.2e}")
    assert worst < 0.01


# -------------------------------------------------------------------------- 4d


@criterion("4d", "LSD/OTB variance matches moment summation within 1e-6")
def test_variance_formula():
    worst = 0.0
    for q in (0.05, 0.3, 0.6, 0.8, 0.9, 0.95, 0.99):
        for pi in (0.0, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9):
            params = LsdOtbParams(q, pi)
            r = np.arange(1, 20_001)
            p = lsd_otb_pmf(params, r)
            mean = float(np.dot(r, p))
            var = float(np.dot(r.astype(float) ** 2, p)) - mean**2
            worst = max(worst, abs(lsd_otb_moments(params)[1] - var))
    report("4d", worst < 1e-6, f"worst variance gap {worst:.2e} over 49 grid points")
    assert worst < 1e-6


# -------------------------------------------------------------------------- 4e

FIXTURES = [
    {1: 5, 2: 5},
    {1: 100, 2: 1},
    {2: 10},
    {1: 40, 2: 9, 3: 4, 7: 1},
    {1: 300, 2: 20, 3: 10, 4: 6, 6: 3, 10: 2},
    {1: 14, 2: 5, 3: 3, 4: 2, 6: 1},
]


@criterion("4e", "EM monotone and LL(LSD/OTB) >= LL(LSD) on fixtures and random tables")
def test_monotone_and_nested():
    rng = np.random.default_rng(7)
    tables = [FrequencyTable(c) for c in FIXTURES]
    while len(tables) < len(FIXTURES) + 300:
        r = rng.integers(1, 60, size=rng.integers(1, 15))
        f = rng.integers(0, 400, size=len(r))
        counts = {}
        for rr, ff in zip(r.tolist(), f.tolist()):
            counts[rr] = counts.get(rr, 0) + ff
        t = FrequencyTable(counts)
        if t.n_users >= 1 and any(rr >= 2 for rr in t.counts):
            tables.append(t)
    bad = []
    for t in tables:
        em, lsd = fit_lsd_otb_em(t, min_users=1), fit_lsd(t, min_users=1)
        if np.any(np.diff(em.loglik_trace) < -1e-10 * max(1.0, abs(em.loglik))):
            bad.append(("trace", t.counts))
        if em.loglik < lsd.loglik - 1e-9 * max(1.0, abs(lsd.loglik)):
            bad.append(("nesting", t.counts))
    report("4e", not bad, f"{len(tables)} tables, {len(bad)} violations")
    assert not bad, bad[:3]


# --------------------------------------------------------------------------- 5


@criterion("5", "end-to-end pipeline recovers parameters; sessionizer fixtures exact")
def test_end_to_end(tmp_path):
    t0 = time.perf_counter()
    items = [
        {"item_id": f"item{i}", "q": q, "otb_fraction": pi, "n_users": 5000, "seed": 70 + i}
        for i, (q, pi) in enumerate(GRID * 2)
    ]
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"items": items}))
    log, tables, reports = tmp_path / "log.csv", tmp_path / "tables.jsonl", tmp_path / "reports.jsonl"
    assert main(["simulate", "--spec", str(spec), "--emit", "log", "--out", str(log)]) == 0
    assert main(["sessionize", "--input", str(log), "--out", str(tables)]) == 0
    assert main(["fit", "--tables", str(tables), "--out", str(reports)]) == 0
    assert main(["report", "--reports", str(reports)]) == 0
    recs = {r["item_id"]: r for r in map(json.loads, reports.read_text().splitlines())}
    q_err = [abs(recs[it["item_id"]]["lsd_otb"]["q"] - it["q"]) for it in items]
    pi_err = [abs(recs[it["item_id"]]["lsd_otb"]["pi"] - it["otb_fraction"]) for it in items]

    # sessionizer fixtures
    out = tmp_path / "fixture.jsonl"
    main(["sessionize", "--input", str(DATA / "fixture_log.csv"), "--out", str(out)])
    golden = out.read_text() == (DATA / "fixture_tables.jsonl").read_text()
    boundary = len(build_sessions([UsageEvent(0.0, "u", "A"), UsageEvent(1200.0, "u", "A")])) == 2
    dedup = count_frequencies(build_sessions([UsageEvent(float(t), "u", "A") for t in range(0, 50, 10)]))["A"].counts == {1: 1}

    elapsed = time.perf_counter() - t0
    ok = np.mean(q_err) < 0.02 and np.mean(pi_err) < 0.03 and golden and boundary and dedup and elapsed < 30
    report(
        "5", ok,
        f"MAE(q)={np.mean(q_err):.4f} MAE(pi)={np.mean(pi_err):.4f} golden={golden} "
        f"boundary={boundary} dedup={dedup} in {elapsed:.1f}s",
    )
    assert ok
