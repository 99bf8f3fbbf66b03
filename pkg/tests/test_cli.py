import csv
import json
from pathlib import Path

import numpy as np
import pytest

from repeatusage.cli import main
from repeatusage.report import ItemReport, ModelReport

DATA = Path(__file__).parent / "data"
FIXTURE_LOG = DATA / "fixture_log.csv"
GOLDEN_TABLES = DATA / "fixture_tables.jsonl"


def run(*argv):
    return main([str(a) for a in argv])


def read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def portfolio_spec(n_items=50, n_users=5000):
    grid = [(q, pi) for q in (0.7, 0.9) for pi in (0.2, 0.5)]
    items = []
    for i in range(n_items):
        q, pi = grid[i % len(grid)]
        items.append({"item_id": f"item{i:02d}", "q": q, "otb_fraction": pi, "n_users": n_users, "seed": 1000 + i})
    return {"items": items}


def write_reports(path, lsd_counts, otb_counts):
    """Reports whose statuses reproduce the given per-model tallies."""
    statuses = ("no_q", "no_test", "non_significant", "significant")
    lsd = [s for s, n in zip(statuses, lsd_counts) for _ in range(n)]
    otb = [s for s, n in zip(statuses, otb_counts) for _ in range(n)]
    with open(path, "w") as fh:
        for i, (a, b) in enumerate(zip(lsd, otb)):
            rep = ItemReport(f"i{i}", "", 20, 30, ModelReport(a), ModelReport(b))
            fh.write(json.dumps(rep.to_dict()) + "\n")


class TestSessionize:
    def test_golden(self, tmp_path, capsys):
        out = tmp_path / "tables.jsonl"
        assert run("sessionize", "--input", FIXTURE_LOG, "--out", out) == 0
        assert out.read_text() == GOLDEN_TABLES.read_text()
        err = capsys.readouterr().err
        assert "lines=12 malformed=2 events=10 robot_agent_dropped=1" in err
        assert "sessions=6 items=2" in err

    def test_shorter_timeout_more_sessions(self, tmp_path, capsys):
        out = tmp_path / "t.jsonl"
        assert run("sessionize", "--input", FIXTURE_LOG, "--timeout-secs", 1, "--out", out) == 0
        assert "sessions=9" in capsys.readouterr().err
        assert read_jsonl(out)[0]["counts"] == {"2": 1, "4": 1}

    def test_robot_filter_off(self, tmp_path):
        out = tmp_path / "t.jsonl"
        run("sessionize", "--input", FIXTURE_LOG, "--no-robot-filter", "--out", out)
        assert read_jsonl(out)[0]["counts"] == {"1": 1, "2": 1, "3": 1}

    def test_robots_file(self, tmp_path):
        robots = tmp_path / "robots.txt"
        robots.write_text("u3-agent-never-seen\n")
        out = tmp_path / "t.jsonl"
        run("sessionize", "--input", FIXTURE_LOG, "--robots-file", robots, "--out", out)
        assert read_jsonl(out)[0]["counts"] == {"1": 1, "2": 1, "3": 1}

    def test_period_filter(self, tmp_path):
        out = tmp_path / "t.jsonl"
        run(
            "sessionize", "--input", FIXTURE_LOG, "--period-start", "2001-03-02T00:00:00Z",
            "--period-id", "day2", "--out", out,
        )
        assert read_jsonl(out) == [{"counts": {"1": 1}, "item_id": "A", "period_id": "day2"}]

    def test_tsv(self, tmp_path):
        log = tmp_path / "log.tsv"
        log.write_text(FIXTURE_LOG.read_text().replace(",", "\t"))
        out = tmp_path / "t.jsonl"
        run("sessionize", "--input", log, "--format", "tsv", "--out", out)
        assert out.read_text() == GOLDEN_TABLES.read_text()

    def test_missing_file(self, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        assert run("sessionize", "--input", missing) == 2
        assert str(missing) in capsys.readouterr().err

    def test_inconsistent_header(self, tmp_path, capsys):
        log = tmp_path / "bad.csv"
        log.write_text("timestamp,user_key\n10,u1\n")
        assert run("sessionize", "--input", log) == 2
        assert "item_id" in capsys.readouterr().err


@pytest.fixture(scope="module")
def portfolio(tmp_path_factory):
    d = tmp_path_factory.mktemp("portfolio")
    spec = d / "spec.json"
    spec.write_text(json.dumps(portfolio_spec()))
    tables, reports = d / "tables.jsonl", d / "reports.jsonl"
    assert run("simulate", "--spec", spec, "--out", tables) == 0
    assert run("fit", "--tables", tables, "--out", reports) == 0
    return spec, tables, reports


class TestFit:
    def test_recovery(self, portfolio):
        spec, _, reports = portfolio
        truth = {it["item_id"]: (it["q"], it["otb_fraction"]) for it in json.loads(spec.read_text())["items"]}
        recs = read_jsonl(reports)
        assert [r["item_id"] for r in recs] == sorted(truth)
        q_err = [abs(r["lsd_otb"]["q"] - truth[r["item_id"]][0]) for r in recs]
        pi_err = [abs(r["lsd_otb"]["pi"] - truth[r["item_id"]][1]) for r in recs]
        assert np.mean(q_err) < 0.02 and np.mean(pi_err) < 0.03

    def test_nesting(self, portfolio):
        for r in read_jsonl(portfolio[2]):
            assert r["lsd_otb"]["loglik"] >= r["lsd"]["loglik"] - 1e-9
            assert r["lsd"]["pi"] is None

    def test_below_min_users(self, tmp_path):
        tables = tmp_path / "t.jsonl"
        tables.write_text('{"item_id": "small", "period_id": "", "counts": {"1": 5, "2": 3}}\n')
        out = tmp_path / "r.jsonl"
        assert run("fit", "--tables", tables, "--out", out) == 0
        (rec,) = read_jsonl(out)
        assert rec["lsd"]["status"] == rec["lsd_otb"]["status"] == "no_q"
        assert rec["flags"]["no_q"] and rec["diagnostics"] is None

    def test_batch_isolation(self, tmp_path, portfolio):
        _, tables, _ = portfolio
        lines = tables.read_text().splitlines()
        mixed = tmp_path / "mixed.jsonl"
        mixed.write_text("\n".join(lines[:3] + ['{"item_id": "item00a", "counts": {"1": 500}}']) + "\n")
        alone, together = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        (tmp_path / "three.jsonl").write_text("\n".join(lines[:3]) + "\n")
        run("fit", "--tables", tmp_path / "three.jsonl", "--out", alone)
        run("fit", "--tables", mixed, "--out", together)
        kept = [r for r in read_jsonl(together) if r["item_id"] != "item00a"]
        assert kept == read_jsonl(alone)

    def test_single_model(self, tmp_path, portfolio):
        out = tmp_path / "r.jsonl"
        run("fit", "--tables", portfolio[1], "--model", "lsd", "--out", out)
        assert all(r["lsd_otb"] is None for r in read_jsonl(out))

    def test_direct_method(self, tmp_path, portfolio):
        out = tmp_path / "r.jsonl"
        lines = portfolio[1].read_text().splitlines()[:4]
        (tmp_path / "t.jsonl").write_text("\n".join(lines) + "\n")
        run("fit", "--tables", tmp_path / "t.jsonl", "--method", "direct", "--out", out)
        em = {r["item_id"]: r for r in read_jsonl(portfolio[2])}
        for r in read_jsonl(out):
            assert r["lsd_otb"]["method"] == "direct"
            assert abs(r["lsd_otb"]["q"] - em[r["item_id"]]["lsd_otb"]["q"]) < 1e-3

    def test_deterministic(self, tmp_path, portfolio):
        out = tmp_path / "again.jsonl"
        run("fit", "--tables", portfolio[1], "--out", out)
        assert out.read_bytes() == portfolio[2].read_bytes()


class TestReport:
    def test_reference_tallies(self, tmp_path, capsys):
        path = tmp_path / "r.jsonl"
        write_reports(path, (713, 786, 475, 252), (834, 838, 516, 38))
        assert run("report", "--reports", path) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[1].split("\t") == ["LSD", "2226", "713", "786", "475", "252", "65.34%"]
        assert lines[2].split("\t") == ["LSD/OTB", "2226", "834", "838", "516", "38", "93.14%"]

    def test_empty(self, tmp_path, capsys):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert run("report", "--reports", path) == 0
        rows = [line.split("\t") for line in capsys.readouterr().out.splitlines()[1:]]
        assert rows == [["LSD", "0", "0", "0", "0", "0", "–"], ["LSD/OTB", "0", "0", "0", "0", "0", "–"]]

    def test_portfolio(self, portfolio, capsys):
        run("report", "--reports", portfolio[2])
        otb = capsys.readouterr().out.splitlines()[2].split("\t")
        assert otb[1] == "50" and otb[2] == "0"


class TestCurve:
    @pytest.fixture
    def otb_item(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"item_id": "lib", "q": 0.954, "otb_fraction": 0.39, "n_users": 3000, "seed": 5}))
        tables = tmp_path / "t.jsonl"
        run("simulate", "--spec", spec, "--out", tables)
        return tables

    def read_csv(self, path):
        with open(path) as fh:
            return list(csv.DictReader(fh))

    def test_max_r_and_sums(self, tmp_path, otb_item):
        out = tmp_path / "curve.csv"
        assert run("curve", "--tables", otb_item, "--item", "lib", "--max-r", 5, "--out", out) == 0
        rows = self.read_csv(out)
        assert [r["r"] for r in rows] == ["1", "2", "3", "4", "5", ">5"]
        n = read_jsonl(otb_item)[0]["counts"]
        n = sum(n.values())
        assert sum(int(r["observed"]) for r in rows) == n
        for col in ("expected_lsd", "expected_lsd_otb"):
            assert sum(float(r[col]) for r in rows) == pytest.approx(n, abs=1e-3 * len(rows))
        assert float(rows[0]["expected_lsd_otb"]) >= float(rows[0]["expected_lsd"])

    def test_display_truncation_only(self, tmp_path, otb_item):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run("curve", "--tables", otb_item, "--item", "lib", "--max-r", 5, "--out", a)
        run("curve", "--tables", otb_item, "--item", "lib", "--max-r", 30, "--out", b)
        assert self.read_csv(a)[:5] == self.read_csv(b)[:5]

    def test_from_fit_file(self, tmp_path, otb_item):
        reports = tmp_path / "r.jsonl"
        run("fit", "--tables", otb_item, "--out", reports)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run("curve", "--tables", otb_item, "--item", "lib", "--fit", reports, "--out", a)
        run("curve", "--tables", otb_item, "--item", "lib", "--out", b)
        assert a.read_text() == b.read_text()

    def test_unknown_item(self, otb_item, capsys):
        assert run("curve", "--tables", otb_item, "--item", "nope") == 1
        assert "nope" in capsys.readouterr().err


class TestTrendAndSimulate:
    def test_trend_quarters(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"item_id": "x", "q": 0.8, "otb_fraction": 0.3, "n_users": 4000, "seed": 2}))
        log, out = tmp_path / "log.csv", tmp_path / "trend.jsonl"
        assert run("simulate", "--spec", spec, "--emit", "log", "--out", log) == 0
        assert run("trend", "--input", log, "--out", out) == 0
        (rec,) = read_jsonl(out)
        assert [r["window"] for r in rec["rows"]] == ["2001Q1", "2001Q2", "2001Q3", "2001Q4"]
        assert all(r["q"] is not None for r in rec["rows"])
        assert not rec["nonstationary"]

    def test_trend_single_window(self, tmp_path, capsys):
        assert run("trend", "--input", FIXTURE_LOG, "--windows", 1) == 1
        assert "2 windows" in capsys.readouterr().err

    def test_log_round_trip(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps([
            {"item_id": "a", "q": 0.8, "otb_fraction": 0.3, "n_users": 300, "seed": 1},
            {"item_id": "b", "n_users": 200, "gamma_shape": 0.5, "mean_rate": 1.0, "seed": 2},
        ]))
        tables, log, again = tmp_path / "t.jsonl", tmp_path / "log.csv", tmp_path / "t2.jsonl"
        run("simulate", "--spec", spec, "--out", tables)
        run("simulate", "--spec", spec, "--emit", "log", "--out", log)
        run("sessionize", "--input", log, "--out", again)
        assert again.read_text() == tables.read_text()

    def test_inline_spec_deterministic(self, tmp_path):
        spec = '{"item_id": "z", "q": 0.7, "n_users": 500, "seed": 3}'
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run("simulate", "--spec", spec, "--emit", "log", "--format", "tsv", "--out", a)
        run("simulate", "--spec", spec, "--emit", "log", "--format", "tsv", "--out", b)
        assert a.read_bytes() == b.read_bytes() and "\t" in a.read_text()

    def test_bad_spec(self, capsys):
        assert run("simulate", "--spec", "{not json") == 2


class TestGoldenReport:
    def test_fit_matches_documented_report(self, tmp_path):
        out = tmp_path / "r.jsonl"
        run("fit", "--tables", DATA / "golden_item_table.jsonl", "--out", out)
        (got,), (want,) = read_jsonl(out), read_jsonl(DATA / "golden_item_report.jsonl")
        assert got.keys() == want.keys()
        for block in ("lsd", "lsd_otb"):
            for key, value in want[block].items():
                if isinstance(value, float):
                    assert got[block][key] == pytest.approx(value, rel=1e-8), (block, key)
                else:
                    assert got[block][key] == value, (block, key)
        assert ItemReport.from_dict(got).lsd_otb.status == "non_significant"
