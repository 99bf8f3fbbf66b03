"""Command-line pipeline: sessionize, fit, report, curve, trend, simulate.

Stages exchange JSON-lines files. A frequency-table line looks like::

    {"item_id": "itemA", "period_id": "", "counts": {"1": 12, "3": 2}}

and ``fit`` writes one :class:`~repeatusage.report.ItemReport` per line.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from .diagnostics import trend_report, windowed_fits
from .estimation import MIN_USERS, FrequencyTable, FitMethod, ModelFit, ModelKind
from .distributions import LsdOtbParams, LsdParams
from .exceptions import LogFormatError
from .report import ItemReport, curve_rows, format_portfolio, item_report, portfolio_summary
from .sessionize import (
    DEFAULT_TIMEOUT,
    FilterStats,
    LogFormat,
    ParseStats,
    RobotFilter,
    build_sessions,
    count_frequencies,
    filter_robots,
    parse_log,
    parse_timestamp,
    write_log,
)
from .simulate import PopulationSpec, sample_counts, sample_events

__all__ = ["main", "build_parser"]


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


@contextmanager
def _open_out(path: str) -> Iterator:
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _read_lines(path: str) -> list[str]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", code=2) from exc


def _read_jsonl(path: str) -> list[dict]:
    out = []
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}:{lineno}: invalid JSON ({exc.msg})", code=2) from exc
    return out


def _write_jsonl(records, out) -> None:
    for rec in records:
        out.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def _load_tables(path: str) -> list[tuple[str, FrequencyTable]]:
    tables = []
    for rec in _read_jsonl(path):
        tables.append((str(rec["item_id"]), FrequencyTable.from_dict(rec)))
    tables.sort(key=lambda it: (it[0], it[1].period_id))
    return tables


def _robot_config(args) -> RobotFilter:
    if args.no_robot_filter:
        return RobotFilter.disabled()
    if args.robots_file:
        try:
            return RobotFilter.from_file(args.robots_file)
        except OSError as exc:
            raise CliError(f"cannot read {args.robots_file}: {exc.strerror or exc}", code=2) from exc
    return RobotFilter()


def _load_events(args):
    lines = _read_lines(args.input)
    fmt = LogFormat.named(args.format, header={"auto": None, "yes": True, "no": False}[args.header])
    pstats, fstats = ParseStats(), FilterStats()
    try:
        events = filter_robots(parse_log(lines, fmt, pstats), _robot_config(args), fstats)
    except LogFormatError as exc:
        raise CliError(f"{args.input}: {exc}", code=2) from exc
    return events, pstats, fstats


def _add_log_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="access log")
    p.add_argument("--format", choices=["csv", "tsv"], default="csv")
    p.add_argument("--header", choices=["auto", "yes", "no"], default="auto")
    p.add_argument("--timeout-secs", type=float, default=DEFAULT_TIMEOUT)
    p.add_argument("--robots-file", default=None, help="agent tokens, one per line")
    p.add_argument("--no-robot-filter", action="store_true")


def cmd_sessionize(args) -> int:
    events, pstats, fstats = _load_events(args)
    sessions = build_sessions(events, args.timeout_secs)
    period = None
    if args.period_start is not None or args.period_end is not None:
        lo = parse_timestamp(args.period_start) if args.period_start else float("-inf")
        hi = parse_timestamp(args.period_end) if args.period_end else float("inf")
        period = (lo, hi)
    tables = count_frequencies(sessions, period, args.period_id)
    with _open_out(args.out) as out:
        _write_jsonl(({"item_id": item, **t.to_dict()} for item, t in tables.items()), out)
    print(
        f"lines={pstats.lines} malformed={pstats.malformed} events={pstats.events} "
        f"robot_agent_dropped={fstats.dropped_agent} robot_rate_dropped={fstats.dropped_rate} "
        f"sessions={len(sessions)} items={len(tables)}",
        file=sys.stderr,
    )
    return 0


def cmd_fit(args) -> int:
    tables = _load_tables(args.tables)
    reports = [
        item_report(item, table, args.model, args.min_users, args.alpha, args.method).to_dict()
        for item, table in tables
    ]
    with _open_out(args.out) as out:
        _write_jsonl(reports, out)
    return 0


def cmd_report(args) -> int:
    reports = [ItemReport.from_dict(rec) for rec in _read_jsonl(args.reports)]
    print(format_portfolio(portfolio_summary(reports)))
    return 0


def _fit_from_block(block, kind: ModelKind, n_users: int) -> ModelFit | None:
    if block is None or block.q is None:
        return None
    params = LsdParams(block.q) if kind is ModelKind.LSD else LsdOtbParams(block.q, block.pi or 0.0)
    method = FitMethod(block.method) if block.method else FitMethod.MEAN_MATCH
    return ModelFit(kind, params, block.loglik or 0.0, n_users, bool(block.converged), 0, method)


def cmd_curve(args) -> int:
    matches = [t for item, t in _load_tables(args.tables) if item == args.item]
    if not matches:
        raise CliError(f"item {args.item!r} not found in {args.tables}")
    table = matches[0]
    if args.fit:
        reps = [ItemReport.from_dict(r) for r in _read_jsonl(args.fit) if r["item_id"] == args.item]
        if not reps:
            raise CliError(f"item {args.item!r} not found in {args.fit}")
        rep = reps[0]
    else:
        rep = item_report(args.item, table, "both", args.min_users)
    lsd = _fit_from_block(rep.lsd, ModelKind.LSD, table.n_users)
    otb = _fit_from_block(rep.lsd_otb, ModelKind.LSD_OTB, table.n_users)
    rows = curve_rows(table, lsd, otb, args.max_r)
    with _open_out(args.out) as out:
        writer = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else (f"{v:.6f}" if isinstance(v, float) else v)) for k, v in row.items()})
    return 0


def cmd_trend(args) -> int:
    events, _, _ = _load_events(args)
    fits = windowed_fits(
        events,
        n_windows=args.windows,
        mode=args.window_mode,
        timeout=args.timeout_secs,
        min_users=args.min_users,
        method=args.method,
    )
    try:
        reports = trend_report(fits, args.q_threshold, args.pi_threshold)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    with _open_out(args.out) as out:
        _write_jsonl((r.to_dict() for r in reports.values()), out)
    return 0


def _load_spec(text: str) -> list[tuple[str, PopulationSpec]]:
    path = Path(text)
    try:
        payload = json.loads(path.read_text(encoding="utf-8")) if path.exists() else json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"invalid --spec: {exc.msg}", code=2) from exc
    entries = payload.get("items", [payload]) if isinstance(payload, dict) else payload
    specs = []
    for i, entry in enumerate(entries):
        entry = dict(entry)
        item = str(entry.pop("item_id", f"item{i:03d}"))
        if "q" in entry:
            q = entry.pop("q")
            specs.append((item, PopulationSpec.for_lsd(q, **entry)))
        else:
            specs.append((item, PopulationSpec(**entry)))
    return specs


def cmd_simulate(args) -> int:
    specs = _load_spec(args.spec)
    with _open_out(args.out) as out:
        if args.emit == "tables":
            _write_jsonl(({"item_id": item, **sample_counts(s).to_dict()} for item, s in specs), out)
        else:
            start = parse_timestamp(args.start)
            events = []
            for item, s in specs:
                events.extend(sample_events(s, item, start, timeout=int(args.timeout_secs)))
            events.sort(key=lambda e: (e.timestamp, e.user_key, e.item_id))
            write_log(events, out, delimiter="\t" if args.format == "tsv" else ",")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repeatusage", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sessionize", help="access log -> per-item frequency tables")
    _add_log_args(p)
    p.add_argument("--period-start", default=None)
    p.add_argument("--period-end", default=None)
    p.add_argument("--period-id", default="")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sessionize)

    p = sub.add_parser("fit", help="fit LSD and LSD/OTB models, chi-square test each item")
    p.add_argument("--tables", required=True)
    p.add_argument("--model", choices=["lsd", "lsd-otb", "both"], default="both")
    p.add_argument("--method", choices=["em", "direct"], default="em")
    p.add_argument("--min-users", type=int, default=MIN_USERS)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="portfolio summary of item reports")
    p.add_argument("--reports", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("curve", help="observed vs expected frequencies for one item")
    p.add_argument("--tables", required=True)
    p.add_argument("--item", required=True)
    p.add_argument("--fit", default=None, help="reports file from `fit`; refits when omitted")
    p.add_argument("--max-r", type=int, default=30)
    p.add_argument("--min-users", type=int, default=MIN_USERS)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("trend", help="LSD/OTB parameters per time window")
    _add_log_args(p)
    p.add_argument("--windows", type=int, default=4)
    p.add_argument("--window-mode", choices=["auto", "equal", "quarters"], default="auto")
    p.add_argument("--method", choices=["em", "direct"], default="em")
    p.add_argument("--min-users", type=int, default=MIN_USERS)
    p.add_argument("--q-threshold", type=float, default=0.2)
    p.add_argument("--pi-threshold", type=float, default=0.2)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_trend)

    p = sub.add_parser("simulate", help="synthetic tables or access logs")
    p.add_argument("--spec", required=True, help="JSON object, list, or file path")
    p.add_argument("--emit", choices=["tables", "log"], default="tables")
    p.add_argument("--start", default="2001-01-01T00:00:00Z")
    p.add_argument("--timeout-secs", type=float, default=DEFAULT_TIMEOUT)
    p.add_argument("--format", choices=["csv", "tsv"], default="csv")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"repeatusage {args.command}: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
