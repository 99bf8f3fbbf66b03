"""Turn access-log lines into sessions and per-item frequency tables.

A session is a run of one user's events with no gap of ``timeout`` seconds
or more. Within a session an item counts once, so an item's ``f_r`` is the
number of users who touched it in exactly ``r`` sessions.
"""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

from .estimation import FrequencyTable
from .exceptions import LogFormatError

__all__ = [
    "DEFAULT_TIMEOUT",
    "DEFAULT_AGENT_TOKENS",
    "UsageEvent",
    "Session",
    "LogFormat",
    "ParseStats",
    "RobotFilter",
    "FilterStats",
    "parse_timestamp",
    "parse_log",
    "filter_robots",
    "build_sessions",
    "count_frequencies",
    "write_log",
]

DEFAULT_TIMEOUT = 1200

DEFAULT_AGENT_TOKENS = (
    "bot",
    "crawler",
    "spider",
    "slurp",
    "archiver",
    "wget",
    "curl",
    "python-requests",
    "libwww",
    "httrack",
)

_ALIASES = {
    "timestamp": "timestamp",
    "time": "timestamp",
    "ts": "timestamp",
    "user_key": "user_key",
    "user": "user_key",
    "cookie": "cookie",
    "cookie_id": "cookie",
    "client": "client",
    "client_address": "client",
    "ip": "client",
    "item_id": "item_id",
    "item": "item_id",
    "user_agent": "user_agent",
    "agent": "user_agent",
}


@dataclass(frozen=True, order=True)
class UsageEvent:
    timestamp: float
    user_key: str
    item_id: str
    user_agent: str | None = None

    def __post_init__(self):
        if not self.timestamp >= 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp!r}")
        if not self.user_key:
            raise ValueError("user_key must be non-empty")
        if not self.item_id:
            raise ValueError("item_id must be non-empty")


@dataclass(frozen=True)
class Session:
    user_key: str
    start: float
    end: float
    item_ids: frozenset[str]


@dataclass(frozen=True)
class LogFormat:
    """Column layout of a delimiter-separated access log.

    ``header=None`` detects a header from the first line. Without a header the
    ``columns`` tuple is used; trailing optional columns may be missing.
    The user is identified by ``user_key``, or else by ``cookie`` falling back
    to ``client`` when those columns are given instead.
    """

    delimiter: str = ","
    header: bool | None = None
    columns: tuple[str, ...] = ("timestamp", "user_key", "item_id", "user_agent")

    @classmethod
    def named(cls, name: str, **kwargs) -> LogFormat:
        delims = {"csv": ",", "tsv": "\t"}
        if name not in delims:
            raise LogFormatError(f"unknown log format {name!r}")
        return cls(delimiter=delims[name], **kwargs)


def _resolve_columns(names: Iterable[str]) -> dict[str, int]:
    index: dict[str, int] = {}
    for i, raw in enumerate(names):
        name = _ALIASES.get(raw.strip().lower())
        if name is None:
            continue
        if name in index:
            raise LogFormatError(f"column {name!r} appears twice")
        index[name] = i
    missing = [c for c in ("timestamp", "item_id") if c not in index]
    if missing:
        raise LogFormatError(f"missing required column(s): {', '.join(missing)}")
    if not {"user_key", "cookie", "client"} & index.keys():
        raise LogFormatError("no user column: need user_key, cookie or client")
    return index


@dataclass
class ParseStats:
    lines: int = 0
    events: int = 0
    malformed: int = 0
    header: bool = False


def parse_timestamp(text: str) -> float:
    """Epoch seconds from an integer/float epoch or an ISO-8601 string.

    ISO strings without an offset are taken as UTC.
    """
    text = text.strip()
    try:
        value = float(text)
    except ValueError:
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        value = dt.timestamp()
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"timestamp out of range: {text!r}")
    return value


def parse_log(
    lines: Iterable[str],
    fmt: LogFormat | None = None,
    stats: ParseStats | None = None,
) -> Iterator[UsageEvent]:
    """Yield events in input order, skipping and counting malformed lines.

    Raises
    ------
    LogFormatError
        If the header or ``fmt.columns`` lacks a required column.
    """
    fmt = fmt or LogFormat()
    stats = stats if stats is not None else ParseStats()
    index = _resolve_columns(fmt.columns) if fmt.header is False else None
    first = True
    for row in csv.reader(lines, delimiter=fmt.delimiter):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if first:
            first = False
            looks_like_header = row[0].strip().lower() in _ALIASES
            if fmt.header or (fmt.header is None and looks_like_header):
                index = _resolve_columns(row)
                stats.header = True
                continue
            if index is None:
                index = _resolve_columns(fmt.columns)
        stats.lines += 1
        event = _row_to_event(row, index)
        if event is None:
            stats.malformed += 1
            continue
        stats.events += 1
        yield event


def _field(row: list[str], index: dict[str, int], name: str) -> str:
    i = index.get(name)
    if i is None or i >= len(row):
        return ""
    return row[i].strip()


def _row_to_event(row: list[str], index: dict[str, int]) -> UsageEvent | None:
    # required columns must be physically present even if blank-checked later
    needed = [index["timestamp"], index["item_id"]]
    needed += [index[c] for c in ("user_key", "cookie", "client") if c in index][:1]
    if len(row) <= max(needed):
        return None
    user = _field(row, index, "user_key") or _field(row, index, "cookie") or _field(row, index, "client")
    item = _field(row, index, "item_id")
    if not user or not item:
        return None
    try:
        ts = parse_timestamp(row[index["timestamp"]])
    except ValueError:
        return None
    agent = _field(row, index, "user_agent") or None
    return UsageEvent(ts, user, item, agent)


@dataclass(frozen=True)
class RobotFilter:
    """Drop crawler traffic by user-agent substring and by request rate.

    An event is dropped when its user agent contains any of ``agent_tokens``
    (case-insensitive). A user is dropped entirely when more than
    ``max_events_per_hour`` of its remaining events fall into one clock hour.
    """

    agent_tokens: tuple[str, ...] = DEFAULT_AGENT_TOKENS
    max_events_per_hour: int | None = None

    @classmethod
    def disabled(cls) -> RobotFilter:
        return cls(agent_tokens=(), max_events_per_hour=None)

    @classmethod
    def from_file(cls, path: str | Path) -> RobotFilter:
        """Read one agent token per line.

        Blank lines and ``#`` comments are skipped; a line
        ``max-events-per-hour: N`` sets the rate cap.
        """
        tokens: list[str] = []
        cap = None
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition(":")
            if sep and key.strip().lower() == "max-events-per-hour":
                cap = int(value)
            else:
                tokens.append(line)
        return cls(agent_tokens=tuple(tokens), max_events_per_hour=cap)


@dataclass
class FilterStats:
    dropped_agent: int = 0
    dropped_rate: int = 0
    dropped_users: set[str] = field(default_factory=set)

    @property
    def dropped(self) -> int:
        return self.dropped_agent + self.dropped_rate


def filter_robots(
    events: Iterable[UsageEvent],
    config: RobotFilter | None = None,
    stats: FilterStats | None = None,
) -> list[UsageEvent]:
    config = config if config is not None else RobotFilter()
    stats = stats if stats is not None else FilterStats()
    tokens = [t.lower() for t in config.agent_tokens if t]

    kept = []
    for ev in events:
        agent = (ev.user_agent or "").lower()
        if tokens and agent and any(t in agent for t in tokens):
            stats.dropped_agent += 1
            continue
        kept.append(ev)

    cap = config.max_events_per_hour
    if cap is None:
        return kept
    per_hour = Counter((ev.user_key, int(ev.timestamp // 3600)) for ev in kept)
    heavy = {user for (user, _), n in per_hour.items() if n > cap}
    if not heavy:
        return kept
    stats.dropped_users |= heavy
    out = [ev for ev in kept if ev.user_key not in heavy]
    stats.dropped_rate += len(kept) - len(out)
    return out


def build_sessions(events: Iterable[UsageEvent], timeout: float = DEFAULT_TIMEOUT) -> list[Session]:
    """Group each user's events into sessions.

    A gap of ``timeout`` seconds or more starts a new session. The result is
    ordered by ``(user_key, start)`` whatever the input order.
    """
    by_user: dict[str, list[UsageEvent]] = defaultdict(list)
    for ev in events:
        by_user[ev.user_key].append(ev)

    sessions = []
    for user in sorted(by_user):
        evs = sorted(by_user[user], key=lambda e: (e.timestamp, e.item_id))
        start = prev = evs[0].timestamp
        items = {evs[0].item_id}
        for ev in evs[1:]:
            if ev.timestamp - prev >= timeout:
                sessions.append(Session(user, start, prev, frozenset(items)))
                start, items = ev.timestamp, set()
            items.add(ev.item_id)
            prev = ev.timestamp
        sessions.append(Session(user, start, prev, frozenset(items)))
    return sessions


def count_frequencies(
    sessions: Iterable[Session],
    period: tuple[float, float] | None = None,
    period_id: str = "",
) -> dict[str, FrequencyTable]:
    """Per-item frequency tables from sessions starting in ``[start, end)``."""
    per_item_user: Counter[tuple[str, str]] = Counter()
    for s in sessions:
        if period is not None and not period[0] <= s.start < period[1]:
            continue
        for item in s.item_ids:
            per_item_user[item, s.user_key] += 1

    rows: dict[str, Counter[int]] = defaultdict(Counter)
    for (item, _), r in per_item_user.items():
        rows[item][r] += 1
    return {item: FrequencyTable(dict(rows[item]), period_id) for item in sorted(rows)}


def write_log(events: Iterable[UsageEvent], out, delimiter: str = ",", header: bool = True) -> int:
    """Write events in the layout :func:`parse_log` reads; returns the row count."""
    writer = csv.writer(out, delimiter=delimiter, lineterminator="\n")
    if header:
        writer.writerow(["timestamp", "user_key", "item_id", "user_agent"])
    n = 0
    for ev in events:
        ts = int(ev.timestamp) if float(ev.timestamp).is_integer() else repr(float(ev.timestamp))
        writer.writerow([ts, ev.user_key, ev.item_id, ev.user_agent or ""])
        n += 1
    return n
