"""Access log parsing and noise removal.

Handles the two NCSA formats written by Apache/nginx style servers::

    common:   %h %l %u %t "%r" %>s %b
    combined: %h %l %u %t "%r" %>s %b "%{Referer}i" "%{User-agent}i"

Parsing is a pure per-line function. A malformed line produces a
:class:`LogParseError` carrying its line number instead of aborting the
stream, so ``len(entries) + len(errors)`` always equals the number of lines
read.
"""

from __future__ import annotations

import ipaddress
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence
from urllib.parse import urlsplit

COMMON = "common"
COMBINED = "combined"
DIALECTS = (COMMON, COMBINED)

_MONTHS = {
    "Jan": 1, "Feb": 2, "Mar": 3, "Apr": 4, "May": 5, "Jun": 6,
    "Jul": 7, "Aug": 8, "Sep": 9, "Oct": 10, "Nov": 11, "Dec": 12,
}
_MONTH_NAMES = {v: k for k, v in _MONTHS.items()}

_QUOTED = r'"((?:[^"\\]|\\.)*)"'
_COMMON_RE = re.compile(
    r"^(?P<host>\S+) (?P<ident>\S+) (?P<authuser>\S+) "
    r"\[(?P<time>[^\]]+)\] "
    + _QUOTED.replace("(", "(?P<request>", 1)
    + r" (?P<status>\d{3}) (?P<bytes>\d+|-)"
)
_COMBINED_RE = re.compile(
    _COMMON_RE.pattern
    + " " + _QUOTED.replace("(", "(?P<referrer>", 1)
    + " " + _QUOTED.replace("(", "(?P<agent>", 1)
    + r"\s*$"
)
_COMMON_FULL_RE = re.compile(_COMMON_RE.pattern + r"\s*$")
_TIME_RE = re.compile(
    r"^(\d{2})/([A-Z][a-z]{2})/(\d{4}):(\d{2}):(\d{2}):(\d{2}) ([+-])(\d{2})(\d{2})$"
)


class LogParseError(ValueError):
    """A single log line could not be parsed.

    The error is recoverable: readers collect it and keep going.
    """

    def __init__(self, message: str, lineno: int | None = None, line: str = ""):
        self.message = message
        self.lineno = lineno
        self.line = line
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class LogEntry:
    """One parsed access-log record.

    ``referrer`` and ``user_agent`` are empty strings when the log does not
    carry them (common dialect) or records them as ``-``. ``bytes`` is None
    when the server logged ``-``.
    """

    client_ip: str
    timestamp: datetime
    method: str
    uri: str
    status: int
    bytes: int | None = None
    referrer: str = ""
    user_agent: str = ""
    protocol: str = ""
    ident: str = "-"
    authuser: str = "-"

    @property
    def path(self) -> str:
        """Path component of the request URI, query string removed."""
        return urlsplit(self.uri).path or self.uri


def parse_timestamp(text: str) -> datetime:
    """Parse the bracketed ``10/May/2013:13:55:36 +0530`` form."""
    m = _TIME_RE.match(text.strip())
    if m is None or m.group(2) not in _MONTHS:
        raise LogParseError(f"bad timestamp {text!r}")
    day, mon, year, hh, mm, ss, sign, oh, om = m.groups()
    offset = timedelta(hours=int(oh), minutes=int(om))
    if sign == "-":
        offset = -offset
    try:
        return datetime(int(year), _MONTHS[mon], int(day), int(hh), int(mm),
                        int(ss), tzinfo=timezone(offset))
    except ValueError as exc:
        raise LogParseError(f"bad timestamp {text!r}: {exc}") from None


def format_timestamp(ts: datetime) -> str:
    offset = ts.utcoffset() or timedelta(0)
    minutes = int(offset.total_seconds()) // 60
    sign = "-" if minutes < 0 else "+"
    minutes = abs(minutes)
    return (f"{ts.day:02d}/{_MONTH_NAMES[ts.month]}/{ts.year:04d}:"
            f"{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d} "
            f"{sign}{minutes // 60:02d}{minutes % 60:02d}")


def _unescape(text: str) -> str:
    return text.replace('\\"', '"').replace("\\\\", "\\")


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _dash_to_empty(text: str) -> str:
    return "" if text == "-" else text


def detect_dialect(lines: Iterable[str]) -> str:
    """Probe the first non-empty line; fall back to the common format."""
    for line in lines:
        if line.strip():
            return COMBINED if _COMBINED_RE.match(line.rstrip("\r\n")) else COMMON
    return COMMON


def parse_log_line(line: str, dialect: str = COMBINED,
                   lineno: int | None = None) -> LogEntry:
    """Parse one log record.

    Parameters
    ----------
    line : str
        A complete record, with or without its trailing newline.
    dialect : {'common', 'combined'}
        ``combined`` requires the referrer and agent fields. ``common``
        accepts a line that carries them and simply keeps them.
    lineno : int, optional
        Attached to any :class:`LogParseError` raised.

    Raises
    ------
    LogParseError
        The line is not a valid record in the requested dialect.
    """
    if dialect not in DIALECTS:
        raise ValueError(f"unknown dialect {dialect!r}")
    text = line.rstrip("\r\n")
    if not text.strip():
        raise LogParseError("empty line", lineno, line)

    m = _COMBINED_RE.match(text)
    if m is None:
        if dialect == COMBINED:
            raise LogParseError("not a combined-format record", lineno, line)
        m = _COMMON_FULL_RE.match(text)
        if m is None:
            raise LogParseError("not a common-format record", lineno, line)
    groups = m.groupdict()

    host = groups["host"]
    try:
        ipaddress.ip_address(host)
    except ValueError:
        raise LogParseError(f"client field {host!r} is not an IP address",
                            lineno, line) from None

    try:
        timestamp = parse_timestamp(groups["time"])
    except LogParseError as exc:
        raise LogParseError(exc.message, lineno, line) from None

    request = _unescape(groups["request"]).split()
    if len(request) == 3:
        method, uri, protocol = request
    elif len(request) == 2:
        method, uri = request
        protocol = ""
    else:
        raise LogParseError(f"malformed request {groups['request']!r}", lineno, line)
    if not uri:
        raise LogParseError("empty request uri", lineno, line)

    status = int(groups["status"])
    if not 100 <= status <= 599:
        raise LogParseError(f"status {status} out of range", lineno, line)
    nbytes = None if groups["bytes"] == "-" else int(groups["bytes"])

    return LogEntry(
        client_ip=host,
        timestamp=timestamp,
        method=method,
        uri=uri,
        status=status,
        bytes=nbytes,
        referrer=_dash_to_empty(_unescape(groups.get("referrer") or "")),
        user_agent=_dash_to_empty(_unescape(groups.get("agent") or "")),
        protocol=protocol,
        ident=groups["ident"],
        authuser=groups["authuser"],
    )


def format_log_entry(entry: LogEntry, dialect: str = COMBINED) -> str:
    """Serialize an entry back to a single log line (no newline)."""
    request = " ".join(p for p in (entry.method, entry.uri, entry.protocol) if p)
    nbytes = "-" if entry.bytes is None else str(entry.bytes)
    line = (f"{entry.client_ip} {entry.ident} {entry.authuser} "
            f"[{format_timestamp(entry.timestamp)}] \"{_escape(request)}\" "
            f"{entry.status} {nbytes}")
    if dialect == COMBINED:
        line += (f" \"{_escape(entry.referrer) or '-'}\""
                 f" \"{_escape(entry.user_agent) or '-'}\"")
    return line


def parse_lines(lines: Iterable[str], dialect: str | None = None,
                start: int = 1) -> tuple[list[LogEntry], list[LogParseError]]:
    """Parse a stream of lines, collecting errors instead of raising.

    ``dialect=None`` auto-detects from the first non-empty line.
    """
    lines = list(lines)
    if dialect is None:
        dialect = detect_dialect(lines)
    entries: list[LogEntry] = []
    errors: list[LogParseError] = []
    for lineno, line in enumerate(lines, start=start):
        try:
            entries.append(parse_log_line(line, dialect, lineno))
        except LogParseError as exc:
            errors.append(exc)
    return entries, errors


def read_log_lines(path: str | Path) -> list[str]:
    """Read a log file decoding each line as UTF-8, falling back to Latin-1."""
    out = []
    with open(path, "rb") as fh:
        for raw in fh:
            try:
                out.append(raw.decode("utf-8"))
            except UnicodeDecodeError:
                out.append(raw.decode("latin-1"))
    return out


def read_log_file(path: str | Path, dialect: str | None = None
                  ) -> tuple[list[LogEntry], list[LogParseError], str]:
    """Parse a whole file. Returns ``(entries, errors, dialect_used)``."""
    lines = read_log_lines(path)
    if dialect is None:
        dialect = detect_dialect(lines)
    entries, errors = parse_lines(lines, dialect)
    return entries, errors, dialect


def write_log_file(path: str | Path, entries: Iterable[LogEntry],
                   dialect: str = COMBINED) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in entries:
            fh.write(format_log_entry(entry, dialect) + "\n")


# ---------------------------------------------------------------------------
# cleaning

DEFAULT_BLOCKED_EXTENSIONS = frozenset({
    "gif", "jpg", "jpeg", "png", "bmp", "ico", "svg", "webp", "tif", "tiff",
    "css", "js", "swf", "flv", "mp4", "avi", "mov", "wmv", "mpg", "mpeg",
    "woff", "woff2", "ttf",
})
DEFAULT_ROBOT_MARKERS = frozenset({"bot", "crawler", "spider"})

# Fixed evaluation order; a removed entry is charged to the first rule it trips.
RULES = ("robots_txt", "robot_agent", "extension", "status")


def success_or_redirect(status: int) -> bool:
    return 200 <= status < 400


@dataclass(frozen=True)
class CleaningRules:
    """Configuration of the noise filters applied by :func:`clean`."""

    blocked_extensions: frozenset[str] = DEFAULT_BLOCKED_EXTENSIONS
    allowed_status: Callable[[int], bool] = success_or_redirect
    robot_agent_markers: frozenset[str] = DEFAULT_ROBOT_MARKERS
    robots_txt_trigger: bool = True

    def __post_init__(self):
        object.__setattr__(self, "blocked_extensions",
                           frozenset(e.lower().lstrip(".") for e in self.blocked_extensions))
        object.__setattr__(self, "robot_agent_markers",
                           frozenset(m.lower() for m in self.robot_agent_markers))


@dataclass
class CleaningReport:
    input_count: int = 0
    retained_count: int = 0
    removed_by_rule: dict[str, int] = field(default_factory=lambda: dict.fromkeys(RULES, 0))

    @property
    def removed_count(self) -> int:
        return sum(self.removed_by_rule.values())

    def balanced(self) -> bool:
        return self.input_count == self.retained_count + self.removed_count

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "retained_count": self.retained_count,
            "removed_count": self.removed_count,
            "removed_by_rule": dict(self.removed_by_rule),
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CleaningReport":
        return cls(d["input_count"], d["retained_count"], dict(d["removed_by_rule"]))


def _extension(path: str) -> str:
    name = path.rsplit("/", 1)[-1]
    if "." not in name:
        return ""
    return name.rsplit(".", 1)[-1].lower()


def _client_key(entry: LogEntry) -> tuple[str, str]:
    return entry.client_ip, entry.user_agent


def removal_rule(entry: LogEntry, rules: CleaningRules,
                 robots_clients: set[tuple[str, str]] = frozenset()) -> str | None:
    """Name of the first rule that removes ``entry``, or None to keep it."""
    if rules.robots_txt_trigger and _client_key(entry) in robots_clients:
        return "robots_txt"
    agent = entry.user_agent.lower()
    if any(marker in agent for marker in rules.robot_agent_markers):
        return "robot_agent"
    if _extension(entry.path) in rules.blocked_extensions:
        return "extension"
    if not rules.allowed_status(entry.status):
        return "status"
    return None


def clean(entries: Sequence[LogEntry], rules: CleaningRules | None = None
          ) -> tuple[list[LogEntry], CleaningReport]:
    """Drop image/media requests, failed requests and robot traffic.

    A client (IP plus user agent) that fetched ``/robots.txt`` anywhere in
    the input is treated as a robot for all of its entries. Relative order of
    the retained entries is preserved.
    """
    rules = rules or CleaningRules()
    robots_clients: set[tuple[str, str]] = set()
    if rules.robots_txt_trigger:
        robots_clients = {_client_key(e) for e in entries
                          if e.path.lower() == "/robots.txt"}

    report = CleaningReport(input_count=len(entries))
    kept = []
    for entry in entries:
        rule = removal_rule(entry, rules, robots_clients)
        if rule is None:
            kept.append(entry)
        else:
            report.removed_by_rule[rule] += 1
    report.retained_count = len(kept)
    assert report.balanced()
    return kept, report


def iter_chunks(lines: Sequence[str], size: int) -> Iterator[tuple[int, Sequence[str]]]:
    """Yield ``(first_lineno, chunk)`` pairs for parallel parsing of a file."""
    for i in range(0, len(lines), size):
        yield i + 1, lines[i:i + size]
