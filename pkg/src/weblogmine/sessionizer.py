"""User identification, session reconstruction and the session matrix.

A user is an ``(ip, agent hash)`` pair, or the IP alone when agent
splitting is switched off. Each user's clickstream is cut into sessions
either by inactivity timeout or by following the referrer chain; the
sessions then become rows of a visit-count matrix whose columns are pages.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence
from urllib.parse import urlsplit

import numpy as np

from .log_ingest import LogEntry

TIME_ORIENTED = "time_oriented"
NAVIGATION_ORIENTED = "navigation_oriented"


class UserId(NamedTuple):
    ip: str
    agent_hash: str = ""

    def __str__(self) -> str:
        return f"{self.ip}|{self.agent_hash}" if self.agent_hash else self.ip

    @classmethod
    def parse(cls, text: str) -> "UserId":
        ip, _, agent_hash = text.partition("|")
        return cls(ip, agent_hash)


def agent_hash(user_agent: str) -> str:
    """Stable short digest of a user-agent string."""
    return hashlib.sha1(user_agent.encode("utf-8")).hexdigest()[:12]


def user_id(entry: LogEntry, by_agent: bool = True) -> UserId:
    return UserId(entry.client_ip, agent_hash(entry.user_agent) if by_agent else "")


def identify_users(entries: Iterable[LogEntry], by_agent: bool = True
                   ) -> dict[UserId, list[LogEntry]]:
    """Group entries by user; each user's stream is stably time-sorted.

    Users appear in the returned dict in order of first appearance.
    """
    users: dict[UserId, list[LogEntry]] = {}
    for entry in entries:
        users.setdefault(user_id(entry, by_agent), []).append(entry)
    for stream in users.values():
        stream.sort(key=lambda e: e.timestamp)
    return users


@dataclass(frozen=True)
class SessionPolicy:
    mode: str = NAVIGATION_ORIENTED
    timeout: timedelta = timedelta(minutes=30)
    hard_cap: timedelta = timedelta(hours=24)

    def __post_init__(self):
        if self.mode not in (TIME_ORIENTED, NAVIGATION_ORIENTED):
            raise ValueError(f"unknown session mode {self.mode!r}")
        if not timedelta(0) < self.timeout <= self.hard_cap:
            raise ValueError("need 0 < timeout <= hard_cap")


@dataclass
class Session:
    user: UserId
    index: int
    visits: list[tuple[str, datetime]] = field(default_factory=list)

    @property
    def start(self) -> datetime:
        return self.visits[0][1]

    @property
    def end(self) -> datetime:
        return self.visits[-1][1]

    @property
    def pages(self) -> list[str]:
        return [page for page, _ in self.visits]


def referrer_page(referrer: str) -> str:
    """Path of a referrer URL, or "" when there is none."""
    if not referrer:
        return ""
    return urlsplit(referrer).path or "/"


def build_sessions(user_entries: Sequence[LogEntry], policy: SessionPolicy | None = None,
                   user: UserId | None = None) -> list[Session]:
    """Split one user's time-sorted entries into sessions.

    A new session starts when

    * the gap since the previous entry exceeds ``policy.timeout``;
    * the session would grow longer than ``policy.hard_cap``;
    * (navigation mode) the entry has a referrer that is not a page of the
      current session.
    """
    policy = policy or SessionPolicy()
    if not user_entries:
        return []
    if user is None:
        user = user_id(user_entries[0])

    sessions: list[Session] = []
    current: Session | None = None
    seen: set[str] = set()
    last: datetime | None = None
    for entry in user_entries:
        ts = entry.timestamp
        split = current is None
        if not split:
            if ts - last > policy.timeout or ts - current.start > policy.hard_cap:
                split = True
            elif policy.mode == NAVIGATION_ORIENTED:
                ref = referrer_page(entry.referrer)
                split = bool(ref) and ref not in seen
        if split:
            current = Session(user, len(sessions) + 1)
            sessions.append(current)
            seen = set()
        current.visits.append((entry.path, ts))
        seen.add(entry.path)
        last = ts
    return sessions


def sessionize(users: dict[UserId, list[LogEntry]], policy: SessionPolicy | None = None
               ) -> list[Session]:
    """Sessions of every user, in ``(UserId, index)`` order."""
    out = []
    for uid in sorted(users):
        out.extend(build_sessions(users[uid], policy, uid))
    return out


@dataclass
class SessionMatrix:
    """Visit counts, one row per (user, session) and one column per page."""

    row_labels: list[tuple[UserId, int]]
    pages: list[str]
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (len(self.row_labels), len(self.pages)):
            raise ValueError(f"counts shape {self.counts.shape} does not match "
                             f"{len(self.row_labels)} rows x {len(self.pages)} pages")
        if len(set(self.pages)) != len(self.pages):
            raise ValueError("duplicate page in catalog")

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def page_index(self) -> dict[str, int]:
        return {p: j for j, p in enumerate(self.pages)}

    def to_rows(self) -> list[list[str]]:
        rows = [["user", "session", *self.pages]]
        for (uid, idx), counts in zip(self.row_labels, self.counts):
            rows.append([str(uid), str(idx), *map(str, counts.tolist())])
        return rows

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.to_rows())

    @classmethod
    def read_csv(cls, path: str | Path) -> "SessionMatrix":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            return cls([], [], np.zeros((0, 0), dtype=np.int64))
        header, body = rows[0], rows[1:]
        if header[:2] != ["user", "session"]:
            raise ValueError(f"{path}: header must start with user,session")
        pages = header[2:]
        labels = [(UserId.parse(r[0]), int(r[1])) for r in body]
        counts = np.array([[int(v) for v in r[2:]] for r in body], dtype=np.int64)
        return cls(labels, pages, counts.reshape(len(body), len(pages)))


def build_matrix(sessions: Sequence[Session]) -> SessionMatrix:
    """Count visits per page for every session.

    Rows follow ``(UserId, index)`` order; columns follow the order in which
    pages are first seen walking those rows.
    """
    ordered = sorted(sessions, key=lambda s: (s.user, s.index))
    catalog: dict[str, int] = {}
    for s in ordered:
        for page in s.pages:
            catalog.setdefault(page, len(catalog))
    counts = np.zeros((len(ordered), len(catalog)), dtype=np.int64)
    for r, s in enumerate(ordered):
        for page in s.pages:
            counts[r, catalog[page]] += 1
    return SessionMatrix([(s.user, s.index) for s in ordered], list(catalog), counts)
