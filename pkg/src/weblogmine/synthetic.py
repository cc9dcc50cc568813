"""Synthetic data with planted structure.

Two generators:

* :func:`planted_sessions` draws a session-by-page count matrix from a few
  browsing profiles. Every session of a user shares that user's randomly
  perturbed page intensities, so sessions that are close in intensity
  space are also likely to share a profile.
* :func:`generate_log` writes a combined-format access log whose genuine
  page views come from profile-driven users (Zipf page popularity,
  referrer chains, idle gaps between visits) and whose noise lines each
  trip exactly one cleaning rule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .feature_reduction import normalize_rows
from .fuzzy_clustering import NeighborGraph, neighbor_weights
from .log_ingest import COMBINED, LogEntry, format_log_entry
from .sessionizer import SessionMatrix, UserId, user_id

NOISE_KINDS = ("robots_txt", "robot_agent", "extension", "status")
GENUINE = "genuine"
SITE = "http://shop.example.com"


# ---------------------------------------------------------------------------
# planted session matrices


@dataclass
class PlantedSessions:
    counts: np.ndarray          # N x P visit counts
    truth: np.ndarray           # planted profile of every session, 1-based
    intensities: np.ndarray     # N x P Poisson rates the counts were drawn from
    users: np.ndarray           # user number of every session

    def matrix(self) -> SessionMatrix:
        labels, seen = [], {}
        for u in self.users.tolist():
            seen[u] = seen.get(u, 0) + 1
            labels.append((UserId(f"10.1.{u // 250}.{u % 250 + 1}"), seen[u]))
        return SessionMatrix(labels, [f"/p{j + 1:02d}.html" for j in range(self.counts.shape[1])],
                             self.counts)

    def intensity_graph(self, k: int = 5) -> NeighborGraph:
        """kNN graph of the sessions' row-normalized intensities."""
        return neighbor_weights(normalize_rows(self.intensities).values, k)


def profile_rates(n_profiles: int, n_pages: int, high: float, low: float,
                  width: int, stride: int) -> np.ndarray:
    rates = np.full((n_profiles, n_pages), float(low))
    for i in range(n_profiles):
        lo = i * stride
        if lo + width > n_pages:
            raise ValueError("profiles do not fit in the page catalog")
        rates[i, lo:lo + width] = high
    return rates


def planted_sessions(seed: int, sizes=(60, 60, 60), n_pages: int = 14, high: float = 2.0,
                     low: float = 0.7, width: int = 5, stride: int = 4,
                     sessions_per_user: int = 3, user_spread: float = 0.3) -> PlantedSessions:
    """Poisson visit counts from overlapping profiles.

    Profile ``i`` visits pages ``i*stride .. i*stride+width-1`` at rate
    ``high`` and every other page at rate ``low``. Each user multiplies the
    profile rates by independent log-normal factors with log-sd
    ``user_spread`` and contributes ``sessions_per_user`` sessions. A session
    drawn with no visit at all gets one visit to the page of its highest rate.
    """
    rng = np.random.default_rng(seed)
    rates = profile_rates(len(sizes), n_pages, high, low, width, stride)
    counts, truth, lam, users = [], [], [], []
    user = 0
    for i, n_i in enumerate(sizes):
        remaining = n_i
        while remaining > 0:
            m = min(sessions_per_user, remaining)
            r = rates[i] * np.exp(user_spread * rng.standard_normal(n_pages))
            rows = rng.poisson(r, size=(m, n_pages))
            empty = rows.sum(axis=1) == 0
            rows[empty, int(np.argmax(r))] = 1
            counts.append(rows)
            lam.append(np.tile(r, (m, 1)))
            truth += [i + 1] * m
            users += [user] * m
            user += 1
            remaining -= m
    return PlantedSessions(np.vstack(counts).astype(np.int64), np.array(truth),
                           np.vstack(lam), np.array(users))


# ---------------------------------------------------------------------------
# synthetic access logs

BROWSERS = (
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/120.0 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 13_5) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/16.6 Safari/605.1.15",
    "Mozilla/5.0 (X11; Linux x86_64; rv:121.0) Gecko/20100101 Firefox/121.0",
    "Mozilla/5.0 (iPhone; CPU iPhone OS 17_1 like Mac OS X) AppleWebKit/605.1.15 (KHTML, like Gecko) Mobile/15E148",
)
ROBOTS = (
    "Mozilla/5.0 (compatible; Googlebot/2.1; +http://www.google.com/bot.html)",
    "Mozilla/5.0 (compatible; bingbot/2.0; +http://www.bing.com/bingbot.htm)",
    "Mozilla/5.0 (compatible; Baiduspider/2.0; +http://www.baidu.com/search/spider.html)",
    "SiteAuditCrawler/1.3",
)
SEARCH_REFERRERS = ("", "https://www.google.com/search?q=furniture", "https://duckduckgo.com/?q=sofa")
ASSETS = ("/img/logo.gif", "/img/banner.jpg", "/img/item.png", "/css/site.css",
          "/js/app.js", "/favicon.ico")


@dataclass(frozen=True)
class LogConfig:
    n_lines: int = 1000
    n_noise: int = 300
    n_users: int = 45
    n_profiles: int = 3
    n_pages: int = 14
    zipf_exponent: float = 1.1
    preferred_share: float = 0.85
    session_length: tuple[int, int] = (3, 9)
    shared_ip_every: int = 6
    seed: int = 0
    start: datetime = datetime(2013, 5, 10, 8, 0, 0, tzinfo=timezone(timedelta(hours=5, minutes=30)))

    def __post_init__(self):
        if not 0 <= self.n_noise <= self.n_lines:
            raise ValueError("need 0 <= n_noise <= n_lines")
        if self.n_profiles < 1 or self.n_pages < self.n_profiles:
            raise ValueError("need at least one profile and a page per profile")
        lo, hi = self.session_length
        if not 1 <= lo <= hi:
            raise ValueError("invalid session_length range")


@dataclass
class LogRecord:
    entry: LogEntry
    kind: str
    user: str = ""
    profile: int = 0
    session: int = 0


@dataclass
class SyntheticLog:
    records: list[LogRecord] = field(default_factory=list)

    @property
    def lines(self) -> list[str]:
        return [format_log_entry(r.entry, COMBINED) for r in self.records]

    def kind_counts(self) -> dict[str, int]:
        out = {k: 0 for k in (GENUINE, *NOISE_KINDS)}
        for r in self.records:
            out[r.kind] += 1
        return out

    def write(self, log_path: str | Path, truth_path: str | Path | None = None) -> None:
        Path(log_path).write_text("".join(line + "\n" for line in self.lines), encoding="utf-8")
        if truth_path is not None:
            write_truth(self, truth_path)


def page_catalog(n_pages: int) -> list[str]:
    return ["/"] + [f"/catalog/item{j:02d}.html" for j in range(1, n_pages)]


def profile_page_weights(cfg: LogConfig) -> np.ndarray:
    """Page distribution of every profile.

    Each profile owns a contiguous block of pages ranked by Zipf popularity
    and carrying ``preferred_share`` of the mass; the rest is spread over
    the other pages, again Zipf by global rank.
    """
    P, c = cfg.n_pages, cfg.n_profiles
    zipf = 1.0 / np.arange(1, P + 1) ** cfg.zipf_exponent
    block = int(np.ceil(P / c))
    W = np.zeros((c, P))
    for i in range(c):
        own = np.arange(i * block, min(P, (i + 1) * block))
        other = np.setdiff1d(np.arange(P), own)
        w = np.zeros(P)
        w[own] = cfg.preferred_share * zipf[:own.size] / zipf[:own.size].sum()
        if other.size:
            w[other] = (1 - cfg.preferred_share) * zipf[other] / zipf[other].sum()
        W[i] = w / w.sum()
    return W


def _split_noise(n: int) -> dict[str, int]:
    shares = {"robots_txt": 0.15, "robot_agent": 0.25, "status": 0.20}
    out = {k: int(round(n * s)) for k, s in shares.items()}
    out["extension"] = n - sum(out.values())
    return {k: out[k] for k in NOISE_KINDS}


def generate_log(cfg: LogConfig | None = None) -> SyntheticLog:
    """Generate a log with exactly ``cfg.n_noise`` noise lines.

    Genuine lines are page views (``.html`` or ``/``) with status 200 or 304
    from browser agents that never fetch ``/robots.txt``; the cleaner keeps
    every one of them. Each noise line trips one rule:

    ``robots_txt``
        a browser-like client that fetches ``/robots.txt`` and a few pages;
    ``robot_agent``
        page views by crawler agents;
    ``extension``
        image, style and script fetches by genuine users;
    ``status``
        page views by genuine users answered with 403, 404 or 500.
    """
    cfg = cfg or LogConfig()
    rng = np.random.default_rng(cfg.seed)
    pages = page_catalog(cfg.n_pages)
    weights = profile_page_weights(cfg)
    n_genuine = cfg.n_lines - cfg.n_noise
    noise = _split_noise(cfg.n_noise)

    # users ------------------------------------------------------------
    users = []
    for u in range(cfg.n_users):
        # every few users share the previous user's address (NAT) with another agent
        share = cfg.shared_ip_every and u % cfg.shared_ip_every == cfg.shared_ip_every - 1
        ip = users[-1]["ip"] if share and users else f"10.0.{u // 200}.{u % 200 + 10}"
        agent = BROWSERS[u % len(BROWSERS)]
        if share and users and users[-1]["agent"] == agent:
            agent = BROWSERS[(u + 1) % len(BROWSERS)]
        users.append({"ip": ip, "agent": agent, "profile": u % cfg.n_profiles + 1,
                      "clock": cfg.start + timedelta(seconds=int(rng.integers(0, 4 * 3600))),
                      "sessions": 0})

    records: list[LogRecord] = []

    def emit(u, path, ref, ts, status=200, kind=GENUINE, session=0):
        size = None if status == 304 else int(rng.integers(200, 40000))
        entry = LogEntry(u["ip"], ts, "GET", path, status, size, ref, u["agent"], "HTTP/1.1")
        uid = str(user_id(entry)) if kind == GENUINE or "profile" in u else ""
        records.append(LogRecord(entry, kind, uid, u.get("profile", 0), session))

    # genuine sessions -----------------------------------------------------
    views = []                 # (user, path, ts) of genuine views, for attaching noise
    left = n_genuine
    turn = 0
    while left > 0:
        u = users[turn % len(users)]
        turn += 1
        length = min(left, int(rng.integers(cfg.session_length[0], cfg.session_length[1] + 1)))
        u["sessions"] += 1
        if u["sessions"] > 1:
            u["clock"] += timedelta(minutes=int(rng.integers(45, 240)))
        ref = SEARCH_REFERRERS[int(rng.integers(len(SEARCH_REFERRERS)))]
        w = weights[u["profile"] - 1]
        for _ in range(length):
            path = pages[int(rng.choice(len(pages), p=w))]
            status = 304 if rng.random() < 0.1 else 200
            emit(u, path, ref, u["clock"], status, GENUINE, u["sessions"])
            views.append((u, path, u["clock"]))
            ref = SITE + path
            u["clock"] += timedelta(seconds=int(rng.integers(5, 600)))
        left -= length

    # noise from genuine users ------------------------------------------------
    for _ in range(noise["extension"]):
        u, path, ts = views[int(rng.integers(len(views)))]
        asset = ASSETS[int(rng.integers(len(ASSETS)))]
        emit(u, asset, SITE + path, ts + timedelta(seconds=1), 200, "extension")
    for _ in range(noise["status"]):
        u, path, ts = views[int(rng.integers(len(views)))]
        bad = f"/catalog/missing{int(rng.integers(100)):02d}.html"
        emit(u, bad, SITE + path, ts + timedelta(seconds=2),
             int(rng.choice([403, 404, 404, 500])), "status")

    # crawlers -----------------------------------------------------------------
    span = max(1, int((max(r.entry.timestamp for r in records) - cfg.start).total_seconds())) \
        if records else 3600

    def crawler(ip, agent, n, kind, first=None):
        bot = {"ip": ip, "agent": agent}
        ts = cfg.start + timedelta(seconds=int(rng.integers(0, span)))
        for i in range(n):
            path = first if (first and i == 0) else pages[int(rng.integers(len(pages)))]
            emit(bot, path, "", ts, 200, kind)
            ts += timedelta(seconds=int(rng.integers(1, 30)))

    n = noise["robot_agent"]
    b = 0
    while n > 0:
        m = min(n, int(rng.integers(5, 15)))
        crawler(f"66.249.{64 + b // 200}.{b % 200 + 1}", ROBOTS[b % len(ROBOTS)], m, "robot_agent")
        n -= m
        b += 1
    n = noise["robots_txt"]
    b = 0
    while n > 0:
        m = min(n, int(rng.integers(3, 10)))
        crawler(f"203.0.113.{b + 1}", BROWSERS[b % len(BROWSERS)], m, "robots_txt", "/robots.txt")
        n -= m
        b += 1

    order = sorted(range(len(records)), key=lambda i: (records[i].entry.timestamp, i))
    log = SyntheticLog([records[i] for i in order])
    assert len(log.records) == cfg.n_lines
    assert log.kind_counts()[GENUINE] == n_genuine
    return log


TRUTH_HEADER = ["line", "kind", "user", "profile", "session"]


def write_truth(log: SyntheticLog, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for i, r in enumerate(log.records, start=1):
            w.writerow([i, r.kind, r.user, r.profile, r.session])


def read_truth(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["line"], r["profile"], r["session"] = int(r["line"]), int(r["profile"]), int(r["session"])
    return rows


def user_profiles(truth_rows: list[dict]) -> dict[str, int]:
    """Planted profile of every genuine user, keyed by ``str(UserId)``."""
    return {r["user"]: r["profile"] for r in truth_rows if r["kind"] == GENUINE}


DATA_DIR = Path(__file__).resolve().parent / "data"
BUNDLED_LOG = DATA_DIR / "synthetic_access.log"
BUNDLED_TRUTH = DATA_DIR / "synthetic_truth.csv"
