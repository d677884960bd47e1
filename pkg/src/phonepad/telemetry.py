"""Outbound throttling and connection measurement: ping, message rates, CSV.

All time values are injected milliseconds; nothing here reads a clock,
so the same code runs under the simulator's virtual clock and under
wall time. Ping is a round trip (send to matching pong), never a
one-way delta, so no clock synchronization between peers is assumed.
Stat traffic bypasses the throttle: user rate and stat rate are
reported as distinct quantities.
"""
from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass

from .protocol import STAT_CLASS, USER_CLASS

DEFAULT_PING_INTERVAL_MS = 500
DEFAULT_RATE_WINDOW_MS = 1000
LOST_PING_AFTER_MS = 10_000

CSV_HEADER = "t_ms,peer_id,player_id,ping_ms,user_rate_hz,stat_rate_hz"
_CSV_COLUMNS = CSV_HEADER.split(",")


class ClockWentBackwards(ValueError):
    pass


class Throttle:
    """Minimum-interval limiter that drops, never queues.

    Messages offered less than ``min_interval_ms`` after the last
    forwarded one are discarded outright; delaying them would add the
    latency the limiter exists to avoid.
    """

    def __init__(self, min_interval_ms: int = 0):
        if min_interval_ms < 0:
            raise ValueError("min_interval_ms must be >= 0")
        self.min_interval_ms = min_interval_ms
        self.last_forward_t: float | None = None

    def offer(self, t_ms: float) -> bool:
        """True to forward the message at t_ms, False to drop it."""
        if self.last_forward_t is None:
            self.last_forward_t = t_ms
            return True
        if t_ms < self.last_forward_t:
            raise ClockWentBackwards(f"{t_ms} < {self.last_forward_t}")
        if t_ms - self.last_forward_t >= self.min_interval_ms:
            self.last_forward_t = t_ms
            return True
        return False


class PingEstimator:
    """Round-trip tracker: send() stamps a token, pong() resolves it.

    ping_ms is the most recent completed round trip. Tokens outstanding
    longer than ``lost_after_ms`` are garbage-collected as lost.
    """

    def __init__(self, interval_ms: int = DEFAULT_PING_INTERVAL_MS,
                 lost_after_ms: int = LOST_PING_AFTER_MS):
        self.interval_ms = interval_ms
        self.lost_after_ms = lost_after_ms
        self.outstanding: dict[int, float] = {}
        self.ping_ms: float | None = None
        self.unknown_tokens = 0
        self.lost = 0
        self._next_token = 0

    def send(self, now: float) -> int:
        self._gc(now)
        token = self._next_token
        self._next_token += 1
        self.outstanding[token] = now
        return token

    def pong(self, token: int, now: float) -> float | None:
        self._gc(now)
        sent = self.outstanding.pop(token, None)
        if sent is None:
            self.unknown_tokens += 1
            return self.ping_ms
        self.ping_ms = now - sent
        return self.ping_ms

    def _gc(self, now: float) -> None:
        stale = [t for t, sent in self.outstanding.items()
                 if now - sent > self.lost_after_ms]
        for t in stale:
            del self.outstanding[t]
        self.lost += len(stale)


class RateMeter:
    """Sliding-window message counter, kept separately per class.

    value(cls, now) is the number of recorded events in
    (now - window_ms, now], scaled to hertz.
    """

    def __init__(self, window_ms: int = DEFAULT_RATE_WINDOW_MS):
        if window_ms <= 0:
            raise ValueError("window_ms must be > 0")
        self.window_ms = window_ms
        self._events: dict[str, deque] = {USER_CLASS: deque(), STAT_CLASS: deque()}

    def record(self, cls: str, t_ms: float) -> None:
        dq = self._events[cls]
        if dq and t_ms < dq[-1]:
            raise ClockWentBackwards(f"{t_ms} < {dq[-1]}")
        dq.append(t_ms)
        self._evict(dq, t_ms)

    def value(self, cls: str, now: float) -> float:
        dq = self._events[cls]
        self._evict(dq, now)
        count = sum(1 for t in dq if t <= now)
        return count * 1000.0 / self.window_ms

    def _evict(self, dq: deque, now: float) -> None:
        cutoff = now - self.window_ms
        while dq and dq[0] <= cutoff:
            dq.popleft()


@dataclass(frozen=True)
class StatsSample:
    """One telemetry row for one peer at one sample tick."""

    t_ms: float
    peer_id: str
    player_id: str | None
    ping_ms: float | None
    user_rate_hz: float
    stat_rate_hz: float


def _fmt_num(value: float) -> str:
    value = float(value)
    return str(int(value)) if value.is_integer() else repr(value)


def export_csv(samples: list[StatsSample]) -> str:
    """Samples as CSV: fixed header, rows in time order, rates at 2 dp,
    absent optionals empty, RFC-4180 quoting."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for s in sorted(samples, key=lambda s: s.t_ms):
        writer.writerow([
            _fmt_num(s.t_ms),
            s.peer_id,
            s.player_id if s.player_id is not None else "",
            _fmt_num(s.ping_ms) if s.ping_ms is not None else "",
            f"{s.user_rate_hz:.2f}",
            f"{s.stat_rate_hz:.2f}",
        ])
    return out.getvalue()


def parse_csv(text: str) -> list[StatsSample]:
    """Inverse of export_csv. Raises ValueError on a malformed document."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != _CSV_COLUMNS:
        raise ValueError(f"bad CSV header: {rows[0] if rows else 'empty file'!r}")
    samples = []
    for row in rows[1:]:
        if not row:
            continue
        if len(row) != len(_CSV_COLUMNS):
            raise ValueError(f"bad CSV row: {row!r}")
        t_ms, peer_id, player_id, ping_ms, user_rate, stat_rate = row
        samples.append(StatsSample(
            t_ms=float(t_ms),
            peer_id=peer_id,
            player_id=player_id or None,
            ping_ms=float(ping_ms) if ping_ms else None,
            user_rate_hz=float(user_rate),
            stat_rate_hz=float(stat_rate),
        ))
    return samples
