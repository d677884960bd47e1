"""Display-side session state: connected phones, player-id claims, events.

The claim rule on join: no player id means unlimited anonymous
connections; an unclaimed player id is claimed by the joiner; a claimed
one is rejected when the joiner asked firstConnected (the default), or
evicts the previous holder when firstConnected is false. hello is the
only admission path — frames from unknown peers are dropped and
counted, never auto-registered.

All mutations go through one logical owner; resilience contract for
dispatch_frame: malformed or out-of-order input degrades to counters,
never raises.
"""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field

from . import controllers
from .controllers import ControllerError, ControllerState
from .protocol import (BYE, HELLO, STAT_CLASS, STAT_PING, STAT_PONG, USER,
                       USER_CLASS, Envelope, JoinParams, kind_class)
from .telemetry import PingEstimator, RateMeter

DEFAULT_IDLE_TIMEOUT_MS = 5000

EV_CONNECTED = "connected"
EV_REJECTED = "rejected"
EV_REPLACED = "replaced"
EV_DATA = "data"
EV_DISCONNECTED = "disconnected"

ACCEPT = "accept"
REJECT = "reject"
REPLACE = "replace"


class RegistryError(Exception):
    pass


class DuplicatePeer(RegistryError):
    pass


class UnknownPeer(RegistryError):
    pass


@dataclass(frozen=True)
class LifecycleEvent:
    kind: str
    peer_id: str
    player_id: str | None
    t_ms: float


@dataclass(frozen=True)
class ClaimDecision:
    action: str
    old_peer_id: str | None = None


@dataclass
class RegistryEntry:
    peer_id: str
    player_id: str | None
    controller: ControllerState
    connected_at: float
    last_seen: float
    ping: PingEstimator = field(default_factory=PingEstimator)
    rates: RateMeter = field(default_factory=RateMeter)
    # Last seq seen from this phone, per class; -1 before the first frame.
    last_seq: dict = field(default_factory=lambda: {USER_CLASS: -1, STAT_CLASS: -1})
    frames: Counter = field(default_factory=Counter)
    seq_violations: int = 0
    ping_seq: int = 0  # display-side stat seq toward this phone


@dataclass(frozen=True)
class SnapshotRow:
    peer_id: str
    player_id: str | None
    controller: dict
    ping_ms: float | None
    user_rate_hz: float
    stat_rate_hz: float


_issued_session_ids: set[str] = set()


def new_session(rng_seed: int | None = None) -> str:
    """Fresh 9-digit session id; seeded generation is reproducible and
    skips the process-local collision check."""
    if rng_seed is not None:
        rng = random.Random(rng_seed)
        sid = "".join(rng.choices("0123456789", k=9))
        _issued_session_ids.add(sid)
        return sid
    while True:
        sid = "".join(random.choices("0123456789", k=9))
        if sid not in _issued_session_ids:
            _issued_session_ids.add(sid)
            return sid


class Registry:
    """Connected phones for one session, keyed by peer id.

    The display application picks the controller kind it serves; hello
    payloads carry no kind (the page the QR points at decides it).
    """

    def __init__(self, session_id: str, controller_kind: str = controllers.NES,
                 idle_timeout_ms: int = DEFAULT_IDLE_TIMEOUT_MS):
        if controller_kind not in controllers.KINDS:
            raise controllers.UnknownKind(controller_kind)
        self.session_id = session_id
        self.controller_kind = controller_kind
        self.idle_timeout_ms = idle_timeout_ms
        self.entries: dict[str, RegistryEntry] = {}
        self.claims: dict[str, str] = {}
        self.event_log: list[LifecycleEvent] = []
        self.dropped_frames = 0
        self.drop_reasons: Counter = Counter()
        self._now_hint = 0.0

    # -- lifecycle ---------------------------------------------------------

    def handle_join(self, peer_id: str, params: JoinParams, now: float) -> ClaimDecision:
        if peer_id in self.entries:
            raise DuplicatePeer(peer_id)
        player_id = params.player_id
        if player_id is None:
            self._admit(peer_id, None, now)
            return ClaimDecision(ACCEPT)
        holder = self.claims.get(player_id)
        if holder is None:
            self._admit(peer_id, player_id, now)
            return ClaimDecision(ACCEPT)
        if params.first_connected:
            self._log(EV_REJECTED, peer_id, player_id, now)
            return ClaimDecision(REJECT, old_peer_id=holder)
        self.handle_close(holder, now)
        self._admit(peer_id, player_id, now)
        self._log(EV_REPLACED, peer_id, player_id, now)
        return ClaimDecision(REPLACE, old_peer_id=holder)

    def _admit(self, peer_id: str, player_id: str | None, now: float) -> None:
        controller = controllers.create_controller(self.controller_kind, peer_id, player_id)
        self.entries[peer_id] = RegistryEntry(
            peer_id=peer_id, player_id=player_id, controller=controller,
            connected_at=now, last_seen=now)
        if player_id is not None:
            self.claims[player_id] = peer_id
        self._log(EV_CONNECTED, peer_id, player_id, now)

    def handle_close(self, peer_id: str, now: float) -> LifecycleEvent:
        entry = self.entries.pop(peer_id, None)
        if entry is None:
            raise UnknownPeer(peer_id)
        if entry.player_id is not None and self.claims.get(entry.player_id) == peer_id:
            del self.claims[entry.player_id]
        return self._log(EV_DISCONNECTED, peer_id, entry.player_id, now)

    def sweep_idle(self, now: float, idle_timeout_ms: int | None = None) -> list[str]:
        """Close peers silent longer than the idle timeout."""
        timeout = self.idle_timeout_ms if idle_timeout_ms is None else idle_timeout_ms
        stale = [p for p, e in self.entries.items() if now - e.last_seen > timeout]
        for peer_id in stale:
            self.handle_close(peer_id, now)
        return stale

    # -- frame intake ------------------------------------------------------

    def dispatch_frame(self, env: Envelope, now: float) -> list[LifecycleEvent]:
        """Apply one decoded envelope; returns the events it produced."""
        self._now_hint = max(self._now_hint, now)
        mark = len(self.event_log)
        if env.kind == HELLO:
            self._on_hello(env, now)
        elif env.peer_id not in self.entries:
            self._drop("unknown-peer")
        else:
            entry = self.entries[env.peer_id]
            entry.last_seen = now
            if env.kind == USER:
                self._on_user(entry, env, now)
            elif env.kind == STAT_PONG:
                self._on_pong(entry, env, now)
            elif env.kind == BYE:
                self.handle_close(env.peer_id, now)
            else:  # a stat_ping has no business arriving at the display
                self._drop("unexpected-kind")
        return self.event_log[mark:]

    def _on_hello(self, env: Envelope, now: float) -> None:
        if env.peer_id in self.entries:
            self._drop("duplicate-hello")
            return
        fc = env.payload.get("fc", True)
        try:
            params = JoinParams(session_id=self.session_id, player_id=env.player_id,
                                first_connected=bool(fc))
        except ValueError:
            self._drop("malformed-hello")
            return
        self.handle_join(env.peer_id, params, now)

    def _on_user(self, entry: RegistryEntry, env: Envelope, now: float) -> None:
        self._audit_seq(entry, env)
        entry.rates.record(USER_CLASS, now)
        entry.frames["user"] += 1
        try:
            entry.controller = controllers.apply_user_payload(entry.controller, env.payload)
        except ControllerError:
            self._drop("malformed-payload")
            return
        self._log(EV_DATA, env.peer_id, entry.player_id, now)

    def _on_pong(self, entry: RegistryEntry, env: Envelope, now: float) -> None:
        self._audit_seq(entry, env)
        entry.rates.record(STAT_CLASS, now)
        entry.frames["stat"] += 1
        token = env.payload.get("tok")
        if isinstance(token, int):
            entry.ping.pong(token, now)
        else:
            self._drop("malformed-payload")

    def _audit_seq(self, entry: RegistryEntry, env: Envelope) -> None:
        cls = kind_class(env.kind)
        if env.seq <= entry.last_seq[cls]:
            entry.seq_violations += 1
            self.drop_reasons["seq-regression"] += 1
        entry.last_seq[cls] = max(entry.last_seq[cls], env.seq)

    def _drop(self, reason: str) -> None:
        self.dropped_frames += 1
        self.drop_reasons[reason] += 1

    # -- outbound + views --------------------------------------------------

    def make_ping(self, peer_id: str, now: float) -> Envelope:
        """Mint the next stat ping for one phone; the estimator keeps the
        sent timestamp, the payload carries it only for the echo check."""
        entry = self.entries[peer_id]
        token = entry.ping.send(now)
        seq = entry.ping_seq
        entry.ping_seq += 1
        return Envelope(kind=STAT_PING, peer_id=peer_id, seq=seq, t_ms=int(now),
                        payload={"tok": token, "t0": now})

    def make_reject_bye(self, peer_id: str, now: float, reason: str = "player-id-taken") -> Envelope:
        """Bye for a phone whose join was rejected, so its UI can say why."""
        return Envelope(kind=BYE, peer_id=peer_id, seq=0, t_ms=int(now),
                        payload={"reason": reason})

    def snapshot(self, now: float | None = None) -> list[SnapshotRow]:
        """Point-in-time view of all connected phones, oldest first."""
        if now is None:
            now = self._now_hint
        rows = []
        for entry in sorted(self.entries.values(), key=lambda e: e.connected_at):
            c = entry.controller
            c.ping_ms = entry.ping.ping_ms
            c.user_rate_hz = entry.rates.value(USER_CLASS, now)
            c.stat_rate_hz = entry.rates.value(STAT_CLASS, now)
            rows.append(SnapshotRow(
                peer_id=entry.peer_id, player_id=entry.player_id,
                controller=controllers.summarize(c), ping_ms=c.ping_ms,
                user_rate_hz=c.user_rate_hz, stat_rate_hz=c.stat_rate_hz))
        return rows

    def _log(self, kind: str, peer_id: str, player_id: str | None, now: float) -> LifecycleEvent:
        event = LifecycleEvent(kind=kind, peer_id=peer_id, player_id=player_id, t_ms=now)
        self.event_log.append(event)
        return event
