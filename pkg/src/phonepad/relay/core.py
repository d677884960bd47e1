"""Room-based frame relay, independent of any transport.

A display opens a room by sending hello with its session id as the peer
id and ``{"role": "display"}`` as payload; the relay acks with the join
URL parameters. A phone's hello names the room in its payload
(``{"sid": ...}``) and is forwarded to the display verbatim — the relay
is policy-free, all player-id claim decisions live in the display's
registry. After admission, phone frames go to the display and
display frames go to the single phone named by their peer-id field.
A display frame addressed to its own session id is a keepalive and is
swallowed (a phoneless display would otherwise look idle).

Transports plug in as connection handles exposing send_text/close; the
engine is synchronous and must be driven from one logical thread (the
asyncio server serializes naturally, tests drive it directly).
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

from ..protocol import (BYE, HELLO, Envelope, ProtocolError, decode_envelope,
                        encode_envelope)

logger = logging.getLogger(__name__)

DEFAULT_IDLE_TIMEOUT_MS = 5000
RELAY_PEER_ID = "relay"

ROLE_DISPLAY = "display"
ROLE_PHONE = "phone"


class RelayError(Exception):
    pass


class DuplicateSession(RelayError):
    pass


class NoSuchRoom(RelayError):
    pass


class DuplicatePeerId(RelayError):
    pass


class UnknownTarget(RelayError):
    pass


@dataclass
class Room:
    session_id: str
    display: object
    phones: dict = field(default_factory=dict)  # peer_id -> conn
    created_at: float = 0.0


@dataclass
class _ConnState:
    role: str | None = None
    room_id: str | None = None
    peer_id: str | None = None
    last_activity: float = 0.0


class RelayCore:
    def __init__(self, idle_timeout_ms: int = DEFAULT_IDLE_TIMEOUT_MS):
        self.idle_timeout_ms = idle_timeout_ms
        self.rooms: dict[str, Room] = {}
        self.counters: Counter = Counter()
        self._conns: dict[object, _ConnState] = {}

    # -- connection lifecycle ------------------------------------------------

    def on_open(self, conn, now: float) -> None:
        self._conns[conn] = _ConnState(last_activity=now)

    def on_close(self, conn, now: float) -> None:
        """Transport closed underneath us; clean up whatever it was."""
        st = self._conns.pop(conn, None)
        if st is None:
            return
        if st.role == ROLE_DISPLAY:
            self._teardown_room(st.room_id, now, reason="display-gone")
        elif st.role == ROLE_PHONE:
            self._detach_phone(st.room_id, st.peer_id, now,
                               notify_display=True, reason="connection-closed")

    def sweep_disconnects(self, now: float) -> list[tuple[str, str | None]]:
        """Close connections idle beyond the timeout; returns (role, peer)."""
        closed = []
        for conn, st in list(self._conns.items()):
            if conn not in self._conns:  # removed by an earlier teardown
                continue
            if now - st.last_activity <= self.idle_timeout_ms:
                continue
            closed.append((st.role or "pending", st.peer_id))
            self.counters["idle_closed"] += 1
            if st.role == ROLE_DISPLAY:
                self._conns.pop(conn, None)
                self._teardown_room(st.room_id, now, reason="display-idle")
                self._safe_close(conn)
            elif st.role == ROLE_PHONE:
                self._conns.pop(conn, None)
                self._detach_phone(st.room_id, st.peer_id, now,
                                   notify_display=True, reason="idle-timeout")
                self._safe_close(conn)
            else:
                self._conns.pop(conn, None)
                self._safe_close(conn)
        return closed

    # -- frame intake ----------------------------------------------------------

    def on_frame(self, conn, frame: str, now: float) -> None:
        """Route one raw frame; errors degrade to counters, never raise."""
        st = self._conns.get(conn)
        if st is None:
            self.counters["frame_after_close"] += 1
            return
        st.last_activity = now
        try:
            env = decode_envelope(frame)
        except ProtocolError as exc:
            self.counters["decode_error"] += 1
            logger.debug("dropping undecodable frame: %s", exc)
            return
        try:
            if st.role is None:
                self._admit(conn, st, env, now)
            elif st.role == ROLE_DISPLAY:
                self._from_display(conn, st, env, frame, now)
            else:
                self._from_phone(conn, st, env, frame, now)
        except DuplicateSession:
            self.counters["duplicate_session"] += 1
            self._send_bye(conn, env.peer_id, now, "duplicate-session")
            self._drop_conn(conn)
        except NoSuchRoom:
            self.counters["no_such_room"] += 1
            self._send_bye(conn, env.peer_id, now, "no-such-room")
            self._drop_conn(conn)
        except DuplicatePeerId:
            self.counters["duplicate_peer"] += 1
            self._send_bye(conn, env.peer_id, now, "duplicate-peer")
            self._drop_conn(conn)
        except UnknownTarget:
            self.counters["unknown_target"] += 1

    def _admit(self, conn, st: _ConnState, env: Envelope, now: float) -> None:
        if env.kind != HELLO:
            self.counters["frame_before_hello"] += 1
            return
        if env.payload.get("role") == ROLE_DISPLAY:
            self.open_room(conn, env, now)
        else:
            self.join_room(conn, env, now)

    # -- the spec-level operations ----------------------------------------------

    def open_room(self, conn, hello: Envelope, now: float) -> Room:
        session_id = hello.peer_id
        if session_id in self.rooms:
            raise DuplicateSession(session_id)
        room = Room(session_id=session_id, display=conn, created_at=now)
        self.rooms[session_id] = room
        st = self._conns[conn]
        st.role, st.room_id, st.peer_id = ROLE_DISPLAY, session_id, session_id
        ack = Envelope(kind=HELLO, peer_id=RELAY_PEER_ID, seq=0, t_ms=int(now),
                       payload={"id": session_id})
        conn.send_text(encode_envelope(ack))
        return room

    def join_room(self, conn, hello: Envelope, now: float) -> Room:
        session_id = hello.payload.get("sid")
        room = self.rooms.get(session_id) if isinstance(session_id, str) else None
        if room is None:
            raise NoSuchRoom(session_id)
        if hello.peer_id in room.phones:
            # A fresh transport connection must present a fresh peer id.
            raise DuplicatePeerId(hello.peer_id)
        room.phones[hello.peer_id] = conn
        st = self._conns[conn]
        st.role, st.room_id, st.peer_id = ROLE_PHONE, session_id, hello.peer_id
        room.display.send_text(encode_envelope(hello))
        return room

    def route_frame(self, room: Room, origin, env: Envelope, frame: str) -> None:
        """Deliver one admitted frame: phone to display, or display to the
        one phone named by the frame's peer id."""
        if origin is room.display:
            target = room.phones.get(env.peer_id)
            if target is None:
                raise UnknownTarget(env.peer_id)
            target.send_text(frame)
        else:
            room.display.send_text(frame)

    # -- per-role handling -------------------------------------------------------

    def _from_display(self, conn, st: _ConnState, env: Envelope, frame: str, now: float) -> None:
        room = self.rooms.get(st.room_id)
        if room is None:
            self.counters["room_gone"] += 1
            return
        if env.peer_id == room.session_id:
            # Self-addressed: bye closes the room, anything else is keepalive.
            if env.kind == BYE:
                self._conns.pop(conn, None)
                self._teardown_room(room.session_id, now, reason="display-bye")
                self._safe_close(conn)
            else:
                self.counters["keepalive"] += 1
            return
        self.route_frame(room, conn, env, frame)
        if env.kind == BYE:
            # The display evicted this phone (reject or replace).
            self._detach_phone(room.session_id, env.peer_id, now,
                               notify_display=False, reason="evicted")

    def _from_phone(self, conn, st: _ConnState, env: Envelope, frame: str, now: float) -> None:
        room = self.rooms.get(st.room_id)
        if room is None:
            self.counters["room_gone"] += 1
            return
        if env.peer_id != st.peer_id:
            self.counters["peer_id_spoof"] += 1
            return
        self.route_frame(room, conn, env, frame)
        if env.kind == BYE:
            self._conns.pop(conn, None)
            self._detach_phone(room.session_id, st.peer_id, now,
                               notify_display=False, reason="phone-bye")
            self._safe_close(conn)

    # -- internals ---------------------------------------------------------------

    def _detach_phone(self, room_id: str | None, peer_id: str | None, now: float,
                      notify_display: bool, reason: str) -> None:
        room = self.rooms.get(room_id)
        if room is None or peer_id not in room.phones:
            return
        conn = room.phones.pop(peer_id)
        self._conns.pop(conn, None)
        self._safe_close(conn)
        if notify_display:
            self._send_bye(room.display, peer_id, now, reason)

    def _teardown_room(self, room_id: str | None, now: float, reason: str) -> None:
        room = self.rooms.pop(room_id, None)
        if room is None:
            return
        for peer_id, conn in list(room.phones.items()):
            self._send_bye(conn, peer_id, now, reason)
            self._conns.pop(conn, None)
            self._safe_close(conn)
        room.phones.clear()

    def _send_bye(self, conn, peer_id: str, now: float, reason: str) -> None:
        bye = Envelope(kind=BYE, peer_id=peer_id or RELAY_PEER_ID, seq=0,
                       t_ms=int(now), payload={"reason": reason})
        try:
            conn.send_text(encode_envelope(bye))
        except Exception:
            self.counters["send_failed"] += 1

    def _drop_conn(self, conn) -> None:
        self._conns.pop(conn, None)
        self._safe_close(conn)

    def _safe_close(self, conn) -> None:
        try:
            conn.close()
        except Exception:
            self.counters["close_failed"] += 1

    # -- introspection -------------------------------------------------------------

    def connection_count(self) -> int:
        return len(self._conns)
