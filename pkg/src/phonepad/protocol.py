"""Wire envelope and join-URL codec shared by every other module.

Frame format (one frame = one transport message):

    {"v":1,"k":"hello","p":"p1","pl":"JohnDoe","s":0,"t":0,"d":{}}

Keys, in order: ``v`` protocol version (always 1), ``k`` kind
("hello"|"user"|"sping"|"spong"|"bye"), ``p`` peer id, ``pl`` optional
player id (omitted when absent), ``s`` per-sender sequence number,
``t`` sender timestamp in milliseconds, ``d`` kind-specific payload.
Encoding is byte-deterministic: top-level keys in the order above,
payload keys sorted, compact separators, UTF-8. Frames never contain a
raw newline, so a byte stream can carry them newline-delimited.

Sequence numbers increase independently for the user class
(hello/user/bye) and the stat class (sping/spong), so a throttled user
stream cannot create gaps in stat sequencing.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from urllib.parse import parse_qsl, quote, urlsplit

PROTOCOL_VERSION = 1

HELLO = "hello"
USER = "user"
STAT_PING = "sping"
STAT_PONG = "spong"
BYE = "bye"

KINDS = frozenset({HELLO, USER, STAT_PING, STAT_PONG, BYE})

USER_CLASS = "user"
STAT_CLASS = "stat"

_STAT_KINDS = frozenset({STAT_PING, STAT_PONG})


def kind_class(kind: str) -> str:
    """Sequence-counter class for a kind: stat for sping/spong, user otherwise."""
    return STAT_CLASS if kind in _STAT_KINDS else USER_CLASS


class ProtocolError(ValueError):
    """Base class for frame and URL codec errors."""


class MalformedFrame(ProtocolError):
    def __init__(self, reason: str, fragment: str = ""):
        super().__init__(f"{reason}: {fragment[:120]!r}")
        self.fragment = fragment[:120]


class UnknownKind(ProtocolError):
    def __init__(self, kind: object):
        super().__init__(f"unknown frame kind: {kind!r}")
        self.kind = kind


class VersionMismatch(ProtocolError):
    def __init__(self, version: object):
        super().__init__(f"unsupported protocol version: {version!r}")
        self.version = version


class InvalidBaseUrl(ProtocolError):
    pass


class MissingSessionId(ProtocolError):
    pass


@dataclass(frozen=True)
class Envelope:
    """One wire message. ``payload`` must be a JSON-serializable dict."""

    kind: str
    peer_id: str
    seq: int
    t_ms: int
    payload: dict = field(default_factory=dict)
    player_id: str | None = None
    version: int = PROTOCOL_VERSION


def _sorted_payload(obj):
    if isinstance(obj, dict):
        return {k: _sorted_payload(obj[k]) for k in sorted(obj)}
    if isinstance(obj, (list, tuple)):
        return [_sorted_payload(v) for v in obj]
    return obj


def encode_envelope(env: Envelope) -> str:
    """Serialize an envelope to its canonical one-line frame text."""
    if env.version != PROTOCOL_VERSION:
        raise VersionMismatch(env.version)
    if env.kind not in KINDS:
        raise UnknownKind(env.kind)
    if not isinstance(env.peer_id, str) or not env.peer_id:
        raise MalformedFrame("peer_id must be a non-empty string", str(env.peer_id))
    obj: dict = {"v": env.version, "k": env.kind, "p": env.peer_id}
    if env.player_id is not None:
        obj["pl"] = env.player_id
    obj["s"] = env.seq
    obj["t"] = env.t_ms
    obj["d"] = _sorted_payload(env.payload)
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def _require_int(obj: dict, key: str, frame: str) -> int:
    val = obj.get(key)
    if type(val) is not int:
        raise MalformedFrame(f"field {key!r} must be an integer", frame)
    return val


def decode_envelope(frame: str | bytes) -> Envelope:
    """Parse a frame, validating it against the schema.

    Raises MalformedFrame, VersionMismatch, or UnknownKind; never anything
    else, no matter the input. Receivers on an untrusted link drop the
    frame and count the error.
    """
    if isinstance(frame, bytes):
        try:
            frame = frame.decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedFrame("frame is not valid UTF-8", repr(frame[:80]))
    try:
        obj = json.loads(frame)
    except (json.JSONDecodeError, RecursionError):
        raise MalformedFrame("frame is not valid JSON", frame)
    if not isinstance(obj, dict):
        raise MalformedFrame("frame is not an object", frame)

    version = _require_int(obj, "v", frame)
    if version != PROTOCOL_VERSION:
        raise VersionMismatch(version)

    kind = obj.get("k")
    if not isinstance(kind, str) or kind not in KINDS:
        raise UnknownKind(kind)

    peer_id = obj.get("p")
    if not isinstance(peer_id, str) or not peer_id:
        raise MalformedFrame("field 'p' must be a non-empty string", frame)

    player_id = obj.get("pl")
    if player_id is not None and not isinstance(player_id, str):
        raise MalformedFrame("field 'pl' must be a string", frame)

    seq = _require_int(obj, "s", frame)
    if seq < 0:
        raise MalformedFrame("field 's' must be non-negative", frame)
    t_ms = _require_int(obj, "t", frame)

    payload = obj.get("d")
    if not isinstance(payload, dict):
        raise MalformedFrame("field 'd' must be an object", frame)

    return Envelope(kind=kind, peer_id=peer_id, seq=seq, t_ms=t_ms,
                    payload=payload, player_id=player_id, version=version)


_UNRESERVED = re.compile(r"^[A-Za-z0-9._~-]+$")


@dataclass(frozen=True)
class JoinParams:
    """Pairing parameters a phone reads from its page URL."""

    session_id: str
    player_id: str | None = None
    first_connected: bool = True

    def __post_init__(self):
        if not self.session_id or not _UNRESERVED.match(self.session_id):
            raise ValueError(f"invalid session id: {self.session_id!r}")
        if self.player_id is not None and not self.player_id:
            raise ValueError("player_id must be non-empty when present")


def build_join_url(base_url: str, params: JoinParams) -> str:
    """Append pairing parameters to a controller page URL.

    firstConnected defaults to true and is only emitted when false.
    ``base_url`` must be absolute with no query string or fragment.
    """
    parts = urlsplit(base_url)
    if not parts.scheme or not parts.netloc:
        raise InvalidBaseUrl(f"not an absolute URL: {base_url!r}")
    if parts.query or parts.fragment:
        raise InvalidBaseUrl(f"base URL must not carry a query or fragment: {base_url!r}")
    query = "id=" + quote(params.session_id, safe="")
    if params.player_id is not None:
        query += "&playerid=" + quote(params.player_id, safe="")
    if not params.first_connected:
        query += "&firstConnected=false"
    return f"{base_url}?{query}"


def parse_join_url(url: str) -> JoinParams:
    """Inverse of build_join_url. Unknown query keys are ignored."""
    pairs = parse_qsl(urlsplit(url).query, keep_blank_values=True)
    session_id = None
    player_id = None
    first_connected = True
    for key, value in pairs:
        if key == "id" and session_id is None:
            session_id = value
        elif key == "playerid" and player_id is None:
            player_id = value or None
        elif key == "firstConnected":
            first_connected = value.strip().lower() != "false"
    if session_id is None:
        raise MissingSessionId(f"no 'id' parameter in {url!r}")
    return JoinParams(session_id=session_id, player_id=player_id,
                      first_connected=first_connected)
