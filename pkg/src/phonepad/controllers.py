"""Typed per-phone input models and the pure update functions for them.

Every controller extends a common base carrying identity and telemetry
fields. Update functions never mutate their input; the registry stores
the returned state. Telemetry fields belong to the telemetry pipeline
and are never touched by input updates.

User-frame payloads (the ``d`` object of kind "user"):

    nes       {"b": <button key>, "v": <bool>}
    joystick  {"a": <degrees>, "f": <force>}
    touchpad  {"ph": "s"|"m"|"e", "x": <0..1>, "y": <0..1>}
    accel     {"x": <m/s^2>, "y": <m/s^2>, "z": <m/s^2>}
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

NES = "nes"
JOYSTICK = "joystick"
TOUCHPAD = "touchpad"
ACCEL = "accel"
KINDS = (NES, JOYSTICK, TOUCHPAD, ACCEL)

NES_BUTTONS = ("up", "down", "left", "right", "a", "b", "select", "start")

TOUCH_START = "start"
TOUCH_MOVE = "move"
TOUCH_END = "end"
_PHASE_WIRE = {TOUCH_START: "s", TOUCH_MOVE: "m", TOUCH_END: "e"}
_PHASE_FROM_WIRE = {v: k for k, v in _PHASE_WIRE.items()}


class ControllerError(ValueError):
    pass


class UnknownKind(ControllerError):
    pass


class UnknownButton(ControllerError):
    pass


class NonFiniteInput(ControllerError):
    pass


class MalformedPayload(ControllerError):
    pass


@dataclass
class ControllerState:
    """Base fields shared by every controller."""

    peer_id: str
    player_id: str | None = None
    ping_ms: float | None = None
    user_rate_hz: float = 0.0
    stat_rate_hz: float = 0.0


@dataclass
class NesState(ControllerState):
    buttons: dict = field(default_factory=lambda: {b: False for b in NES_BUTTONS})


@dataclass
class JoystickState(ControllerState):
    angle_deg: float = 0.0
    force: float = 0.0
    active: bool = False


@dataclass
class TouchpadState(ControllerState):
    # Normalized screen coordinates, origin top-left, y down.
    x: float = 0.5
    y: float = 0.5
    is_active: bool = False


@dataclass
class AccelState(ControllerState):
    ax: float = 0.0
    ay: float = 0.0
    az: float = 0.0


_STATE_TYPES = {NES: NesState, JOYSTICK: JoystickState,
                TOUCHPAD: TouchpadState, ACCEL: AccelState}

_KIND_OF_TYPE = {cls: kind for kind, cls in _STATE_TYPES.items()}


def create_controller(kind: str, peer_id: str, player_id: str | None = None) -> ControllerState:
    """New controller at its rest state."""
    cls = _STATE_TYPES.get(kind)
    if cls is None:
        raise UnknownKind(f"unknown controller kind: {kind!r}")
    return cls(peer_id=peer_id, player_id=player_id)


def kind_of(state: ControllerState) -> str:
    return _KIND_OF_TYPE[type(state)]


def _check_finite(*values: float) -> None:
    for v in values:
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise NonFiniteInput(f"expected a finite number, got {v!r}")


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else 1.0 if v > 1.0 else float(v)


def apply_nes(state: NesState, button: str, pressed: bool) -> NesState:
    if button not in NES_BUTTONS:
        raise UnknownButton(f"unknown NES button: {button!r}")
    buttons = dict(state.buttons)
    buttons[button] = bool(pressed)
    return replace(state, buttons=buttons)


def apply_joystick(state: JoystickState, angle_deg: float, force: float) -> JoystickState:
    _check_finite(angle_deg, force)
    force = _clamp01(force)
    return replace(state, angle_deg=float(angle_deg) % 360.0, force=force,
                   active=force > 0.0)


def joystick_to_velocity(state: JoystickState, dominance: bool = True) -> tuple[float, float]:
    """Joystick state as a screen-space velocity vector.

    The angle is counterclockwise from screen-right; velocities are in
    screen coordinates (y down), so angle 90 maps to (0, -force). With
    dominance on, the axis with the smaller absolute component is zeroed
    (ties keep horizontal), cancelling accidental diagonal drift.
    """
    rad = math.radians(state.angle_deg)
    vx = state.force * math.cos(rad) + 0.0
    vy = -state.force * math.sin(rad) + 0.0
    if dominance:
        if abs(vx) >= abs(vy):
            vy = 0.0
        else:
            vx = 0.0
    return vx, vy


def apply_touch(state: TouchpadState, phase: str, x: float, y: float) -> TouchpadState:
    if phase == TOUCH_END:
        # Release keeps the last position so displays can render it.
        return replace(state, is_active=False)
    if phase not in (TOUCH_START, TOUCH_MOVE):
        raise MalformedPayload(f"unknown touch phase: {phase!r}")
    _check_finite(x, y)
    return replace(state, x=_clamp01(x), y=_clamp01(y), is_active=True)


def apply_accel(state: AccelState, ax: float, ay: float, az: float) -> AccelState:
    _check_finite(ax, ay, az)
    return replace(state, ax=float(ax), ay=float(ay), az=float(az))


def nes_payload(button: str, pressed: bool) -> dict:
    return {"b": button, "v": bool(pressed)}


def joystick_payload(angle_deg: float, force: float) -> dict:
    return {"a": angle_deg, "f": force}


def touch_payload(phase: str, x: float, y: float) -> dict:
    return {"ph": _PHASE_WIRE[phase], "x": x, "y": y}


def accel_payload(ax: float, ay: float, az: float) -> dict:
    return {"x": ax, "y": ay, "z": az}


def apply_user_payload(state: ControllerState, payload: dict) -> ControllerState:
    """Apply a decoded user-frame payload to the matching state type."""
    try:
        if isinstance(state, NesState):
            return apply_nes(state, payload["b"], payload["v"])
        if isinstance(state, JoystickState):
            return apply_joystick(state, payload["a"], payload["f"])
        if isinstance(state, TouchpadState):
            phase = _PHASE_FROM_WIRE.get(payload["ph"])
            if phase is None:
                raise MalformedPayload(f"unknown touch phase: {payload['ph']!r}")
            return apply_touch(state, phase, payload.get("x", 0.0), payload.get("y", 0.0))
        if isinstance(state, AccelState):
            return apply_accel(state, payload["x"], payload["y"], payload["z"])
    except (KeyError, TypeError) as exc:
        raise MalformedPayload(f"bad user payload {payload!r}") from exc
    raise UnknownKind(f"no payload mapping for {type(state).__name__}")


def summarize(state: ControllerState) -> dict:
    """Compact kind-specific view for snapshots and status pages."""
    if isinstance(state, NesState):
        return {"kind": NES, "pressed": sorted(b for b, v in state.buttons.items() if v)}
    if isinstance(state, JoystickState):
        return {"kind": JOYSTICK, "angle_deg": state.angle_deg,
                "force": state.force, "active": state.active}
    if isinstance(state, TouchpadState):
        return {"kind": TOUCHPAD, "x": state.x, "y": state.y,
                "is_active": state.is_active}
    if isinstance(state, AccelState):
        return {"kind": ACCEL, "ax": state.ax, "ay": state.ay, "az": state.az}
    return {"kind": "base"}
