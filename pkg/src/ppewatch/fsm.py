"""Patrol / stop / alert behavior of the monitoring robot.

``step`` is a pure function of (state, tick, inbox): it advances the pose
by the previous command over the elapsed time, folds in risk-event
transitions, and returns the next state with the command to publish.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .geometry import Category
from .risk import EventState, RiskEvent


class Mode(enum.Enum):
    PATROLLING = "patrolling"
    STOPPED_ALERTING = "stopped_alerting"
    RESUMING = "resuming"


class TickError(ValueError):
    pass


_ALERT_TEXT = {
    Category.NO_HARDHAT: "Warning: worker without hardhat detected",
    Category.NO_SAFETY_VEST: "Warning: worker without safety vest detected",
    Category.NO_MASK: "Warning: worker without mask detected",
}


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0


@dataclass(frozen=True)
class Limits:
    v_max: float = 0.3
    w_max: float = 1.0
    tick_hz: float = 10.0


@dataclass(frozen=True)
class PatrolPlan:
    width: float = 2.0
    height: float = 3.0
    waypoints: tuple[tuple[float, float], ...] = ()
    cruise_speed: float = 0.2
    capture_radius: float = 0.1
    heading_gain: float = 2.0
    # Heading errors above this turn in place instead of arcing.
    turn_in_place: float = math.pi / 4

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("patrol area must have positive size")
        if not self.waypoints:
            object.__setattr__(self, "waypoints", inset_loop(self.width, self.height, 0.3))
        for x, y in self.waypoints:
            if not self.contains(x, y):
                raise ValueError(f"waypoint ({x}, {y}) lies outside the patrol area")

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width and 0.0 <= y <= self.height

    @property
    def center(self) -> tuple[float, float]:
        return self.width / 2.0, self.height / 2.0


def inset_loop(width: float, height: float, inset: float) -> tuple[tuple[float, float], ...]:
    inset = min(inset, width / 4.0, height / 4.0)
    return (
        (inset, inset),
        (width - inset, inset),
        (width - inset, height - inset),
        (inset, height - inset),
    )


@dataclass(frozen=True)
class AlertMessage:
    text: str
    event: RiskEvent


@dataclass(frozen=True)
class ActuationCommand:
    linear: float
    angular: float
    alerts: tuple[AlertMessage, ...] = ()

    @property
    def is_stop(self) -> bool:
        return self.linear == 0.0 and self.angular == 0.0


@dataclass(frozen=True)
class RobotState:
    mode: Mode = Mode.PATROLLING
    pose: Pose = Pose(0.3, 0.3, 0.0)
    active: frozenset[tuple[int, Category]] = frozenset()
    waypoint: int = 0
    tick: Optional[float] = None
    last_command: tuple[float, float] = (0.0, 0.0)


def format_alert(event: RiskEvent) -> AlertMessage:
    if event.state is not EventState.RAISED:
        raise ValueError("alerts are only issued for raised events")
    try:
        text = _ALERT_TEXT[event.kind]
    except KeyError:
        raise ValueError(f"no alert template for {event.kind.label}") from None
    return AlertMessage(text=text, event=event)


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _clamp(v: float, lim: float) -> float:
    return max(-lim, min(lim, v))


def patrol_command(
    plan: PatrolPlan, pose: Pose, waypoint: int, limits: Limits = Limits()
) -> tuple[float, float, int]:
    """Heading-controller command toward the current waypoint.

    Returns (linear, angular, waypoint index after any capture). Outside
    the area the target becomes the area center and the robot only drives
    once it faces it.
    """
    if not plan.contains(pose.x, pose.y):
        tx, ty = plan.center
        err = wrap_angle(math.atan2(ty - pose.y, tx - pose.x) - pose.heading)
        angular = _clamp(plan.heading_gain * err, limits.w_max)
        linear = min(plan.cruise_speed, limits.v_max) if abs(err) < 0.1 else 0.0
        return linear, angular, waypoint

    n = len(plan.waypoints)
    tx, ty = plan.waypoints[waypoint % n]
    if math.hypot(tx - pose.x, ty - pose.y) <= plan.capture_radius:
        waypoint = (waypoint + 1) % n
        tx, ty = plan.waypoints[waypoint]
    err = wrap_angle(math.atan2(ty - pose.y, tx - pose.x) - pose.heading)
    angular = _clamp(plan.heading_gain * err, limits.w_max)
    if abs(err) > plan.turn_in_place:
        return 0.0, angular, waypoint
    linear = _clamp(min(plan.cruise_speed, limits.v_max) * math.cos(err), limits.v_max)
    return linear, angular, waypoint


def integrate(pose: Pose, linear: float, angular: float, dt: float) -> Pose:
    """Unicycle motion over ``dt`` seconds (exact arc for constant twist)."""
    if dt <= 0.0:
        return pose
    if abs(angular) < 1e-12:
        return Pose(pose.x + linear * dt * math.cos(pose.heading), pose.y + linear * dt * math.sin(pose.heading), pose.heading)
    th1 = pose.heading + angular * dt
    r = linear / angular
    return Pose(
        pose.x + r * (math.sin(th1) - math.sin(pose.heading)),
        pose.y - r * (math.cos(th1) - math.cos(pose.heading)),
        wrap_angle(th1),
    )


def step(
    state: RobotState,
    tick: float,
    inbox: Sequence[RiskEvent] = (),
    plan: PatrolPlan = PatrolPlan(),
    limits: Limits = Limits(),
) -> tuple[RobotState, ActuationCommand]:
    """Advance the behavior by one tick."""
    if state.tick is not None and tick < state.tick:
        raise TickError(f"tick {tick} precedes previous tick {state.tick}")
    dt = 0.0 if state.tick is None else tick - state.tick
    pose = integrate(state.pose, *state.last_command, dt)

    active = set(state.active)
    alerts = []
    for ev in sorted(inbox, key=lambda e: (e.subject, int(e.kind), e.state is EventState.RAISED)):
        if ev.state is EventState.RAISED:
            active.add(ev.key)
            alerts.append(format_alert(ev))
        else:
            active.discard(ev.key)

    waypoint = state.waypoint
    if active:
        mode = Mode.STOPPED_ALERTING
        linear = angular = 0.0
    else:
        if state.mode is Mode.STOPPED_ALERTING:
            mode = Mode.RESUMING
        else:
            mode = Mode.PATROLLING
        linear, angular, waypoint = patrol_command(plan, pose, waypoint, limits)

    new_state = RobotState(
        mode=mode,
        pose=pose,
        active=frozenset(active),
        waypoint=waypoint,
        tick=tick,
        last_command=(linear, angular),
    )
    return new_state, ActuationCommand(linear, angular, tuple(alerts))


def initial_state(plan: PatrolPlan = PatrolPlan()) -> RobotState:
    x, y = plan.waypoints[0]
    return RobotState(pose=Pose(x, y, 0.0), waypoint=1 % len(plan.waypoints))
