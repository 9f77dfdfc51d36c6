"""The detection -> decision -> behavior node graph wired over the bus.

Topics mirror the robot's node scheme: an optional ``camera`` feed of
ground-truth scenes, ``detections``, ``decisions``, and the two outputs
``movement`` and ``alerts``. Every node appends JSON-ready records to a
shared transcript.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable, Optional

from . import fsm
from .bus import Bus, BusStats, pump_deterministic, run_free
from .fsm import ActuationCommand, AlertMessage, Limits, PatrolPlan
from .risk import FrameDecision, FramePacket, RiskConfig, RiskEngine, RiskEvent

AlertSink = Callable[[AlertMessage], None]


def event_record(ev: RiskEvent) -> dict:
    return {
        "kind": ev.kind.label,
        "subject": ev.subject,
        "frame_id": ev.frame_id,
        "timestamp": ev.timestamp,
        "state": ev.state.value,
    }


@dataclass(frozen=True)
class PipelineConfig:
    risk: RiskConfig = RiskConfig()
    plan: PatrolPlan = PatrolPlan()
    limits: Limits = Limits()
    bus_capacity: int = 16


@dataclass
class PipelineResult:
    stats: BusStats
    transcript: list[dict]
    decisions: list[FrameDecision]
    commands: list[tuple[int, float, ActuationCommand]]
    alerts: list[AlertMessage]


class Pipeline:
    def __init__(
        self,
        config: PipelineConfig = PipelineConfig(),
        detector: Optional[Callable[[Any], FramePacket]] = None,
        camera_kind: type = object,
        alert_sinks: Iterable[AlertSink] = (),
    ):
        self.config = config
        self.engine = RiskEngine(config.risk)
        self.state = fsm.initial_state(config.plan)
        self.alert_sinks = list(alert_sinks)
        self.transcript: list[dict] = []
        self.decisions: list[FrameDecision] = []
        self.commands: list[tuple[int, float, ActuationCommand]] = []
        self.alerts: list[AlertMessage] = []

        bus = self.bus = Bus(config.bus_capacity)
        self.input_topic = "detections"
        if detector is not None:
            bus.create_topic("camera", camera_kind)
            self.input_topic = "camera"
        bus.create_topic("detections", FramePacket)
        bus.create_topic("decisions", FrameDecision)
        bus.create_topic("movement", ActuationCommand)
        bus.create_topic("alerts", AlertMessage)

        if detector is not None:
            bus.add_node("detector", ["camera"], ["detections"], lambda _t, scene: [("detections", detector(scene))])
        bus.add_node("decision", ["detections"], ["decisions"], self._on_frame)
        bus.add_node("behavior", ["decisions"], ["movement", "alerts"], self._on_decision)
        bus.add_node("actuator", ["movement"], [], self._on_command)
        bus.add_node("speaker", ["alerts"], [], self._on_alert)

    def _on_frame(self, _topic, frame: FramePacket):
        decision = self.engine.process(frame)
        self.decisions.append(decision)
        self.transcript.append({
            "type": "frame",
            "frame_id": frame.frame_id,
            "timestamp": frame.timestamp,
            "n_detections": len(frame.detections),
            "hazards": [[s, k.label] for s, k in sorted(decision.hazards, key=lambda h: (h[0], int(h[1])))],
        })
        for ev in decision.events:
            self.transcript.append({"type": "event", **event_record(ev)})
        return [("decisions", decision)]

    def _on_decision(self, _topic, decision: FrameDecision):
        prev_mode = self.state.mode
        self.state, cmd = fsm.step(
            self.state, decision.timestamp, decision.events, self.config.plan, self.config.limits
        )
        if self.state.mode is not prev_mode:
            self.transcript.append({
                "type": "state",
                "frame_id": decision.frame_id,
                "from": prev_mode.value,
                "to": self.state.mode.value,
            })
        pose = self.state.pose
        self.transcript.append({
            "type": "command",
            "frame_id": decision.frame_id,
            "linear": round(cmd.linear, 9),
            "angular": round(cmd.angular, 9),
            "pose": [round(pose.x, 9), round(pose.y, 9), round(pose.heading, 9)],
            "mode": self.state.mode.value,
        })
        self.commands.append((decision.frame_id, decision.timestamp, cmd))
        out = [("movement", cmd)]
        for alert in cmd.alerts:
            self.transcript.append({
                "type": "alert",
                "frame_id": decision.frame_id,
                "text": alert.text,
                "event": event_record(alert.event),
            })
            out.append(("alerts", alert))
        return out

    def _on_command(self, _topic, cmd: ActuationCommand):
        return ()

    def _on_alert(self, _topic, alert: AlertMessage):
        self.alerts.append(alert)
        for sink in self.alert_sinks:
            sink(alert)
        return ()

    def run(self, inputs: Iterable[Any], mode: str = "deterministic") -> PipelineResult:
        feed = ((self.input_topic, item) for item in inputs)
        if mode == "deterministic":
            stats = pump_deterministic(self.bus, feed)
        elif mode == "free":
            stats = run_free(self.bus, feed)
        else:
            raise ValueError(f"unknown execution mode {mode!r}")
        return PipelineResult(stats, self.transcript, self.decisions, self.commands, self.alerts)
