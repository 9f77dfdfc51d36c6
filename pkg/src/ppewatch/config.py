"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Unknown keys are rejected.
Every key and its default is listed in ``DEFAULTS``.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .fsm import Limits, PatrolPlan, inset_loop
from .geometry import Category
from .pipeline import PipelineConfig
from .risk import RiskConfig
from .sim import NoiseModel, TrialConfig

ALERT_COMMAND_ENV = "PPEWATCH_ALERT_CMD"


class ConfigError(ValueError):
    pass


def category_slug(cat: Category) -> str:
    return re.sub(r"[^a-z0-9]+", "_", cat.label.lower()).strip("_")


DEFAULTS: dict[str, str] = {
    "risk.confidence_floor": "0.5",
    "risk.association_overlap_min": "0.25",
    "risk.confirm_frames": "3",
    "risk.clear_frames": "5",
    "risk.link_gate": "0.2",
    "risk.rules": "NO-Hardhat, NO-Safety Vest",
    "fsm.tick_hz": "10",
    "fsm.v_max": "0.3",
    "fsm.w_max": "1.0",
    "fsm.cruise_speed": "0.2",
    "fsm.area_width": "2.0",
    "fsm.area_height": "3.0",
    "fsm.inset": "0.3",
    "fsm.capture_radius": "0.1",
    "fsm.heading_gain": "2.0",
    "noise.p_miss": "0.0",
    **{f"noise.p_miss.{category_slug(c)}": "" for c in Category},
    "noise.spurious_rate": "0.0",
    "noise.conf_base": "1.0",
    "noise.conf_jitter": "0.0",
    "noise.center_sigma": "0.0",
    "sim.duration": "30",
    "sim.fps": "5",
    "sim.success_window": "3",
    "sim.seed": "0",
    "sim.subject1_profile": "default",
    "sim.subject2_profile": "default",
    "bus.capacity": "16",
    "alert.command": "",
}


@dataclass(frozen=True)
class RunConfig:
    values: dict[str, str] = field(default_factory=lambda: dict(DEFAULTS))
    risk: RiskConfig = RiskConfig()
    plan: PatrolPlan = PatrolPlan()
    limits: Limits = Limits()
    noise: NoiseModel = NoiseModel()
    duration: float = 30.0
    fps: float = 5.0
    success_window: float = 3.0
    seed: int = 0
    subject_profiles: dict[str, str] = field(default_factory=lambda: {"1": "default", "2": "default"})
    bus_capacity: int = 16
    alert_command: str = ""

    @property
    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.risk, self.plan, self.limits, self.bus_capacity)

    @property
    def trial(self) -> TrialConfig:
        return TrialConfig(self.pipeline, self.success_window)

    def dump(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.values.items()) if v != "")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


def _num(values, key, conv=float):
    try:
        return conv(values[key])
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {values[key]!r}") from None


def build_config(overrides: Optional[dict[str, str]] = None, environ=os.environ) -> RunConfig:
    v = dict(DEFAULTS)
    for k, val in (overrides or {}).items():
        if k not in DEFAULTS:
            raise ConfigError(f"unknown config key {k!r}")
        v[k] = val
    try:
        rules = tuple(Category.from_label(s) for s in v["risk.rules"].split(",") if s.strip())
        risk = RiskConfig(
            confidence_floor=_num(v, "risk.confidence_floor"),
            association_overlap_min=_num(v, "risk.association_overlap_min"),
            confirm_frames=_num(v, "risk.confirm_frames", int),
            clear_frames=_num(v, "risk.clear_frames", int),
            link_gate=_num(v, "risk.link_gate"),
            rules=rules,
        )
        width, height = _num(v, "fsm.area_width"), _num(v, "fsm.area_height")
        plan = PatrolPlan(
            width=width,
            height=height,
            waypoints=inset_loop(width, height, _num(v, "fsm.inset")),
            cruise_speed=_num(v, "fsm.cruise_speed"),
            capture_radius=_num(v, "fsm.capture_radius"),
            heading_gain=_num(v, "fsm.heading_gain"),
        )
        limits = Limits(v_max=_num(v, "fsm.v_max"), w_max=_num(v, "fsm.w_max"), tick_hz=_num(v, "fsm.tick_hz"))
        base_miss = _num(v, "noise.p_miss")
        p_miss = {}
        for c in Category:
            key = f"noise.p_miss.{category_slug(c)}"
            p_miss[c] = _num(v, key) if v[key] != "" else base_miss
        noise = NoiseModel(
            p_miss=p_miss,
            spurious_rate=_num(v, "noise.spurious_rate"),
            conf_base=_num(v, "noise.conf_base"),
            conf_jitter=_num(v, "noise.conf_jitter"),
            center_sigma=_num(v, "noise.center_sigma"),
        )
        profiles = {"1": v["sim.subject1_profile"], "2": v["sim.subject2_profile"]}
        for name in profiles.values():
            noise.for_profile(name)
        capacity = _num(v, "bus.capacity", int)
        if capacity < 1:
            raise ConfigError("config key 'bus.capacity' must be >= 1")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(
        values=v,
        risk=risk,
        plan=plan,
        limits=limits,
        noise=noise,
        duration=_num(v, "sim.duration"),
        fps=_num(v, "sim.fps"),
        success_window=_num(v, "sim.success_window"),
        seed=_num(v, "sim.seed", int),
        subject_profiles=profiles,
        bus_capacity=capacity,
        alert_command=environ.get(ALERT_COMMAND_ENV, v["alert.command"]),
    )


def load_config(path: Union[str, Path, None] = None, environ=os.environ) -> RunConfig:
    if path is None:
        return build_config(environ=environ)
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return build_config(parse_config_text(text, str(p)), environ=environ)
