"""Synthetic replicas of the five field experiments.

A scenario places one or two subjects in the patrol area, renders their
ground-truth boxes per frame, corrupts them through a seeded detector-noise
model and drives the full pipeline. Trials are judged by the stop-and-alert
criteria and aggregated into a success-rate table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .geometry import BBox, Category, Detection, GroundTruthBox
from .pipeline import Pipeline, PipelineConfig
from .risk import FramePacket

AREA_WIDTH = 2.0
AREA_HEIGHT = 3.0

# Additive hardhat-family miss probability for the "hard-subject" preset.
HARD_SUBJECT_HARDHAT_MISS = 0.4

_EXPERIMENTS = {
    # id: (moving, equipped) for single-subject experiments
    1: (False, True),
    2: (False, False),
    3: (True, True),
    4: (True, False),
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class SubjectProfile:
    name: str
    equipped: bool
    moving: bool
    path: tuple[tuple[float, float], ...]
    speed: float = 0.3
    body_width: float = 0.12
    body_height: float = 0.6
    noise_profile: str = "default"

    def __post_init__(self):
        if not self.path:
            raise ScenarioError("subject path needs at least one point")
        for x, y in self.path:
            if not (0.0 <= x <= AREA_WIDTH and 0.0 <= y <= AREA_HEIGHT):
                raise ScenarioError(f"path point ({x}, {y}) outside the {AREA_WIDTH}x{AREA_HEIGHT} m area")

    def position(self, t: float) -> tuple[float, float]:
        """Position at time ``t``; moving subjects walk the path back and forth."""
        if not self.moving or len(self.path) == 1:
            return self.path[0]
        seg = [math.dist(a, b) for a, b in zip(self.path, self.path[1:])]
        total = sum(seg)
        s = (self.speed * t) % (2.0 * total)
        if s > total:
            s = 2.0 * total - s
        for (a, b), length in zip(zip(self.path, self.path[1:]), seg):
            if s <= length or length == 0.0:
                f = s / length if length else 0.0
                return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
            s -= length
        return self.path[-1]


STATIC_SPOT = ((1.0, 1.5),)
WALK_PATH = ((0.4, 1.0), (1.6, 2.0))
PAIR_SPOTS = (((0.6, 1.5),), ((1.4, 1.5),))


@dataclass(frozen=True)
class Scenario:
    experiment: int
    subjects: tuple[SubjectProfile, ...]
    duration: float = 30.0
    fps: float = 5.0

    def __post_init__(self):
        if self.experiment not in (1, 2, 3, 4, 5):
            raise ScenarioError(f"experiment id must be 1-5, got {self.experiment}")
        expected = 2 if self.experiment == 5 else 1
        if len(self.subjects) != expected:
            raise ScenarioError(f"experiment {self.experiment} needs {expected} subject(s)")
        if self.experiment == 5 and sorted(s.equipped for s in self.subjects) != [False, True]:
            raise ScenarioError("experiment 5 pairs one equipped and one unequipped subject")
        if self.duration <= 0 or self.fps <= 0:
            raise ScenarioError("duration and fps must be positive")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.fps))

    @property
    def subject_label(self) -> str:
        return " and ".join(s.name for s in self.subjects)


def scenario_for(
    experiment: int,
    subjects: Sequence[str] = ("1",),
    duration: float = 30.0,
    fps: float = 5.0,
    noise_profiles: Optional[Mapping[str, str]] = None,
) -> Scenario:
    """Build one of the five protocol experiments.

    1/2: static subject with/without equipment; 3/4: moving subject
    with/without; 5: two static subjects, the first equipped, the second not.
    """
    profiles = dict(noise_profiles or {})
    if experiment == 5:
        names = list(subjects) if len(subjects) == 2 else ["1", "2"]
        people = tuple(
            SubjectProfile(name=n, equipped=(k == 0), moving=False, path=PAIR_SPOTS[k],
                           noise_profile=profiles.get(n, "default"))
            for k, n in enumerate(names)
        )
        return Scenario(5, people, duration, fps)
    if experiment not in _EXPERIMENTS:
        raise ScenarioError(f"experiment id must be 1-5, got {experiment}")
    if len(subjects) != 1:
        raise ScenarioError(f"experiment {experiment} takes exactly one subject")
    moving, equipped = _EXPERIMENTS[experiment]
    name = subjects[0]
    person = SubjectProfile(
        name=name, equipped=equipped, moving=moving,
        path=WALK_PATH if moving else STATIC_SPOT,
        noise_profile=profiles.get(name, "default"),
    )
    return Scenario(experiment, (person,), duration, fps)


@dataclass(frozen=True)
class GroundTruthFrame:
    frame_id: int
    timestamp: float
    boxes: tuple[GroundTruthBox, ...]
    owners: tuple[int, ...]

    def as_packet(self) -> FramePacket:
        return FramePacket(self.frame_id, self.timestamp, tuple(Detection(b.category, b.box, 1.0) for b in self.boxes))


def project(subject: SubjectProfile, x: float, y: float) -> list[GroundTruthBox]:
    """Image-space boxes for a subject standing at (x, y) meters.

    The camera looks along +y from the near edge of the area: horizontal
    position maps to image x, distance shrinks the body.
    """
    scale = 1.0 - 0.5 * (y / AREA_HEIGHT)
    pw, ph = subject.body_width * scale, subject.body_height * scale
    cx, cy = x / AREA_WIDTH, 0.5
    top = cy - ph / 2.0
    person = BBox(cx, cy, pw, ph)
    head = BBox(cx, top + 0.08 * ph, 0.6 * pw, 0.12 * ph)
    torso = BBox(cx, cy - 0.05 * ph, 0.9 * pw, 0.3 * ph)
    if subject.equipped:
        return [
            GroundTruthBox(Category.PERSON, person),
            GroundTruthBox(Category.HARDHAT, head),
            GroundTruthBox(Category.SAFETY_VEST, torso),
        ]
    return [
        GroundTruthBox(Category.PERSON, person),
        GroundTruthBox(Category.NO_HARDHAT, head),
        GroundTruthBox(Category.NO_SAFETY_VEST, torso),
    ]


def render_gt_frames(scenario: Scenario) -> list[GroundTruthFrame]:
    frames = []
    for k in range(scenario.n_frames):
        t = k / scenario.fps
        boxes, owners = [], []
        for idx, subj in enumerate(scenario.subjects):
            for b in project(subj, *subj.position(t)):
                boxes.append(b)
                owners.append(idx)
        frames.append(GroundTruthFrame(k, t, tuple(boxes), tuple(owners)))
    return frames


@dataclass(frozen=True)
class NoiseModel:
    p_miss: Mapping[Category, float] = field(default_factory=dict)
    spurious_rate: float = 0.0
    conf_base: float = 1.0
    conf_jitter: float = 0.0
    center_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        pm = {Category(k): float(v) for k, v in dict(self.p_miss).items()}
        for k, v in pm.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"miss probability for {k.label} must lie in [0, 1]")
        object.__setattr__(self, "p_miss", pm)
        if self.spurious_rate < 0 or self.conf_jitter < 0 or self.center_sigma < 0:
            raise ValueError("noise rates and spreads must be non-negative")
        if not 0.0 <= self.conf_base <= 1.0:
            raise ValueError("conf_base must lie in [0, 1]")

    def miss(self, category: Category) -> float:
        return self.p_miss.get(category, 0.0)

    def for_profile(self, profile: str) -> "NoiseModel":
        if profile == "default":
            return self
        if profile == "hard-subject":
            pm = dict(self.p_miss)
            for cat in (Category.HARDHAT, Category.NO_HARDHAT):
                pm[cat] = min(1.0, pm.get(cat, 0.0) + HARD_SUBJECT_HARDHAT_MISS)
            return replace(self, p_miss=pm)
        raise ValueError(f"unknown noise profile {profile!r}")

    @classmethod
    def zero(cls, seed: int = 0) -> "NoiseModel":
        return cls(seed=seed)


def _sample_conf(noise: NoiseModel, rng: np.random.Generator) -> float:
    u = rng.uniform(-1.0, 1.0)
    return float(min(1.0, max(0.0, noise.conf_base + noise.conf_jitter * u)))


def simulate_detector(
    frame: GroundTruthFrame,
    noise: NoiseModel,
    rng: np.random.Generator,
    owner_noise: Optional[Sequence[NoiseModel]] = None,
) -> FramePacket:
    """Corrupt one ground-truth frame into detector output.

    Every box is dropped independently with its category's miss
    probability; survivors get center jitter and a sampled confidence.
    Spurious boxes arrive as a Poisson stream with ``spurious_rate`` mean.
    """
    dets = []
    for box, owner in zip(frame.boxes, frame.owners):
        model = owner_noise[owner] if owner_noise is not None else noise
        missed = rng.random() < model.miss(box.category)
        dx, dy = rng.normal(0.0, 1.0, size=2)
        conf = _sample_conf(model, rng)
        if missed:
            continue
        b = box.box
        if model.center_sigma > 0:
            cx = min(1.0, max(0.0, b.cx + model.center_sigma * dx))
            cy = min(1.0, max(0.0, b.cy + model.center_sigma * dy))
            b = BBox(cx, cy, b.w, b.h)
        dets.append(Detection(box.category, b, conf))
    if noise.spurious_rate > 0:
        for _ in range(int(rng.poisson(noise.spurious_rate))):
            cat = Category(int(rng.integers(0, len(Category))))
            cx, cy = rng.uniform(0.05, 0.95, size=2)
            w, h = rng.uniform(0.03, 0.2, size=2)
            dets.append(Detection(cat, BBox(float(cx), float(cy), float(w), float(h)), _sample_conf(noise, rng)))
    return FramePacket(frame.frame_id, frame.timestamp, tuple(dets))


@dataclass(frozen=True)
class TrialConfig:
    pipeline: PipelineConfig = PipelineConfig()
    success_window: float = 3.0


@dataclass(frozen=True)
class TrialOutcome:
    success: bool
    reason: str
    transcript: tuple[dict, ...]
    alerts: int
    raised_at: Optional[float] = None


def _nearest_owner(frame: GroundTruthFrame, person: BBox) -> Optional[int]:
    best, best_d = None, math.inf
    for b, owner in zip(frame.boxes, frame.owners):
        if b.category != Category.PERSON:
            continue
        d = math.hypot(b.box.cx - person.cx, b.box.cy - person.cy)
        if d < best_d:
            best, best_d = owner, d
    # Farther than half a body width is a spurious person, not a subject.
    return best if best_d <= 0.1 else None


def run_trial(
    scenario: Scenario,
    noise: NoiseModel,
    config: TrialConfig = TrialConfig(),
    seed: Optional[int] = None,
) -> TrialOutcome:
    """Run one scenario through the deterministic pipeline and judge it.

    Success: every unequipped subject triggers a Raised event of one of its
    violation kinds, with the robot stopped, within ``success_window``
    seconds of its first violation frame; alerts never point at an
    equipped subject. Equipped-only scenarios succeed iff no alert fires.
    """
    rng = np.random.default_rng(noise.seed if seed is None else seed)
    owner_noise = [noise.for_profile(s.noise_profile) for s in scenario.subjects]
    frames = render_gt_frames(scenario)
    by_id = {f.frame_id: f for f in frames}

    pipe = Pipeline(
        config.pipeline,
        detector=lambda gt: simulate_detector(gt, noise, rng, owner_noise),
        camera_kind=GroundTruthFrame,
    )
    result = pipe.run(frames, mode="deterministic")

    # Map tracker subject ids to scenario subjects at the frame they were seen.
    owner_of: dict[tuple[int, int], Optional[int]] = {}
    for d in result.decisions:
        gt = by_id[d.frame_id]
        for a in d.assessments:
            owner_of[(d.frame_id, a.subject)] = _nearest_owner(gt, a.person)

    stops = {fid: cmd.is_stop for fid, _, cmd in result.commands}
    unequipped = [i for i, s in enumerate(scenario.subjects) if not s.equipped]
    enabled = set(config.pipeline.risk.rules)
    wanted = {Category.NO_HARDHAT, Category.NO_SAFETY_VEST} & enabled

    false_alerts = 0
    confirmed: dict[int, float] = {}
    for alert in result.alerts:
        ev = alert.event
        owner = owner_of.get((ev.frame_id, ev.subject))
        if owner is None or scenario.subjects[owner].equipped:
            false_alerts += 1
        elif ev.kind in wanted and stops.get(ev.frame_id, False):
            confirmed.setdefault(owner, ev.timestamp)

    transcript = list(result.transcript)
    success, reason, raised_at = True, "ok", None
    if unequipped:
        for i in unequipped:
            first = 0.0  # unequipped subjects are visible from the first frame
            t = confirmed.get(i)
            if t is None:
                success, reason = False, "no confirmed event"
                break
            raised_at = t if raised_at is None else min(raised_at, t)
            if t > first + config.success_window + 1e-9:
                success, reason = False, "stop too late"
                break
        if success and scenario.experiment == 5 and false_alerts:
            success, reason = False, "false alert"
    elif result.alerts:
        success, reason = False, "false alert"

    transcript.append({
        "type": "outcome",
        "experiment": scenario.experiment,
        "subjects": scenario.subject_label,
        "success": success,
        "reason": reason,
        "alerts": len(result.alerts),
    })
    return TrialOutcome(success, reason, tuple(transcript), len(result.alerts), raised_at)


@dataclass(frozen=True)
class TableRow:
    experiment: int
    tests: int
    subject: str
    successes: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.tests


# (experiment, subject label, number of tests) in the field-protocol order.
PROTOCOL_ROWS: tuple[tuple[int, str, int], ...] = (
    (1, "1", 6),
    (2, "1", 6),
    (3, "1", 4),
    (4, "1", 4),
    (5, "1 and 2", 5),
    (1, "2", 6),
    (2, "2", 6),
    (3, "2", 4),
    (4, "2", 4),
)


def trial_seeds(seed: int, experiment: int, subject: str, n: int) -> list[np.random.SeedSequence]:
    """Independent per-trial seed sequences for one table row."""
    digits = [int(c) for c in subject if c.isdigit()]
    return np.random.SeedSequence([seed, experiment, *digits]).spawn(n)


def iter_trials(
    rows: Iterable[tuple[int, str, int]],
    noise: NoiseModel,
    seed: int,
    config: TrialConfig = TrialConfig(),
    duration: float = 30.0,
    fps: float = 5.0,
    subject_profiles: Optional[Mapping[str, str]] = None,
):
    """Yield (experiment, subject label, trial index, TrialOutcome) for every trial."""
    for experiment, subject, n in rows:
        names = ["1", "2"] if experiment == 5 else [subject]
        scen = scenario_for(experiment, names, duration, fps, subject_profiles)
        for k, rng_seed in enumerate(trial_seeds(seed, experiment, subject, n)):
            outcome = run_trial(scen, noise, config, seed=rng_seed)
            yield experiment, subject, k, outcome


def success_table(
    rows: Iterable[tuple[int, str, int]] = PROTOCOL_ROWS,
    noise: NoiseModel = NoiseModel(),
    seed: int = 0,
    config: TrialConfig = TrialConfig(),
    duration: float = 30.0,
    fps: float = 5.0,
    subject_profiles: Optional[Mapping[str, str]] = None,
) -> list[TableRow]:
    rows = list(rows)
    for _, _, n in rows:
        if n < 1:
            raise ValueError("every table row needs at least one trial")
    counts: dict[tuple[int, str], list[int]] = {}
    for exp, subj, _, outcome in iter_trials(rows, noise, seed, config, duration, fps, subject_profiles):
        c = counts.setdefault((exp, subj), [0, 0])
        c[0] += 1
        c[1] += int(outcome.success)
    return [TableRow(exp, counts[(exp, subj)][0], subj, counts[(exp, subj)][1]) for exp, subj, _ in rows]
