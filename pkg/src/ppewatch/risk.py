"""Per-frame PPE risk assessment and temporal confirmation.

Pipeline per frame: link Person boxes to tracked subjects, attach
equipment/violation boxes to the person they overlap most, derive
instantaneous hazards, then debounce hazards into Raised/Cleared events.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .geometry import BBox, Category, Detection, overlap_over_smaller


class StreamError(ValueError):
    """Frames were presented out of order."""


class Equipment(enum.Enum):
    HARDHAT = (Category.HARDHAT, Category.NO_HARDHAT)
    MASK = (Category.MASK, Category.NO_MASK)
    SAFETY_VEST = (Category.SAFETY_VEST, Category.NO_SAFETY_VEST)

    @property
    def present_category(self) -> Category:
        return self.value[0]

    @property
    def violation_category(self) -> Category:
        return self.value[1]


_EQUIPMENT_OF = {}
for _eq in Equipment:
    _EQUIPMENT_OF[_eq.present_category] = _eq
    _EQUIPMENT_OF[_eq.violation_category] = _eq


class Status(enum.Enum):
    PRESENT = "present"
    VIOLATION = "violation"
    UNKNOWN = "unknown"


class EventState(enum.Enum):
    RAISED = "raised"
    CLEARED = "cleared"


DEFAULT_RULES = (Category.NO_HARDHAT, Category.NO_SAFETY_VEST)


@dataclass(frozen=True)
class RiskConfig:
    confidence_floor: float = 0.5
    association_overlap_min: float = 0.25
    confirm_frames: int = 3
    clear_frames: int = 5
    link_gate: float = 0.2
    rules: tuple[Category, ...] = DEFAULT_RULES

    def __post_init__(self):
        if not 0.0 < self.confidence_floor < 1.0:
            raise ValueError("confidence_floor must lie in (0, 1)")
        if not 0.0 <= self.association_overlap_min <= 1.0:
            raise ValueError("association_overlap_min must lie in [0, 1]")
        if self.confirm_frames < 1 or self.clear_frames < 1:
            raise ValueError("confirm_frames and clear_frames must be >= 1")
        if self.link_gate <= 0:
            raise ValueError("link_gate must be positive")
        rules = tuple(Category(r) for r in self.rules)
        for r in rules:
            if not r.is_violation:
                raise ValueError(f"{r.label} is not a violation category")
        object.__setattr__(self, "rules", rules)


@dataclass(frozen=True)
class FramePacket:
    frame_id: int
    timestamp: float
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))


@dataclass(frozen=True)
class SubjectAssessment:
    subject: int
    person: BBox
    status: dict[Equipment, Status]
    support: dict[Equipment, tuple[int, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class RiskEvent:
    kind: Category
    subject: int
    frame_id: int
    timestamp: float
    state: EventState

    @property
    def key(self) -> tuple[int, Category]:
        return (self.subject, self.kind)


Hazard = tuple[int, Category]


def associate(
    frame: FramePacket, cfg: RiskConfig = RiskConfig(), subject_ids: Optional[Sequence[int]] = None
) -> list[SubjectAssessment]:
    """Attach equipment and violation boxes to Person boxes.

    ``subject_ids`` names the surviving Person detections in frame order;
    by default they are numbered 0, 1, ... Supporting ids in the result
    index into ``frame.detections``.
    """
    kept = [(i, d) for i, d in enumerate(frame.detections) if d.confidence >= cfg.confidence_floor]
    persons = [(i, d) for i, d in kept if d.category == Category.PERSON]
    if subject_ids is None:
        subject_ids = range(len(persons))
    attached: list[dict[Equipment, list[tuple[int, Category]]]] = [{} for _ in persons]
    for i, det in kept:
        eq = _EQUIPMENT_OF.get(det.category)
        if eq is None or not persons:
            continue
        best, best_ov = -1, -1.0
        for k, (_, person) in enumerate(persons):
            ov = overlap_over_smaller(det.box, person.box)
            if ov > best_ov:
                best, best_ov = k, ov
        if best_ov >= cfg.association_overlap_min and best_ov > 0.0:
            attached[best].setdefault(eq, []).append((i, det.category))

    out = []
    for (_, person), sid, eqs in zip(persons, subject_ids, attached):
        status, support = {}, {}
        for eq in Equipment:
            hits = eqs.get(eq, [])
            support[eq] = tuple(i for i, _ in hits)
            if any(c == eq.violation_category for _, c in hits):
                # Explicit violation evidence wins over a conflicting positive box.
                status[eq] = Status.VIOLATION
            elif hits:
                status[eq] = Status.PRESENT
            else:
                status[eq] = Status.UNKNOWN
        out.append(SubjectAssessment(subject=sid, person=person.box, status=status, support=support))
    return out


def evaluate(
    assessments: Iterable[SubjectAssessment], rules: Sequence[Category] = DEFAULT_RULES
) -> frozenset[Hazard]:
    """Instantaneous hazards: one per (subject, violation kind) with status Violation."""
    enabled = set(rules)
    hazards = set()
    for a in assessments:
        for eq, st in a.status.items():
            if st is Status.VIOLATION and eq.violation_category in enabled:
                hazards.add((a.subject, eq.violation_category))
    return frozenset(hazards)


@dataclass
class _Counter:
    hazard_run: int = 0
    clear_run: int = 0
    raised: bool = False


class Debouncer:
    """Confirm hazards after N consecutive frames, clear after M hazard-free frames."""

    def __init__(self, confirm_frames: int = 3, clear_frames: int = 5):
        if confirm_frames < 1 or clear_frames < 1:
            raise ValueError("confirm_frames and clear_frames must be >= 1")
        self.confirm_frames = confirm_frames
        self.clear_frames = clear_frames
        self._counters: dict[Hazard, _Counter] = {}
        self._last_frame: Optional[int] = None

    @property
    def last_frame(self) -> Optional[int]:
        return self._last_frame

    @property
    def active(self) -> frozenset[Hazard]:
        return frozenset(k for k, c in self._counters.items() if c.raised)

    def update(self, hazards: Iterable[Hazard], frame_id: int, timestamp: float = 0.0) -> list[RiskEvent]:
        if self._last_frame is not None and frame_id <= self._last_frame:
            raise StreamError(f"frame {frame_id} arrived after frame {self._last_frame}")
        self._last_frame = frame_id
        hazards = set(hazards)
        events = []
        for key in sorted(set(self._counters) | hazards, key=_hazard_sort_key):
            c = self._counters.setdefault(key, _Counter())
            if key in hazards:
                c.hazard_run += 1
                c.clear_run = 0
                if not c.raised and c.hazard_run >= self.confirm_frames:
                    c.raised = True
                    events.append(RiskEvent(key[1], key[0], frame_id, timestamp, EventState.RAISED))
            else:
                c.hazard_run = 0
                if c.raised:
                    c.clear_run += 1
                    if c.clear_run >= self.clear_frames:
                        c.raised = False
                        c.clear_run = 0
                        events.append(RiskEvent(key[1], key[0], frame_id, timestamp, EventState.CLEARED))
            if not c.raised and c.hazard_run == 0:
                del self._counters[key]
        return events


def _hazard_sort_key(h: Hazard) -> tuple[int, int]:
    return (h[0], int(h[1]))


def debounce_update(debouncer: Debouncer, hazards: Iterable[Hazard], frame_id: int, timestamp: float = 0.0):
    return debouncer.update(hazards, frame_id, timestamp)


class SubjectTracker:
    """Nearest-centroid linking of Person boxes between consecutive frames."""

    def __init__(self, gate: float = 0.2):
        self.gate = gate
        self._prev: list[tuple[int, tuple[float, float]]] = []
        self._next_id = 0

    def link(self, persons: Sequence[BBox]) -> list[int]:
        pairs = []
        for k, box in enumerate(persons):
            for sid, (px, py) in self._prev:
                d = math.hypot(box.cx - px, box.cy - py)
                if d <= self.gate:
                    pairs.append((d, k, sid))
        pairs.sort()
        ids: list[Optional[int]] = [None] * len(persons)
        used = set()
        for d, k, sid in pairs:
            if ids[k] is None and sid not in used:
                ids[k] = sid
                used.add(sid)
        for k in range(len(persons)):
            if ids[k] is None:
                ids[k] = self._next_id
                self._next_id += 1
        self._prev = [(sid, persons[k].center) for k, sid in enumerate(ids)]
        return ids  # type: ignore[return-value]


@dataclass(frozen=True)
class FrameDecision:
    """Everything the decision step derived from one frame."""

    frame_id: int
    timestamp: float
    assessments: tuple[SubjectAssessment, ...]
    hazards: frozenset[Hazard]
    events: tuple[RiskEvent, ...]


class RiskEngine:
    """Single-stream stateful processor: FramePacket in, FrameDecision out."""

    def __init__(self, cfg: RiskConfig = RiskConfig()):
        self.cfg = cfg
        self.tracker = SubjectTracker(cfg.link_gate)
        self.debouncer = Debouncer(cfg.confirm_frames, cfg.clear_frames)

    def process(self, frame: FramePacket) -> FrameDecision:
        persons = [
            d.box for d in frame.detections
            if d.category == Category.PERSON and d.confidence >= self.cfg.confidence_floor
        ]
        # Validate ordering before the tracker mutates its state.
        last = self.debouncer.last_frame
        if last is not None and frame.frame_id <= last:
            raise StreamError(f"frame {frame.frame_id} arrived after frame {last}")
        ids = self.tracker.link(persons)
        assessments = associate(frame, self.cfg, ids)
        hazards = evaluate(assessments, self.cfg.rules)
        events = self.debouncer.update(hazards, frame.frame_id, frame.timestamp)
        return FrameDecision(frame.frame_id, frame.timestamp, tuple(assessments), hazards, tuple(events))
