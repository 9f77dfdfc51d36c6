"""YOLO label files and JSON-lines detection replays."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Union

from .geometry import BBox, Category, Detection, GeometryError, GroundTruthBox
from .risk import FramePacket

REPLAY_SCHEMA_VERSION = 1

PathLike = Union[str, Path]


class LabelParseError(ValueError):
    def __init__(self, path, line: int, column: int, message: str):
        self.path, self.line, self.column = str(path), line, column
        super().__init__(f"{message}, line {line}" + (f", column {column}" if column else "") + f" ({path})")


class ReplayError(ValueError):
    pass


def parse_label_line(text: str, expect_confidence: bool, path="<string>", line: int = 1):
    fields = text.split()
    want = 6 if expect_confidence else 5
    if len(fields) != want:
        raise LabelParseError(path, line, 0, f"expected {want} fields, got {len(fields)}")
    try:
        index = int(fields[0])
    except ValueError:
        raise LabelParseError(path, line, 1, f"non-numeric category index {fields[0]!r}") from None
    if not 0 <= index < len(Category):
        raise LabelParseError(path, line, 1, "category index out of range")
    nums = []
    for col, tok in enumerate(fields[1:], 2):
        try:
            nums.append(float(tok))
        except ValueError:
            raise LabelParseError(path, line, col, f"non-numeric value {tok!r}") from None
    try:
        box = BBox(*nums[:4])
        if expect_confidence:
            return Detection(Category(index), box, nums[4])
        return GroundTruthBox(Category(index), box)
    except GeometryError as exc:
        raise LabelParseError(path, line, 0, str(exc)) from None


def parse_labels(path: PathLike, expect_confidence: bool = False) -> list:
    """Read a YOLO label file: ``index cx cy w h`` (+ ``confidence`` for predictions)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if raw.strip():
                out.append(parse_label_line(raw, expect_confidence, path, lineno))
    return out


def format_label(record) -> str:
    b = record.box
    text = f"{int(record.category)} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}"
    if isinstance(record, Detection):
        text += f" {record.confidence:.6f}"
    return text


def write_labels(records: Iterable, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(format_label(r) + "\n")


def frame_to_json(frame: FramePacket) -> dict:
    return {
        "schema_version": REPLAY_SCHEMA_VERSION,
        "frame_id": frame.frame_id,
        "timestamp": frame.timestamp,
        "detections": [
            {
                "category": d.category.label,
                "cx": d.box.cx,
                "cy": d.box.cy,
                "w": d.box.w,
                "h": d.box.h,
                "confidence": d.confidence,
            }
            for d in frame.detections
        ],
    }


def _category(value) -> Category:
    if isinstance(value, int):
        return Category.from_index(value)
    return Category.from_label(str(value))


def frame_from_json(obj: dict) -> FramePacket:
    dets = tuple(
        Detection(_category(d["category"]), BBox(d["cx"], d["cy"], d["w"], d["h"]), d.get("confidence", 1.0))
        for d in obj.get("detections", ())
    )
    return FramePacket(int(obj["frame_id"]), float(obj["timestamp"]), dets)


def write_replay(frames: Iterable[FramePacket], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in frames:
            fh.write(json.dumps(frame_to_json(f), sort_keys=True) + "\n")


def read_replay(path: PathLike) -> list[FramePacket]:
    """Load and validate a whole replay before anything is processed."""
    frames: list[FramePacket] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ReplayError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            version = obj.get("schema_version")
            if version != REPLAY_SCHEMA_VERSION:
                raise ReplayError(
                    f"{path}:{lineno}: schema_version {version!r} unsupported (expected {REPLAY_SCHEMA_VERSION})"
                )
            try:
                frame = frame_from_json(obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise ReplayError(f"{path}:{lineno}: bad frame record: {exc}") from None
            if frames:
                prev = frames[-1]
                if frame.frame_id <= prev.frame_id:
                    raise ReplayError(f"{path}:{lineno}: frame_id {frame.frame_id} not increasing")
                if frame.timestamp < prev.timestamp:
                    raise ReplayError(f"{path}:{lineno}: timestamp decreases")
            frames.append(frame)
    return frames


def write_jsonl(records: Iterable[dict], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
