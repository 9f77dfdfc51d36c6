"""Rendering of AP50 tables, success-rate tables and curve CSVs."""

from __future__ import annotations

import csv
import io
import json
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .geometry import Category
from .metrics import CurveSeries
from .sim import TableRow

# Column order and grouping of the published AP50 table.
MAP_TABLE_ORDER: tuple[Category, ...] = (
    Category.HARDHAT,
    Category.NO_HARDHAT,
    Category.NO_MASK,
    Category.NO_SAFETY_VEST,
    Category.PERSON,
    Category.SAFETY_CONE,
    Category.SAFETY_VEST,
    Category.MASK,
    Category.MACHINERY,
    Category.VEHICLE,
)
MAP_TABLE_BLOCK = 4
MISSING = "—"


def _fmt_ap(v: Optional[float]) -> str:
    return MISSING if v is None else f"{v:.3f}"


def render_map_table(models: Mapping[str, Mapping[str, Optional[float]]]) -> str:
    """Markdown AP50 table: one row per model, categories in published order.

    Columns are every category present in any model; a model lacking a
    column (or with an undefined AP) shows a dash.
    """
    present = set()
    for values in models.values():
        present.update(Category.from_label(k) for k in values)
    cols = [c for c in MAP_TABLE_ORDER if c in present]
    lookup = {
        name: {Category.from_label(k): v for k, v in values.items()} for name, values in models.items()
    }
    blocks = []
    for start in range(0, len(cols), MAP_TABLE_BLOCK):
        chunk = cols[start:start + MAP_TABLE_BLOCK]
        lines = [
            "| Architecture | " + " | ".join(c.label for c in chunk) + " |",
            "|---|" + "---|" * len(chunk),
        ]
        for name, vals in lookup.items():
            lines.append(f"| {name} | " + " | ".join(_fmt_ap(vals.get(c)) for c in chunk) + " |")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def format_rate(rate: float) -> str:
    text = f"{100.0 * rate:.1f}".rstrip("0").rstrip(".")
    return text + "%"


SUCCESS_COLUMNS = ("experiment", "number_tests", "tests_subject", "success_rate", "successes")


def render_success_table(rows: Iterable[TableRow]) -> str:
    lines = [
        "| Experiment | Number Tests | Tests Subject | Success rate |",
        "|---|---|---|---|",
    ]
    for r in rows:
        lines.append(f"| {r.experiment} | {r.tests} | {r.subject} | {format_rate(r.success_rate)} |")
    return "\n".join(lines) + "\n"


def success_csv(rows: Iterable[TableRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUCCESS_COLUMNS)
    for r in rows:
        w.writerow([r.experiment, r.tests, r.subject, f"{r.success_rate:.6f}", r.successes])
    return buf.getvalue()


def read_success_csv(text: str) -> list[TableRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        tests = int(rec["number_tests"])
        if rec.get("successes"):
            successes = int(rec["successes"])
        else:
            successes = round(float(rec["success_rate"]) * tests)
        rows.append(TableRow(int(rec["experiment"]), tests, rec["tests_subject"], successes))
    return rows


def curve_csv(series: CurveSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([series.x_label, f"all_{series.aggregate_mode}"] + [c.label for c in series.per_category])
    for row in series.rows():
        w.writerow([f"{v:.6f}" for v in row])
    return buf.getvalue()


def load_fixture(name: str) -> str:
    return resources.files("ppewatch").joinpath("fixtures", name).read_text(encoding="utf-8")


def published_map_fixture() -> dict[str, dict[str, Optional[float]]]:
    return json.loads(load_fixture("table2_map50.json"))["models"]


def published_success_fixture() -> list[TableRow]:
    return read_success_csv(load_fixture("table1_success.csv"))


def collect_models(paths: Sequence[Path]) -> dict[str, dict[str, Optional[float]]]:
    """Gather per-model AP50 maps from fixture files and evaluation reports."""
    models: dict[str, dict[str, Optional[float]]] = {}
    for p in paths:
        data = json.loads(Path(p).read_text(encoding="utf-8"))
        if "models" in data:
            for name, values in data["models"].items():
                models[name] = dict(values)
        elif "ap50" in data:
            models[data.get("model") or Path(p).stem] = dict(data["ap50"])
        else:
            raise ValueError(f"{p}: neither a model fixture nor an evaluation report")
    return models


def render_document(
    models: Mapping[str, Mapping[str, Optional[float]]],
    success_tables: Sequence[tuple[str, Sequence[TableRow]]] = (),
) -> str:
    parts = []
    if models:
        parts.append("## Box mAP50 per category\n\n" + render_map_table(models))
    for title, rows in success_tables:
        parts.append(f"## {title}\n\n" + render_success_table(rows))
    return "\n".join(parts)
