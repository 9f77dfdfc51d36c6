"""Command-line entry point: evaluate, simulate, monitor, report.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import subprocess
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, load_config
from .formats import LabelParseError, ReplayError, parse_labels, read_replay, write_jsonl
from .fsm import AlertMessage
from .metrics import EvaluationError, build_report, pool_matches
from .pipeline import Pipeline
from .report import (
    collect_models,
    curve_csv,
    published_map_fixture,
    published_success_fixture,
    read_success_csv,
    render_document,
    render_success_table,
    success_csv,
)
from .sim import PROTOCOL_ROWS, iter_trials, TableRow

log = logging.getLogger("ppewatch")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def cmd_evaluate(args) -> int:
    gt_dir, pred_dir, out = Path(args.gt), Path(args.pred), Path(args.out)
    if not gt_dir.is_dir():
        raise UsageError(f"ground-truth directory not found: {gt_dir}")
    gt_files = sorted(gt_dir.glob("*.txt"))
    if not gt_files:
        raise DataError(f"no label files in {gt_dir}")
    if not 0.0 < args.iou < 1.0:
        raise UsageError("--iou must lie in (0, 1)")

    images, errors = [], []
    for gt_path in gt_files:
        pred_path = pred_dir / gt_path.name
        try:
            gts = parse_labels(gt_path, expect_confidence=False)
            preds = parse_labels(pred_path, expect_confidence=True) if pred_path.exists() else []
        except (LabelParseError, OSError, UnicodeDecodeError) as exc:
            errors.append(str(exc))
            log.error("skipping %s: %s", gt_path.stem, exc)
            continue
        images.append((preds, gts))
    if not images:
        raise DataError("no readable image pairs")

    pooled = pool_matches(images, args.iou)
    try:
        report = build_report(pooled)
    except EvaluationError as exc:
        raise DataError(str(exc)) from None

    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    if args.model:
        doc["model"] = args.model
    doc["errors"] = errors
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    curves = report.curves
    for series in (curves.f1, curves.precision, curves.recall, report.pr_curve):
        (out / f"{series.name}.csv").write_text(curve_csv(series), encoding="utf-8")
    print(f"images={report.n_images} mAP50={report.map50:.4f}")
    for cat, ap in report.ap.items():
        if ap is not None:
            print(f"  {cat.label:<15} AP50={ap:.4f}  n={report.instances[cat]}")
    if report.best_f1_confidence is not None:
        print(f"best F1={report.best_f1:.4f} at confidence {report.best_f1_confidence:.4f} ({report.aggregate_mode} average)")
    return EXIT_DATA if errors else EXIT_OK


def _protocol_rows(experiment: str, trials: Optional[int]):
    if experiment == "all":
        rows = list(PROTOCOL_ROWS)
    else:
        try:
            exp = int(experiment)
        except ValueError:
            raise UsageError(f"--experiment must be 1-5 or 'all', got {experiment!r}") from None
        if exp not in (1, 2, 3, 4, 5):
            raise UsageError(f"--experiment must be 1-5 or 'all', got {experiment!r}")
        rows = [r for r in PROTOCOL_ROWS if r[0] == exp]
    if trials is not None:
        if trials < 1:
            raise UsageError("--trials must be >= 1")
        rows = [(e, s, trials) for e, s, _ in rows]
    return rows


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    rows = _protocol_rows(args.experiment, args.trials)
    seed = cfg.seed if args.seed is None else args.seed
    out = Path(args.out)
    tdir = out / "transcripts"
    tdir.mkdir(parents=True, exist_ok=True)

    counts: dict[tuple[int, str], list[int]] = {}
    for exp, subj, k, outcome in iter_trials(
        rows, cfg.noise, seed, cfg.trial, cfg.duration, cfg.fps, cfg.subject_profiles
    ):
        c = counts.setdefault((exp, subj), [0, 0])
        c[0] += 1
        c[1] += int(outcome.success)
        tag = subj.replace(" and ", "-")
        write_jsonl(outcome.transcript, tdir / f"exp{exp}_subj{tag}_trial{k:03d}.jsonl")
    table = [TableRow(e, counts[(e, s)][0], s, counts[(e, s)][1]) for e, s, _ in rows]

    (out / "success_table.csv").write_text(success_csv(table), encoding="utf-8")
    header = (
        f"seed={seed} duration={cfg.duration:g}s fps={cfg.fps:g} success_window={cfg.success_window:g}s "
        f"confirm_frames={cfg.risk.confirm_frames} clear_frames={cfg.risk.clear_frames} "
        f"confidence_floor={cfg.risk.confidence_floor:g} resume_policy=resume-on-clear\n"
    )
    text = header + "\n" + render_success_table(table)
    (out / "success_table.md").write_text(text, encoding="utf-8")
    (out / "run_config.txt").write_text(cfg.dump(), encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _external_alert(command: str):
    argv = shlex.split(command)

    def sink(alert: AlertMessage) -> None:
        try:
            subprocess.run(argv + [alert.text], check=False, timeout=10)
        except (OSError, subprocess.SubprocessError) as exc:
            log.warning("alert command failed: %s", exc)

    return sink


def cmd_monitor(args) -> int:
    cfg = load_config(args.config)
    try:
        frames = read_replay(args.replay)
    except OSError as exc:
        raise DataError(f"cannot read replay: {exc}") from None
    except ReplayError as exc:
        raise DataError(str(exc)) from None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    alert_lines: list[str] = []

    def to_stdout(alert: AlertMessage) -> None:
        ev = alert.event
        line = f"[frame {ev.frame_id} t={ev.timestamp:.3f}] subject {ev.subject}: {alert.text}"
        alert_lines.append(line)
        print(line, flush=True)

    sinks = [to_stdout]
    if cfg.alert_command:
        sinks.append(_external_alert(cfg.alert_command))
    pipe = Pipeline(cfg.pipeline, alert_sinks=sinks)
    result = pipe.run(frames, mode=args.mode)

    (out / "alerts.log").write_text("".join(l + "\n" for l in alert_lines), encoding="utf-8")
    write_jsonl(
        (
            {"frame_id": fid, "timestamp": ts, "linear": cmd.linear, "angular": cmd.angular,
             "alerts": [a.text for a in cmd.alerts]}
            for fid, ts, cmd in result.commands
        ),
        out / "commands.jsonl",
    )
    write_jsonl(result.transcript, out / "transcript.jsonl")
    (out / "bus_stats.json").write_text(json.dumps(result.stats.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"frames={len(frames)} alerts={len(alert_lines)}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    models: dict = {}
    tables: list = []
    if args.published:
        models.update(published_map_fixture())
        tables.append(("Success rate per experiment (published fixture)", published_success_fixture()))
    if args.input:
        src = Path(args.input)
        if not src.is_dir():
            raise UsageError(f"report input directory not found: {src}")
        try:
            models.update(collect_models(sorted(src.glob("*.json"))))
            for csv_path in sorted(src.glob("*.csv")):
                text = csv_path.read_text(encoding="utf-8")
                if text.startswith("experiment,"):
                    tables.append((f"Success rate per experiment ({csv_path.stem})", read_success_csv(text)))
        except (ValueError, KeyError, OSError) as exc:
            raise DataError(str(exc)) from None
    if not models and not tables:
        raise DataError("nothing to report")
    doc = render_document(models, tables)
    if args.out:
        Path(args.out).write_text(doc, encoding="utf-8")
    sys.stdout.write(doc)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ppewatch", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("evaluate", help="AP50/mAP50 and confidence curves from label directories")
    e.add_argument("--gt", required=True, help="directory of ground-truth label files")
    e.add_argument("--pred", required=True, help="directory of prediction label files (6th field = confidence)")
    e.add_argument("--iou", type=float, default=0.5)
    e.add_argument("--out", required=True)
    e.add_argument("--model", help="model name recorded in the report")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", help="run the five-experiment protocol and tabulate success rates")
    s.add_argument("--experiment", default="all")
    s.add_argument("--trials", type=int, help="trials per table row (default: protocol counts)")
    s.add_argument("--seed", type=int)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("monitor", help="feed a detection replay through the decision and behavior nodes")
    m.add_argument("--replay", required=True)
    m.add_argument("--config")
    m.add_argument("--out", required=True)
    m.add_argument("--mode", choices=("deterministic", "free"), default="deterministic")
    m.set_defaults(func=cmd_monitor)

    r = sub.add_parser("report", help="render AP50 and success-rate tables as markdown")
    r.add_argument("--in", dest="input", help="directory of report JSON / fixture JSON / success-table CSV")
    r.add_argument("--published", action="store_true", help="include the published result fixtures")
    r.add_argument("--out", help="also write the document to this file")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"ppewatch: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"ppewatch: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
