"""``faps`` command line.

Exit codes: 0 success, 2 usage / config / input errors, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .geometry import AlignmentPolicy, PolicyError, clip_policy, enumerate_space
from .imaging import CanvasAligner, ImageError, align_direct, read_pnm, write_pnm
from .search import SearchAborted, run_search, trajectory_rows
from .trainers import run_grid

log = logging.getLogger("faps")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


def read_landmarks_csv(path) -> np.ndarray:
    """Rows of ``index,x,y`` with contiguous zero-based indices; optional header."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read landmarks {path}: {exc}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows and [c.strip().lower() for c in rows[0]] == ["index", "x", "y"]:
        rows = rows[1:]
    pts = {}
    for lineno, row in enumerate(rows, 1):
        if len(row) != 3:
            raise UsageError(f"{path}: row {lineno} needs 3 fields, got {len(row)}")
        try:
            idx, x, y = int(row[0]), float(row[1]), float(row[2])
        except ValueError as exc:
            raise UsageError(f"{path}: row {lineno}: {exc}") from exc
        if idx in pts:
            raise UsageError(f"{path}: duplicate index {idx}")
        if not (np.isfinite(x) and np.isfinite(y)):
            raise UsageError(f"{path}: row {lineno} has non-finite coordinates")
        pts[idx] = (x, y)
    if sorted(pts) != list(range(len(pts))):
        raise UsageError(f"{path}: indices must be contiguous from 0")
    if len(pts) < 2:
        raise UsageError(f"{path}: need at least two landmarks")
    return np.array([pts[i] for i in range(len(pts))])


def write_landmarks_csv(points, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y"])
        for i, (x, y) in enumerate(points):
            w.writerow([i, repr(float(x)), repr(float(y))])


def _num(v: float) -> str:
    return f"{v:g}"


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.io.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_space(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    cands = enumerate_space(cfg.space)
    print(len(cands), file=out)
    print("m,delta,left,top,side", file=out)
    for p in cands:
        b = cfg.space.box(p)
        print(f"{p.m},{p.delta},{_num(b.left)},{_num(b.top)},{_num(b.side)}", file=out)
    return EXIT_OK


def parse_policy(text: str) -> AlignmentPolicy:
    try:
        m, d = (int(v) for v in text.replace("{", "").replace("}", "").split(","))
        return AlignmentPolicy(m, d)
    except (ValueError, PolicyError) as exc:
        raise UsageError(f"policy must look like 'M,DELTA', got {text!r}") from exc


def cmd_align(cfg: RunConfig, args, out=None) -> int:
    out = out or sys.stdout
    policy = parse_policy(args.policy)
    if not cfg.space.contains(policy):
        suggestion = clip_policy(policy, cfg.space)
        raise UsageError(f"policy {policy} is not in the search space; nearest valid policy is {suggestion}")
    try:
        img = read_pnm(args.image)
    except OSError as exc:
        raise UsageError(f"cannot read image {args.image}: {exc}") from exc
    landmarks = read_landmarks_csv(args.landmarks)
    base = cfg.template
    if len(landmarks) != len(base.landmarks):
        raise UsageError(f"{len(landmarks)} landmarks given, template has {len(base.landmarks)}")

    results = {}
    if args.path in ("direct", "both"):
        results["direct"] = align_direct(img, landmarks, policy, base)
    if args.path in ("canvas", "both"):
        results["canvas"] = CanvasAligner(img, landmarks, base).align(policy)

    output = Path(args.output)
    if args.path == "both":
        write_pnm(results["canvas"], output)
        write_pnm(results["direct"], output.with_name(output.stem + "_direct" + output.suffix))
    else:
        write_pnm(results[args.path], output)
    if args.report:
        if args.path != "both":
            raise UsageError("--report needs --path both")
        diff = np.abs(results["direct"].pixels - results["canvas"].pixels)
        print(f"max_abs_diff={diff.max():.6f}", file=out)
        print(f"mean_abs_diff={diff.mean():.6f}", file=out)
    return EXIT_OK


def cmd_search(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    out_dir = _out_dir(cfg)
    trainer = cfg.trainer.build()
    with open(out_dir / cfg.io.events, "w") as sink:
        try:
            result = run_search(cfg.search, cfg.space, trainer, sink=sink)
        except SearchAborted as exc:
            log.error("%s; partial event log kept at %s", exc, out_dir / cfg.io.events)
            return EXIT_RUNTIME
    summary = result.to_json()
    summary["grid_equivalent_steps"] = len(enumerate_space(cfg.space)) * cfg.search.total_epochs
    _dump_json(summary, out_dir / cfg.io.result)
    print(f"best_policy={result.best_policy.m},{result.best_policy.delta} best_accuracy={result.best_accuracy:.6f}", file=out)
    return EXIT_OK


def cmd_grid(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    out_dir = _out_dir(cfg)
    trainer = cfg.trainer.build()
    try:
        result = run_grid(cfg.space, trainer, cfg.search.total_epochs)
    except Exception as exc:
        log.error("grid run failed: %r", exc)
        return EXIT_RUNTIME
    with open(out_dir / cfg.io.grid, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "delta", "accuracy"])
        for p, acc in result.table:
            w.writerow([p.m, p.delta, repr(acc)])
    _dump_json(result.to_json(), out_dir / cfg.io.result)
    print(f"best_policy={result.best_policy.m},{result.best_policy.delta} best_accuracy={result.best_accuracy:.6f}", file=out)
    return EXIT_OK


def read_event_log(path) -> List[dict]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read event log {path}: {exc}") from exc
    events = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}:{n}: {exc}") from exc
        if rec.get("kind") != "header":
            events.append(rec)
    return events


def cmd_report(log_path, dest: Optional[Path], out=None) -> int:
    out = out or sys.stdout
    rows = trajectory_rows(read_event_log(log_path))
    fh = open(dest, "w", newline="") if dest is not None else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "member_id", "m", "delta", "val_acc"])
        for epoch, member, m, d, acc in rows:
            w.writerow([epoch, member, m, d, repr(acc)])
    finally:
        if dest is not None:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faps", description="Face alignment policy search toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults when omitted)")
    common.add_argument("--out", help="output directory (overrides io.out_dir)")
    common.add_argument("--seed", type=int, help="master seed (overrides search.seed)")
    common.add_argument("--mode", choices=("seq", "async"), help="scheduler (overrides search.mode)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("space", parents=[common], help="list candidate policies")
    p = sub.add_parser("align", parents=[common], help="align one image to a policy")
    p.add_argument("--image", required=True, help="P5/P6 input image")
    p.add_argument("--landmarks", required=True, help="landmark CSV (index,x,y)")
    p.add_argument("--policy", required=True, help="policy as M,DELTA")
    p.add_argument("--output", required=True, help="output PNM path")
    p.add_argument("--path", choices=("direct", "canvas", "both"), default="canvas")
    p.add_argument("--report", action="store_true", help="with --path both, print pixel differences")
    sub.add_parser("search", parents=[common], help="run the population search")
    sub.add_parser("grid", parents=[common], help="run the exhaustive grid oracle")
    p = sub.add_parser("report", parents=[common], help="event log -> per-epoch trajectory CSV")
    p.add_argument("--log", required=True, help="events.jsonl from a search run")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("FAPS_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(seed=args.seed, mode=args.mode, out_dir=args.out)
        if args.command == "space":
            return cmd_space(cfg)
        if args.command == "align":
            return cmd_align(cfg, args)
        if args.command == "search":
            return cmd_search(cfg)
        if args.command == "grid":
            return cmd_grid(cfg)
        dest = Path(args.out) / cfg.io.trajectory if args.out else None
        if dest is not None:
            dest.parent.mkdir(parents=True, exist_ok=True)
        return cmd_report(args.log, dest)
    except (ConfigError, UsageError, PolicyError, ImageError, ValueError) as exc:
        print(f"faps: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"faps: runtime failure: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
