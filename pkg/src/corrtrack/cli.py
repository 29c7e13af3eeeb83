"""Command-line surface: track one sequence, evaluate results, rank providers.

Configuration values come from defaults, then an optional key=value config
file, then command-line flags (highest precedence).  The CORRTRACK_LOG
environment variable sets the log level.  Exit status: 0 success, 2 for
configuration problems, 3 for data problems.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bench, plots
from . import tracker as _tracker
from .errors import ConfigError, DataError, InvalidInputError
from .features import FeatureProviderConfig
from .semantic import write_mask_pgm

log = logging.getLogger("corrtrack")

CONFIG_KEYS = {
    "learning_rate": float, "cg_iters": int, "first_frame_cg_iters": int,
    "max_samples": int, "search_area_scale": float, "sigma_factor": float,
    "n_scales": int, "scale_step": float, "scale_learning_rate": float,
    "scale_sigma": float, "penalty_bandwidth": int, "max_patch_size": int,
    "newton_iters": int, "hog_cell": int, "features": str, "fmap_dir": str,
    "fcn_block": str, "jobs": int,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CORRTRACK_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidInputError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrtrack",
                                     description="correlation-filter tracking and evaluation")
    sub = parser.add_subparsers(required=True)

    p_track = sub.add_parser("track", help="track one sequence")
    p_track.add_argument("--sequence", required=True, help="sequence directory")
    p_track.add_argument("--features", choices=("hog", "fmap"), default=None)
    p_track.add_argument("--fmap-dir", default=None)
    p_track.add_argument("--fcn-block", default=None)
    p_track.add_argument("--out", required=True, help="output directory")
    p_track.add_argument("--config", default=None, help="key=value config file")
    p_track.add_argument("--dump-masks", action="store_true")
    p_track.add_argument("--dump-scores", action="store_true")
    p_track.add_argument("--diagnostics", action="store_true",
                         help="write per-frame objective/CG residual CSV")
    p_track.set_defaults(func=cmd_track)

    p_eval = sub.add_parser("eval", help="evaluate tracking results")
    p_eval.add_argument("--results", required=True, action="append",
                        help="results directory (repeatable for comparisons)")
    p_eval.add_argument("--dataset", required=True, help="dataset root directory")
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--no-plots", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_rank = sub.add_parser("rank", help="rank feature provider configs")
    p_rank.add_argument("--manifest", required=True,
                        help="JSON list of provider configurations")
    p_rank.add_argument("--dataset", required=True)
    p_rank.add_argument("--out", required=True)
    p_rank.add_argument("--jobs", type=int, default=None)
    p_rank.add_argument("--no-plots", action="store_true")
    p_rank.set_defaults(func=cmd_rank)
    return parser


def load_config_file(path: str | None) -> dict:
    values = {}
    if path is None:
        return values
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{lineno}: expected key=value, got '{line}'")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{p}:{lineno}: unknown key '{key}'")
        try:
            values[key] = CONFIG_KEYS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{p}:{lineno}: bad value for {key}: {raw}") from exc
    return values


def build_tracker_config(values: dict) -> _tracker.TrackerConfig:
    provider = FeatureProviderConfig(
        kind=values.pop("features", "hog"),
        hog_cell=values.pop("hog_cell", 4),
        fmap_dir=values.pop("fmap_dir", None),
        fcn_block=values.pop("fcn_block", "fcn8s_score"))
    values.pop("jobs", None)
    cfg = _tracker.TrackerConfig(provider=provider, **values)
    cfg.validate()
    return cfg


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _config_snapshot(cfg: _tracker.TrackerConfig) -> dict:
    snap = dataclasses.asdict(cfg)
    return snap


def cmd_track(args) -> int:
    values = load_config_file(args.config)
    if args.features is not None:
        values["features"] = args.features
    if args.fmap_dir is not None:
        values["fmap_dir"] = args.fmap_dir
    if args.fcn_block is not None:
        values["fcn_block"] = args.fcn_block
    cfg = build_tracker_config(values)
    if cfg.provider.kind == "fmap" and not Path(cfg.provider.fmap_dir).is_dir():
        raise ConfigError(f"feature directory not found: {cfg.provider.fmap_dir}")

    sequence = bench.load_sequence(args.sequence)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / f"{sequence.name}.jsonl"
    started = time.time()

    records = []
    diagnostics = []
    state = _tracker.init(sequence.load_frame(0), tuple(sequence.boxes[0]), cfg)
    records.append(_record(1, tuple(sequence.boxes[0]), 1.0, state.last_objective))
    diagnostics.append((1, state.last_objective, state.last_residual,
                        state.last_cg_iters))
    _maybe_dump(args, out_dir, state, 1)
    for i in range(1, len(sequence)):
        box, state = _tracker.step(sequence.load_frame(i), state)
        records.append(_record(i + 1, box, state.last_score, state.last_objective))
        diagnostics.append((i + 1, state.last_objective, state.last_residual,
                            state.last_cg_iters))
        _maybe_dump(args, out_dir, state, i + 1)
    elapsed = time.time() - started

    _write_atomic(results_path, "".join(records))
    if args.diagnostics:
        lines = ["frame,objective,residual,iters\n"]
        lines += [f"{f},{o!r},{r!r},{it}\n" for f, o, r, it in diagnostics]
        _write_atomic(out_dir / "diagnostics.csv", "".join(lines))
    manifest = {
        "command": "track",
        "config": _config_snapshot(cfg),
        "inputs": {"sequence": str(Path(args.sequence).resolve()),
                   "fmap_dir": cfg.provider.fmap_dir},
        "outputs": {"results": str(results_path)},
        "versions": {"corrtrack": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "frames": len(sequence),
        "wall_clock_s": elapsed,
        "fps": len(sequence) / elapsed if elapsed > 0 else None,
    }
    _write_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    log.info("tracked %d frames in %.2fs (%.2f fps)", len(sequence), elapsed,
             len(sequence) / max(elapsed, 1e-9))
    return 0


def _record(frame: int, box, score: float, objective: float) -> str:
    x, y, w, h = (float(v) for v in box)
    return json.dumps({"frame": frame, "x": x, "y": y, "w": w, "h": h,
                       "score": float(score), "objective": float(objective)}) + "\n"


def _maybe_dump(args, out_dir: Path, state, frame: int) -> None:
    if args.dump_masks and state.last_mask is not None:
        mask_dir = out_dir / "masks"
        mask_dir.mkdir(exist_ok=True)
        write_mask_pgm(mask_dir / f"frame_{frame:06d}.pgm", state.last_mask)
    if args.dump_scores and state.last_score_grid is not None:
        score_dir = out_dir / "scores"
        score_dir.mkdir(exist_ok=True)
        _write_score_pgm(score_dir / f"frame_{frame:06d}.pgm", state.last_score_grid)


def _write_score_pgm(path: Path, grid: np.ndarray) -> None:
    # window-centred view: the origin bin moves to the grid centre
    view = np.fft.fftshift(grid)
    lo, hi = view.min(), view.max()
    scaled = np.zeros_like(view) if hi <= lo else (view - lo) / (hi - lo)
    arr = np.round(scaled * 255.0).astype(np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    path.write_bytes(header + arr.tobytes())


def read_results_jsonl(path: Path) -> np.ndarray:
    if not path.exists():
        raise DataError(f"missing results file {path}")
    boxes = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            boxes.append((float(rec["x"]), float(rec["y"]),
                          float(rec["w"]), float(rec["h"])))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: malformed record: {exc}") from exc
    return np.asarray(boxes, dtype=float)


def _load_dataset(root: str) -> list[bench.Sequence]:
    root_path = Path(root)
    if not root_path.is_dir():
        raise DataError(f"dataset root not found: {root_path}")
    dirs = sorted(p for p in root_path.iterdir() if (p / "img").is_dir())
    if not dirs:
        raise DataError(f"no sequences under {root_path}")
    return [bench.load_sequence(d) for d in dirs]


def _write_report(report: bench.EvalReport, out_dir: Path) -> None:
    payload = {
        "label": report.label,
        "precision_at_20": report.precision_at_20,
        "success_at_half": report.success_at_half,
        "auc": report.auc,
        "average": report.average_score,
        "per_attribute": report.per_attribute,
        "failures": report.failures,
        "sequences": [{
            "name": r.name, "precision_at_20": r.precision_at_20,
            "success_at_half": r.success_at_half, "auc": r.auc,
            "attributes": sorted(r.attributes), "error": r.error,
        } for r in report.sequences],
    }
    _write_atomic(out_dir / f"report_{report.label}.json",
                  json.dumps(payload, indent=2) + "\n")
    for kind, curve in (("precision", report.mean_precision),
                        ("success", report.mean_success)):
        lines = ["threshold,value\n"]
        lines += [f"{t!r},{v!r}\n" for t, v in zip(curve.thresholds, curve.values)]
        _write_atomic(out_dir / f"{kind}_{report.label}.csv", "".join(lines))


def _write_comparison(reports: list[bench.EvalReport], out_dir: Path,
                      filename: str, sort_key) -> None:
    rows = sorted(reports, key=sort_key, reverse=True)
    lines = ["label,precision_at_20,success_at_half,auc,average\n"]
    lines += [f"{r.label},{r.precision_at_20!r},{r.success_at_half!r},"
              f"{r.auc!r},{r.average_score!r}\n" for r in rows]
    _write_atomic(out_dir / filename, "".join(lines))


def cmd_eval(args) -> int:
    dataset = {seq.name: seq for seq in _load_dataset(args.dataset)}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for results_dir in args.results:
        rd = Path(results_dir)
        if not rd.is_dir():
            raise DataError(f"results directory not found: {rd}")
        per_sequence = []
        for name, seq in sorted(dataset.items()):
            boxes = read_results_jsonl(rd / f"{name}.jsonl")
            if len(boxes) != len(seq):
                raise DataError(f"{rd / f'{name}.jsonl'}: {len(boxes)} records "
                                f"for {len(seq)} frames")
            per_sequence.append(bench.evaluate_sequence(seq, boxes))
        reports.append(bench.summarize(per_sequence, rd.name))
    for report in reports:
        _write_report(report, out_dir)
        print(f"{report.label}: precision@20={report.precision_at_20:.4f} "
              f"success@0.5={report.success_at_half:.4f} auc={report.auc:.4f}")
    if len(reports) > 1:
        _write_comparison(reports, out_dir, "comparison.csv", lambda r: r.auc)
    if not args.no_plots:
        plots.render_report_figures(reports, out_dir)
    return 0


def cmd_rank(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise ConfigError(f"manifest not found: {manifest_path}")
    try:
        entries = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{manifest_path}: not valid JSON: {exc}") from exc
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{manifest_path}: expected a non-empty JSON list "
                          f"of provider configs")
    dataset = _load_dataset(args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict) or "features" not in entry:
            raise ConfigError(f"{manifest_path}: entry {index} needs a "
                              f"'features' key")
        entry = dict(entry)
        name = entry.pop("name", f"provider{index}")
        kind = entry["features"]
        if kind in ("gt_echo", "const_box"):
            cfg = _tracker.TrackerConfig()
            tracker_kind = kind
        else:
            cfg = build_tracker_config({k: CONFIG_KEYS[k](v) for k, v in entry.items()
                                        if k in CONFIG_KEYS})
            tracker_kind = "engine"
        jobs = args.jobs or entry.get("jobs") or (os.cpu_count() or 1)
        reports.append(bench.run_ope(dataset, cfg, tracker_kind=tracker_kind,
                                     jobs=int(jobs), label=name))
    ranked = bench.rank_reports(reports)
    _write_comparison(ranked, out_dir, "ranking.csv", lambda r: r.average_score)
    payload = [{"label": r.label, "precision_at_20": r.precision_at_20,
                "success_at_half": r.success_at_half, "auc": r.auc,
                "average": r.average_score} for r in ranked]
    _write_atomic(out_dir / "ranking.json", json.dumps(payload, indent=2) + "\n")
    for r in ranked:
        print(f"{r.label}: precision@20={r.precision_at_20:.4f} "
              f"auc={r.auc:.4f} average={r.average_score:.4f}")
    if not args.no_plots:
        plots.render_report_figures(ranked, out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
