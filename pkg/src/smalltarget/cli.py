"""Command-line entry point: ``smalltarget {run,calibrate,experiment,generate}``.

Exit codes: 0 success, 2 unreadable input or unknown experiment, 3 model
invariant violation, 4 calibration failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .evalkit import InvalidInputError, extract_detections, roc_sweep
from .experiments import EXPERIMENTS, UnknownExperimentError, calibrate_for, run_experiment, truth_by_frame
from .kernels import InvalidParameterError, InvalidStateError
from .lptc import CalibrationError, LptcBankConfig, TuningTable
from .pipeline import Detector, ModelConfig
from .stmd import FeedbackMode
from .synthgen import SceneError, SceneSpec, initial_video_spec, iter_frames

log = logging.getLogger("smalltarget")

EXIT_INPUT = 2
EXIT_INVARIANT = 3
EXIT_CALIBRATION = 4

#: Without --threshold, detections are maxima above this fraction of the
#: largest post-warm-up response.
DEFAULT_RELATIVE_THRESHOLD = 0.1

LAYER_NAMES = ("P", "L", "tm3", "tm2", "tm1", "F", "Q")


class InputError(Exception):
    pass


def _model_config(args) -> ModelConfig:
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        cfg = ModelConfig.from_dict(data)
    else:
        cfg = ModelConfig()
    if getattr(args, "betas", None):
        betas = tuple(int(b) for b in args.betas.split(","))
        cfg = ModelConfig(cfg.early, cfg.stmd, LptcBankConfig(betas, cfg.bank.directions, cfg.bank.delay))
    if getattr(args, "feedback", None):
        cfg = cfg.with_mode(args.feedback)
    return cfg


def _load_scene(path, seed) -> SceneSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read scene {path}: {exc}") from exc
    if seed is not None:
        data["seed"] = seed
    try:
        return SceneSpec.from_dict(data)
    except TypeError as exc:
        raise InputError(f"bad scene {path}: {exc}") from exc


def _tuning(args, config: ModelConfig, default_path=None) -> TuningTable:
    """Load the tuning table, calibrating (and saving) when the file is absent."""
    path = Path(args.tuning) if args.tuning else default_path
    if path is not None and path.exists():
        try:
            table = TuningTable.from_csv(path)
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot read tuning table {path}: {exc}") from exc
        if table.betas != config.bank.betas:
            raise InputError(f"tuning table betas {table.betas} do not match model betas {config.bank.betas}")
        return table
    log.info("calibrating LPTC tuning curves")
    table = calibrate_for(config)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(path)
    return table


def _write_config(path, config: ModelConfig) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


class _LayerDump:
    """Per-layer PGM maps, each rescaled to 0..255 with the affine map
    ``value = offset + scale * pixel`` recorded in ``scale.csv``."""

    def __init__(self, root: Path):
        self.root = root
        self.rows = {name: [] for name in LAYER_NAMES}
        for name in LAYER_NAMES:
            (root / name).mkdir(parents=True, exist_ok=True)

    def add(self, index: int, layers: dict) -> None:
        for name in LAYER_NAMES:
            img = np.asarray(layers[name], dtype=np.float64)
            lo, hi = float(img.min()), float(img.max())
            scale = (hi - lo) / 255.0 if hi > lo else 1.0
            io.write_pgm(self.root / name / io.frame_name(index), (img - lo) / scale)
            self.rows[name].append((index, lo, scale))

    def close(self) -> None:
        for name, rows in self.rows.items():
            with open(self.root / name / "scale.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["frame", "offset", "scale"])
                for index, lo, scale in rows:
                    w.writerow([index, repr(lo), repr(scale)])


def cmd_run(args) -> int:
    config = _model_config(args)
    if args.dump_config:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return 0
    if bool(args.input) == bool(args.scene):
        raise InputError("give exactly one of --input DIR or --scene FILE")
    truth = None
    if args.scene:
        spec = _load_scene(args.scene, args.seed)
        if abs(spec.dt - config.early.dt) > 1e-12:
            config = ModelConfig(replace(config.early, dt=spec.dt), replace(config.stmd, dt=spec.dt), config.bank)
        frames_iter = ((f, rows) for f, rows in iter_frames(spec))
        truth = {}
        shape = (spec.height, spec.width)
    else:
        try:
            paths = io.list_frames(args.input)
            first = io.read_pgm(paths[0])
        except (OSError, io.FormatError) as exc:
            raise InputError(str(exc)) from exc
        shape = first.shape
        frames_iter = ((io.read_pgm(p), None) for p in paths)
        if args.truth:
            try:
                truth = io.read_truth_csv(args.truth)
            except (OSError, KeyError, ValueError) as exc:
                raise InputError(f"cannot read truth {args.truth}: {exc}") from exc

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tuning = None
    if config.stmd.mode is FeedbackMode.SPATIO_TEMPORAL:
        tuning = _tuning(args, config)
    detector = Detector(shape, config, tuning)
    dump = _LayerDump(out / "layers") if args.dump_layers else None

    cands = {}
    for i, (frame, rows) in enumerate(frames_iter):
        if frame.shape != shape:
            raise InputError(f"frame {i} has shape {frame.shape}, expected {shape}")
        if rows is not None:
            truth.setdefault(i, []).extend((x, y) for _, _, x, y in rows)
        res = detector.step(frame, keep_layers=dump is not None)
        if not np.all(np.isfinite(res.Q)):
            raise FloatingPointError(f"non-finite response at frame {i}")
        if dump is not None:
            dump.add(i, res.layers)
        if not res.warmup:
            cands[i] = extract_detections(res.Q, 0.0, args.nms_radius)
    if dump is not None:
        dump.close()

    top = max((c[2] for v in cands.values() for c in v), default=0.0)
    threshold = args.threshold if args.threshold is not None else DEFAULT_RELATIVE_THRESHOLD * top
    dets = {f: [c for c in v if c[2] >= threshold] for f, v in cands.items()}
    io.write_detections_csv(out / "detections.csv", dets)
    _write_config(out / "config.json", config)
    scored = sorted(cands)
    if truth is not None:
        roc = roc_sweep(cands, {f: truth.get(f, []) for f in scored}, args.roc_steps, args.nms_radius, scored)
        io.write_roc_csv(out / "roc.csv", roc)
        print(f"DR at F_A=5: {roc.dr_at_fa(5.0):.4f}")
    print(f"{len(scored)} scored frames, {sum(map(len, dets.values()))} detections at threshold {threshold:.6g}")
    return 0


def cmd_calibrate(args) -> int:
    config = _model_config(args)
    if args.dump_config:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return 0
    path = Path(args.tuning) if args.tuning else Path(args.out) / "tuning.csv"
    table = calibrate_for(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path)
    pref = ", ".join(f"{b}:{v:g}" for b, v in zip(table.betas, table.preferred_velocities()))
    print(f"wrote {path}; preferred velocities (beta:px/s) {pref}")
    return 0


def cmd_experiment(args) -> int:
    if args.name not in EXPERIMENTS:
        print(f"error: unknown experiment {args.name!r}; choose from {', '.join(EXPERIMENTS)}", file=sys.stderr)
        return EXIT_INPUT
    config = _model_config(args)
    if args.dump_config:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return 0
    out = Path(args.out)
    points = args.points.split(",") if args.points else None
    modes = args.feedback_modes.split(",") if args.feedback_modes else None
    tuning = None
    if modes is None or FeedbackMode.SPATIO_TEMPORAL.value in modes:
        tuning = _tuning(args, config, default_path=out / "tuning.csv")
    kw = {"modes": modes} if modes else {}
    summary = run_experiment(args.name, out, config, tuning, args.seed or 0, args.roc_steps, args.nms_radius,
                             points, **kw)
    _write_config(out / "config.json", config)
    for label, mode, dr in summary:
        print(f"{label:28s} {mode:16s} DR@FA5={dr:.4f}")
    return 0


def cmd_generate(args) -> int:
    spec = _load_scene(args.scene, args.seed) if args.scene else initial_video_spec(seed=args.seed or 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = []
    frames_dir = out / "frames"
    frames_dir.mkdir(exist_ok=True)
    for i, (frame, rows) in enumerate(iter_frames(spec)):
        io.write_pgm(frames_dir / io.frame_name(i), frame)
        truth.extend(rows)
    io.write_truth_csv(out / "truth.csv", truth)
    (out / "scene.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {spec.n_frames} frames to {frames_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smalltarget", description="Small moving target detection on frame sequences.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--config", metavar="FILE", help="model parameters as JSON (see --dump-config)")
    model.add_argument("--betas", help="comma-separated LPTC correlation distances")
    model.add_argument("--tuning", metavar="FILE", help="tuning table CSV; calibrated and written if absent")
    model.add_argument("--dump-config", action="store_true", help="print the effective model config and exit")
    model.add_argument("--seed", type=int)

    scoring = argparse.ArgumentParser(add_help=False)
    scoring.add_argument("--nms-radius", type=int, default=5)
    scoring.add_argument("--roc-steps", type=int, default=100)

    modes = [m.value for m in FeedbackMode]
    run = sub.add_parser("run", parents=[model, scoring], help="run the detector on frames or a scene")
    run.add_argument("--input", metavar="DIR", help="directory of grayscale PGM frames")
    run.add_argument("--scene", metavar="FILE", help="scene spec JSON to synthesize")
    run.add_argument("--truth", metavar="FILE", help="ground-truth CSV for --input runs")
    run.add_argument("--feedback", choices=modes, help="feedback mode (default: the config's, spatio-temporal)")
    run.add_argument("--out", metavar="DIR", default="out")
    run.add_argument("--threshold", type=float)
    run.add_argument("--dump-layers", action="store_true", help="write per-layer maps as PGM")
    run.set_defaults(func=cmd_run)

    cal = sub.add_parser("calibrate", parents=[model], help="measure LPTC tuning curves")
    cal.add_argument("--out", metavar="DIR", default="out")
    cal.set_defaults(func=cmd_calibrate)

    exp = sub.add_parser("experiment", parents=[model, scoring], help="run a named sweep")
    exp.add_argument("name", help=", ".join(EXPERIMENTS))
    exp.add_argument("--out", metavar="DIR", default="out")
    exp.add_argument("--points", help="comma-separated subset of point labels")
    exp.add_argument("--feedback-modes", help="comma-separated subset of feedback modes")
    exp.set_defaults(func=cmd_experiment)

    gen = sub.add_parser("generate", help="render a synthetic scene to PGM frames")
    gen.add_argument("--scene", metavar="FILE")
    gen.add_argument("--out", metavar="DIR", default="out")
    gen.add_argument("--seed", type=int)
    gen.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, io.FormatError, SceneError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UnknownExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (InvalidParameterError, InvalidStateError, FloatingPointError, ValueError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
