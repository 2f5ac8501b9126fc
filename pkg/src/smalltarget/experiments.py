"""Parameter sweeps and the feedback ablation on synthetic scenes.

Every sweep varies one parameter of the initial video (5x5 target of
luminance 25 moving left at 250 px/s over a background moving left at
250 px/s) and scores each feedback mode by its detection rate at five
false alarms per frame.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .evalkit import RocCurve, candidate_peaks, roc_sweep
from .lptc import TuningTable, calibrate_tuning
from .pipeline import Detector, ModelConfig
from .stmd import FeedbackMode
from .synthgen import SceneSpec, TargetSpec, generate, generate_calibration, initial_video_spec

MODES = (FeedbackMode.NONE, FeedbackMode.TIME_DELAY, FeedbackMode.SPATIO_TEMPORAL)
FA_LEVEL = 5.0


@dataclass(frozen=True)
class SweepPoint:
    label: str
    make_scene: Callable[[int], SceneSpec]


def _initial(seed, **kw) -> SceneSpec:
    return initial_video_spec(seed=seed, **kw)


def _size_point(s):
    return SweepPoint(f"size-{s}x{s}", lambda seed: _initial(seed, target_size=(s, s)))


def _lum_point(lum):
    return SweepPoint(f"luminance-{lum:g}", lambda seed: _initial(seed, target_luminance=float(lum)))


def _tv_point(v):
    # start near the right edge so fast targets stay in frame for 500 ms
    return SweepPoint(
        f"target-velocity-{v:g}",
        lambda seed: _initial(seed, target_velocity=float(v), target_start_position=(235.0, 125.0)),
    )


def _bv_point(v, direction):
    name = "left" if direction == math.pi else "right"
    return SweepPoint(
        f"bg-velocity-{name}-{v:g}",
        lambda seed: _initial(seed, bg_velocity=float(v), bg_direction=direction),
    )


def ablation_scene(seed: int = 0) -> SceneSpec:
    """5x5 dark target at 350 px/s over a background moving at 450 px/s,
    both leftward."""
    return _initial(seed, bg_velocity=450.0, target_velocity=350.0, target_start_position=(235.0, 125.0))


EXPERIMENTS: dict[str, tuple[SweepPoint, ...]] = {
    "size-sweep": tuple(_size_point(s) for s in (1, 3, 5, 9, 13, 17, 21, 25)),
    "luminance-sweep": tuple(_lum_point(v) for v in (0, 25, 50, 75, 100)),
    "target-velocity-sweep": tuple(_tv_point(v) for v in (50, 150, 250, 350, 450)),
    "bg-velocity-sweep": tuple(
        _bv_point(v, d) for d in (math.pi, 0.0) for v in (50, 150, 250, 350, 450, 550)
    ),
    "ablation": (SweepPoint("ablation-350-450", ablation_scene),),
}


class UnknownExperimentError(KeyError):
    pass


def truth_by_frame(rows) -> dict[int, list[tuple[float, float]]]:
    out: dict[int, list[tuple[float, float]]] = {}
    for frame, _tid, x, y in rows:
        out.setdefault(int(frame), []).append((float(x), float(y)))
    return out


def calibrate_for(config: ModelConfig) -> TuningTable:
    """Tuning table for ``config``'s bank, measured at its frame rate."""
    fps = 1000.0 / config.early.dt

    def gen(v, d):
        return generate_calibration(v, d, fps=fps)

    return calibrate_tuning(config.bank, gen, early=config.early)


def run_detector(frames, config: ModelConfig, tuning: TuningTable | None = None, nms_radius: int = 5,
                 shift_override=None):
    """Run one stream; returns post-warm-up NMS candidates keyed by frame."""
    frames = np.asarray(frames)
    det = Detector(frames.shape[1:], config, tuning, shift_override)
    cands = {}
    for i, frame in enumerate(frames):
        res = det.step(frame)
        if res.warmup:
            continue
        if not np.all(np.isfinite(res.Q)):
            raise FloatingPointError(f"non-finite detector output at frame {i}")
        cands[i] = candidate_peaks(res.Q, nms_radius)
    return cands


def evaluate_scene(spec: SceneSpec, config: ModelConfig, mode, tuning: TuningTable | None,
                   n_thresholds: int = 100, nms_radius: int = 5) -> RocCurve:
    frames, rows = generate(spec)
    config = config.with_mode(mode)
    cands = run_detector(frames, config, tuning if config.stmd.mode is FeedbackMode.SPATIO_TEMPORAL else None,
                         nms_radius)
    truth = truth_by_frame(rows)
    scored = sorted(cands)
    return roc_sweep(cands, {f: truth.get(f, []) for f in scored}, n_thresholds, nms_radius, scored)


def run_experiment(name: str, out_dir, config: ModelConfig = ModelConfig(), tuning: TuningTable | None = None,
                   seed: int = 0, n_thresholds: int = 100, nms_radius: int = 5, points=None,
                   modes=MODES) -> list[tuple[str, str, float]]:
    """Run a named sweep, writing ``<label>.csv`` per point and ``summary.csv``.

    Returns the summary rows ``(label, mode, DR at F_A=5)``.
    """
    if name not in EXPERIMENTS:
        raise UnknownExperimentError(name)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    selected = EXPERIMENTS[name]
    if points is not None:
        wanted = set(points)
        selected = tuple(p for p in selected if p.label in wanted)
        missing = wanted - {p.label for p in selected}
        if missing:
            raise UnknownExperimentError(f"unknown points for {name}: {sorted(missing)}")
    modes = tuple(FeedbackMode(m) for m in modes)
    if FeedbackMode.SPATIO_TEMPORAL in modes and tuning is None:
        tuning = calibrate_for(config)
    summary = []
    for point in selected:
        spec = point.make_scene(seed)
        with open(out / f"{point.label}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mode", "threshold", "detection_rate", "false_alarm_rate"])
            for mode in modes:
                roc = evaluate_scene(spec, config, mode, tuning, n_thresholds, nms_radius)
                for thr, dr, fa in roc.rows():
                    w.writerow([mode.value, repr(thr), repr(dr), repr(fa)])
                summary.append((point.label, mode.value, roc.dr_at_fa(FA_LEVEL)))
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "mode", "dr_at_fa5"])
        for label, mode, dr in summary:
            w.writerow([label, mode, repr(dr)])
    return summary
