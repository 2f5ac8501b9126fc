"""Detection extraction and DR/FA scoring of STMD output maps.

A detection is a strict local maximum of ``Q`` above threshold, thinned by
greedy non-maximum suppression.  Detections match ground truth one-to-one
within 5 px; ``D_R = N_t / N_a`` and ``F_A = N_f / N_F`` (false positives
per frame).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import ndimage

MATCH_RADIUS = 5.0
NMS_RADIUS = 5


class InvalidInputError(ValueError):
    pass


@dataclass(frozen=True)
class Metrics:
    n_true: int  # N_t
    n_actual: int  # N_a
    n_false: int  # N_f
    n_frames: int  # N_F

    @property
    def detection_rate(self) -> float:
        return self.n_true / self.n_actual if self.n_actual else 0.0

    @property
    def false_alarm_rate(self) -> float:
        return self.n_false / self.n_frames if self.n_frames else 0.0


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    detection_rate: np.ndarray
    false_alarm_rate: np.ndarray

    def rows(self):
        return zip(self.thresholds.tolist(), self.detection_rate.tolist(), self.false_alarm_rate.tolist())

    def dr_at_fa(self, fa: float = 5.0) -> float:
        """Detection rate at a given false-alarm level, linearly interpolated
        along the curve (the curve is held flat beyond its last point)."""
        far, dr = self.false_alarm_rate, self.detection_rate
        if len(far) == 0:
            return 0.0
        if fa >= far[-1]:
            return float(dr[-1])
        if fa < far[0]:
            return 0.0
        # highest DR among points with F_A <= fa, interpolated towards the next point
        i = int(np.searchsorted(far, fa, side="right")) - 1
        if i + 1 >= len(far) or far[i + 1] == far[i]:
            return float(dr[i])
        w = (fa - far[i]) / (far[i + 1] - far[i])
        return float(dr[i] + w * (dr[i + 1] - dr[i]))


def local_maxima(Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pixels strictly greater than all 8 neighbours (outside counts as -inf)."""
    Q = np.asarray(Q, dtype=np.float64)
    padded = np.pad(Q, 1, mode="constant", constant_values=-np.inf)
    neigh = np.full(Q.shape, -np.inf)
    h, w = Q.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx or dy:
                np.maximum(neigh, padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w], out=neigh)
    ys, xs = np.nonzero(Q > neigh)
    return ys, xs


def _suppress(ys, xs, scores, radius, shape):
    order = np.lexsort((xs, ys, -scores))  # score desc, then (y, x)
    # a kept point blocks its Chebyshev ball; later (weaker) points inside are dropped
    blocked = np.zeros(shape, dtype=bool)
    h, w = shape
    kept = []
    for i in order:
        y, x = int(ys[i]), int(xs[i])
        if blocked[y, x]:
            continue
        kept.append((x, y, float(scores[i])))
        blocked[max(0, y - radius) : min(h, y + radius + 1), max(0, x - radius) : min(w, x + radius + 1)] = True
    return kept


def extract_detections(Q: np.ndarray, threshold: float, nms_radius: int = NMS_RADIUS) -> list[tuple[int, int, float]]:
    """Thresholded, NMS-thinned local maxima of one output map as ``(x, y, score)``."""
    if nms_radius < 1:
        raise InvalidInputError("nms_radius must be >= 1")
    ys, xs = local_maxima(Q)
    scores = np.asarray(Q)[ys, xs]
    keep = scores >= threshold
    return _suppress(ys[keep], xs[keep], scores[keep], nms_radius, np.shape(Q))


def candidate_peaks(Q: np.ndarray, nms_radius: int = NMS_RADIUS, floor: float = 0.0):
    """All NMS survivors above ``floor``.

    Suppression only ever removes weaker maxima, so for any threshold
    ``>= floor`` the detections are exactly the candidates scoring at least
    that threshold.  This is what makes ROC sweeps cheap.
    """
    return extract_detections(Q, floor, nms_radius)


def _match_frame(dets, truths, radius):
    """Greedy one-to-one matching; returns number of matched detections."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][2], dets[i][1], dets[i][0]))
    free = list(range(len(truths)))
    hits = 0
    for i in order:
        x, y, _ = dets[i]
        best, best_d = None, None
        for j in free:
            d = math.hypot(x - truths[j][0], y - truths[j][1])
            if d <= radius and (best_d is None or d < best_d or (d == best_d and j < best)):
                best, best_d = j, d
        if best is not None:
            free.remove(best)
            hits += 1
    return hits


def match_and_score(
    detections: Mapping[int, Sequence[tuple[float, float, float]]],
    truth: Mapping[int, Sequence[tuple[float, float]]],
    frames: Iterable[int] | None = None,
    radius: float = MATCH_RADIUS,
) -> Metrics:
    """Score per-frame detections against per-frame ground-truth centers.

    ``frames`` lists the scored frame indices (warm-up already excluded); by
    default the union of both mappings' keys.  Detections or truths on
    frames outside that set are an error.
    """
    if frames is None:
        frames = sorted(set(detections) | set(truth))
    frames = list(frames)
    fset = set(frames)
    stray = (set(k for k, v in detections.items() if v) | set(k for k, v in truth.items() if v)) - fset
    if stray:
        raise InvalidInputError(f"entries on frames outside the scored range: {sorted(stray)[:5]}")
    n_t = n_a = n_f = 0
    for f in frames:
        dets = list(detections.get(f, ()))
        tr = list(truth.get(f, ()))
        hits = _match_frame(dets, tr, radius)
        n_t += hits
        n_f += len(dets) - hits
        n_a += len(tr)
    return Metrics(n_t, n_a, n_f, len(frames))


def roc_sweep(
    Q_frames: Mapping[int, np.ndarray] | Sequence[np.ndarray],
    truth: Mapping[int, Sequence[tuple[float, float]]],
    n_thresholds: int = 100,
    nms_radius: int = NMS_RADIUS,
    frames: Iterable[int] | None = None,
) -> RocCurve:
    """ROC over thresholds spaced geometrically from ``max Q`` down to
    ``max Q * 1e-4``.  ``Q_frames`` may also be precomputed candidate lists
    (as returned by :func:`candidate_peaks`)."""
    if n_thresholds < 2:
        raise InvalidInputError("n_thresholds must be >= 2")
    if not isinstance(Q_frames, Mapping):
        Q_frames = dict(enumerate(Q_frames))
    if frames is None:
        frames = sorted(Q_frames)
    frames = list(frames)
    cands = {}
    for f in frames:
        q = Q_frames[f]
        cands[f] = q if isinstance(q, list) else candidate_peaks(q, nms_radius, 0.0)
    top = max((c[2] for f in frames for c in cands[f]), default=0.0)
    if not top > 0:
        return RocCurve(np.array([0.0]), np.array([0.0]), np.array([0.0]))
    thresholds = np.geomspace(top, top * 1e-4, n_thresholds)
    dr, fa = [], []
    for thr in thresholds:
        dets = {f: [c for c in cands[f] if c[2] >= thr] for f in frames}
        m = match_and_score(dets, truth, frames)
        dr.append(m.detection_rate)
        fa.append(m.false_alarm_rate)
    return RocCurve(thresholds, np.array(dr), np.array(fa))
