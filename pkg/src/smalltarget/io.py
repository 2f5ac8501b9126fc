"""File formats: binary PGM frames and the CSV tables written by the CLI."""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


_PNM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def read_pgm(path) -> np.ndarray:
    """Read an 8- or 16-bit binary (P5) or ASCII (P2) grayscale PGM.

    Color PPM files (P3/P6) are rejected rather than converted.
    """
    data = Path(path).read_bytes()
    pos = 0
    fields = []
    while len(fields) < 4:
        m = _PNM_TOKEN.match(data, pos)
        if not m:
            raise FormatError(f"{path}: truncated PNM header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    if magic in (b"P3", b"P6"):
        raise FormatError(f"{path}: color image; convert to grayscale first")
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{path}: not a PGM file")
    width, height, maxval = (int(f) for f in fields[1:])
    if magic == b"P2":
        vals = np.array(data[pos:].split()[: width * height], dtype=np.int64)
    else:
        pos += 1  # single whitespace byte after maxval
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        body = data[pos:]
        n = min(width * height, len(body) // np.dtype(dtype).itemsize)
        vals = np.frombuffer(body, dtype=dtype, count=n)
    if vals.size != width * height:
        raise FormatError(f"{path}: expected {width * height} samples, got {vals.size}")
    img = vals.reshape(height, width).astype(np.float64)
    if maxval != 255:
        img *= 255.0 / maxval
    return img


def write_pgm(path, image: np.ndarray) -> None:
    """Write an 8-bit binary PGM; values are rounded and clipped to [0, 255]."""
    img = np.clip(np.rint(np.asarray(image, dtype=np.float64)), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def frame_name(index: int) -> str:
    """1-based zero-padded frame filename."""
    return f"frame_{index + 1:06d}.pgm"


def write_frames(directory, frames) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        write_pgm(directory / frame_name(i), f)


def list_frames(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"input directory not found: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".pgm", ".ppm", ".pnm"))
    if not files:
        raise FileNotFoundError(f"no PGM frames in {directory}")
    return files


def iter_frame_dir(directory):
    for p in list_frames(directory):
        yield read_pgm(p)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_truth_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["frame", "target_id", "x", "y"])
        for frame, tid, x, y in rows:
            w.writerow([frame, tid, repr(float(x)), repr(float(y))])


def read_truth_csv(path) -> dict[int, list[tuple[float, float]]]:
    out: dict[int, list[tuple[float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out.setdefault(int(rec["frame"]), []).append((float(rec["x"]), float(rec["y"])))
    return out


def write_detections_csv(path, detections: dict[int, list[tuple[int, int, float]]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["frame", "x", "y", "score"])
        for frame in sorted(detections):
            for x, y, s in detections[frame]:
                w.writerow([frame, x, y, repr(float(s))])


def read_detections_csv(path) -> dict[int, list[tuple[int, int, float]]]:
    out: dict[int, list[tuple[int, int, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out.setdefault(int(rec["frame"]), []).append((int(rec["x"]), int(rec["y"]), float(rec["score"])))
    return out


def write_roc_csv(path, roc) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["threshold", "detection_rate", "false_alarm_rate"])
        for thr, dr, fa in roc.rows():
            w.writerow([repr(thr), repr(dr), repr(fa)])
