"""Synthetic small-target videos over rigidly translating textured backgrounds.

Scenes are deterministic given their spec: the procedural background is
band-limited value noise drawn from ``numpy.random.default_rng(seed)`` and
every target is a solid rectangle composited at its rounded analytic
position.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

#: Blur applied to uniform noise when no background image is given.
NOISE_SIGMA = 2.0
#: Mean and standard deviation (gray levels) of the procedural texture.
TEXTURE_MEAN = 128.0
TEXTURE_STD = 40.0

CALIBRATION_SIZE = (250, 250)
CALIBRATION_DURATION = 500.0  # ms
CALIBRATION_SEED = 7


class SceneError(ValueError):
    """Invalid scene description or a target leaving the frame."""


@dataclass
class TargetSpec:
    size: tuple[int, int] = (5, 5)  # (w, h)
    luminance: float = 25.0
    velocity: float = 250.0  # px/s
    direction: float = math.pi  # radians, 0 = +x (rightward), pi/2 = +y (down)
    start_position: tuple[float, float] = (200.0, 125.0)
    start_time: float = 0.0  # ms

    def __post_init__(self):
        self.size = tuple(int(s) for s in self.size)
        self.start_position = tuple(float(p) for p in self.start_position)
        w, h = self.size
        if not (1 <= w <= 50 and 1 <= h <= 50):
            raise SceneError(f"target size must lie in [1, 50], got {self.size}")
        if not 0 <= self.luminance <= 255:
            raise SceneError(f"target luminance must lie in [0, 255], got {self.luminance}")

    def center(self, t_ms: float) -> tuple[float, float]:
        s = (t_ms - self.start_time) / 1000.0 * self.velocity
        return (
            self.start_position[0] + s * math.cos(self.direction),
            self.start_position[1] + s * math.sin(self.direction),
        )


@dataclass
class SceneSpec:
    width: int = 250
    height: int = 250
    fps: float = 1000.0
    duration: float = 500.0  # ms
    background: str | None = None  # path to an 8-bit PGM; None = procedural noise
    bg_velocity: float = 250.0  # px/s
    bg_direction: float = math.pi
    targets: list[TargetSpec] = field(default_factory=list)
    seed: int = 0
    texture_std: float = TEXTURE_STD

    def __post_init__(self):
        self.targets = [t if isinstance(t, TargetSpec) else TargetSpec(**t) for t in self.targets]
        if not self.fps > 0:
            raise SceneError("fps must be > 0")
        if self.width < 1 or self.height < 1:
            raise SceneError("frame must be at least 1x1")
        if self.n_frames < 1:
            raise SceneError("duration must cover at least one frame")

    @property
    def dt(self) -> float:
        """Milliseconds per frame."""
        return 1000.0 / self.fps

    @property
    def n_frames(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9))

    def to_dict(self) -> dict:
        d = asdict(self)
        for t in d["targets"]:
            t["size"] = list(t["size"])
            t["start_position"] = list(t["start_position"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(**d)


def procedural_texture(height: int, width: int, seed: int, std: float = TEXTURE_STD) -> np.ndarray:
    """Periodic band-limited value noise with fixed mean and contrast."""
    rng = np.random.default_rng(seed)
    noise = ndimage.gaussian_filter(rng.uniform(size=(height, width)), NOISE_SIGMA, mode="wrap")
    noise = (noise - noise.mean()) / noise.std()
    return np.clip(TEXTURE_MEAN + std * noise, 0.0, 255.0)


def _background(spec: SceneSpec) -> np.ndarray:
    if spec.background is None:
        return procedural_texture(spec.height, spec.width, spec.seed, spec.texture_std)
    from .io import read_pgm

    img = read_pgm(spec.background).astype(np.float64)
    if img.shape != (spec.height, spec.width):
        reps = (math.ceil(spec.height / img.shape[0]), math.ceil(spec.width / img.shape[1]))
        img = np.tile(img, reps)[: spec.height, : spec.width]
    return img


def _shifted(texture: np.ndarray, dx: float, dy: float) -> np.ndarray:
    return np.roll(texture, (int(round(dy)), int(round(dx))), axis=(0, 1))


def _target_box(target: TargetSpec, t_ms: float) -> tuple[int, int, int, int]:
    """Rendered pixel box ``(x0, y0, x1, y1)``, half-open."""
    cx, cy = target.center(t_ms)
    w, h = target.size
    x0 = int(round(cx - (w - 1) / 2.0))
    y0 = int(round(cy - (h - 1) / 2.0))
    return x0, y0, x0 + w, y0 + h


def render_frame(spec: SceneSpec, index: int, texture: np.ndarray | None = None) -> tuple[np.ndarray, list]:
    """Frame ``index`` of a scene plus its ground-truth entries."""
    if texture is None:
        texture = _background(spec)
    t = index * spec.dt
    s = spec.bg_velocity * t / 1000.0
    frame = _shifted(texture, s * math.cos(spec.bg_direction), s * math.sin(spec.bg_direction))
    truth = []
    for tid, target in enumerate(spec.targets):
        if t < target.start_time:
            continue
        x0, y0, x1, y1 = _target_box(target, t)
        if x0 < 0 or y0 < 0 or x1 > spec.width or y1 > spec.height:
            raise SceneError(f"target {tid} leaves the frame at frame {index}")
        frame[y0:y1, x0:x1] = target.luminance
        cx, cy = target.center(t)
        truth.append((index, tid, cx, cy))
    return frame, truth


def generate(spec: SceneSpec) -> tuple[np.ndarray, list[tuple[int, int, float, float]]]:
    """Render every frame of ``spec``.

    Returns a ``(n_frames, height, width)`` float array in ``[0, 255]`` and
    the ground truth as ``(frame, target_id, x, y)`` rows.
    """
    texture = _background(spec)
    frames = np.empty((spec.n_frames, spec.height, spec.width))
    truth = []
    for i in range(spec.n_frames):
        frames[i], rows = render_frame(spec, i, texture)
        truth.extend(rows)
    return frames, truth


def iter_frames(spec: SceneSpec):
    """Yield ``(frame, truth_rows)`` lazily; same content as :func:`generate`."""
    texture = _background(spec)
    for i in range(spec.n_frames):
        yield render_frame(spec, i, texture)


def generate_calibration(
    velocity: float,
    direction: float = 0.0,
    *,
    size: tuple[int, int] = CALIBRATION_SIZE,
    duration: float = CALIBRATION_DURATION,
    fps: float = 1000.0,
    seed: int = CALIBRATION_SEED,
) -> np.ndarray:
    """Target-free translating texture used to measure LPTC tuning."""
    if velocity < 0:
        raise SceneError("calibration velocity must be >= 0")
    spec = SceneSpec(
        width=size[1], height=size[0], fps=fps, duration=duration,
        bg_velocity=velocity, bg_direction=direction, targets=[], seed=seed,
    )
    return generate(spec)[0]


def generate_velocity_profile(
    velocities,
    direction: float = 0.0,
    *,
    size: tuple[int, int] = CALIBRATION_SIZE,
    fps: float = 1000.0,
    seed: int = CALIBRATION_SEED,
    texture_std: float = TEXTURE_STD,
) -> np.ndarray:
    """Target-free texture whose speed follows ``velocities`` (px/s, one per
    frame).  Displacement is the running sum of ``v * dt``, so frame 0 is
    unshifted and frame ``i`` has moved by the velocities of frames
    ``0 .. i-1``."""
    v = np.asarray(velocities, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0 or np.any(v < 0):
        raise SceneError("velocity profile must be a non-empty 1D array of speeds >= 0")
    texture = procedural_texture(size[0], size[1], seed, texture_std)
    dt_s = 1.0 / fps
    travel = np.concatenate([[0.0], np.cumsum(v[:-1] * dt_s)])
    frames = np.empty((len(v),) + tuple(size))
    for i, s in enumerate(travel):
        frames[i] = _shifted(texture, s * math.cos(direction), s * math.sin(direction))
    return frames


def initial_video_spec(seed: int = 0, **overrides) -> SceneSpec:
    """Single 5x5 dark target (luminance 25) moving left at 250 px/s over a
    background also moving left at 250 px/s, 1000 fps."""
    target_kw = {k: overrides.pop(k) for k in list(overrides) if k.startswith("target_")}
    target = TargetSpec(**{k[len("target_"):]: v for k, v in target_kw.items()})
    params = dict(width=250, height=250, fps=1000.0, duration=500.0, bg_velocity=250.0,
                  bg_direction=math.pi, targets=[target], seed=seed)
    params.update(overrides)
    return SceneSpec(**params)
