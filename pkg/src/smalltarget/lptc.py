"""Wide-field motion correlators and population decoding of background motion.

Each LPTC pairs a pixel with a partner ``beta`` pixels away along its
preferred direction ``theta``.  A bank of them with increasing ``beta`` has
increasing optimal velocity; comparing the bank's firing-rate vector to
calibrated tuning curves gives the background speed, and integrating speed
over recent frames gives the displacements that steer the STMD feedback.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .early_vision import EarlyVisionConfig, EarlyVisionState, MedullaOutputs, early_vision_step
from .kernels import GammaSpec, InvalidStateError

log = logging.getLogger(__name__)

DEFAULT_BETAS = (2, 4, 6, 8, 10, 12, 14, 16, 18)
DEFAULT_DIRECTIONS = tuple(k * math.pi / 4 for k in range(8))
VELOCITY_GRID = tuple(float(v) for v in range(25, 1001, 25))


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LptcBankConfig:
    betas: tuple[int, ...] = DEFAULT_BETAS
    directions: tuple[float, ...] = DEFAULT_DIRECTIONS
    delay: GammaSpec = GammaSpec(25, 30.0)

    def __post_init__(self):
        betas = tuple(self.betas)
        if any(b < 1 for b in betas) or any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
            raise ValueError(f"betas must be strictly increasing and >= 1, got {betas}")
        dirs = tuple(float(d) for d in self.directions)
        if any(not 0 <= d < 2 * math.pi for d in dirs) or len(set(np.round(dirs, 12))) != len(dirs):
            raise ValueError("directions must be distinct angles in [0, 2 pi)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "directions", dirs)


def partner_offset(beta: float, theta: float) -> tuple[int, int]:
    """Integer ``(dx, dy)`` from a pixel to its correlation partner."""
    return int(round(beta * math.cos(theta))), int(round(beta * math.sin(theta)))


def _pair_slices(shape, dx, dy):
    """Slices ``(here, partner)`` covering pixels whose partner is on-frame."""
    h, w = shape
    if abs(dx) >= w or abs(dy) >= h:
        return None
    ya, yb = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xa, xb = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    return (ya, xa), (yb, xb)


def lptc_response(med: MedullaOutputs, beta: float, theta: float) -> np.ndarray:
    """Correlator output map for one (beta, theta) unit.

    The delayed ON/OFF signals at ``(x, y)`` are multiplied with the
    undelayed ones at the partner ``(x + beta cos theta, y + beta sin theta)``,
    so the unit prefers motion along ``theta``.  Pixels whose partner falls
    off-frame give 0.
    """
    dx, dy = partner_offset(beta, theta)
    out = np.zeros(med.tm3.shape)
    sl = _pair_slices(med.tm3.shape, dx, dy)
    if sl is None:
        return out
    a, b = sl
    out[a] = med.mi1_lptc[a] * med.tm3[b] + med.tm1_lptc[a] * med.tm2[b]
    return out


def pooled_response(med: MedullaOutputs, beta: float, theta: float) -> float:
    """Mean of :func:`lptc_response` over the whole frame."""
    dx, dy = partner_offset(beta, theta)
    sl = _pair_slices(med.tm3.shape, dx, dy)
    if sl is None:
        return 0.0
    a, b = sl
    s = np.vdot(med.mi1_lptc[a], med.tm3[b]) + np.vdot(med.tm1_lptc[a], med.tm2[b])
    return float(s) / med.tm3.size


def _opposite(theta):
    return (theta + math.pi) % (2 * math.pi)


def bank_responses(med: MedullaOutputs, config: LptcBankConfig) -> np.ndarray:
    """Direction-opponent pooled responses, shape ``(n_betas, n_directions)``.

    Entry ``[i, j]`` is the pooled output of the unit preferring
    ``directions[j]`` minus that of its mirror unit preferring the opposite
    direction.
    """
    cache = {}

    def pooled(beta, theta):
        key = (beta, partner_offset(beta, theta))
        if key not in cache:
            cache[key] = pooled_response(med, beta, theta)
        return cache[key]

    out = np.empty((len(config.betas), len(config.directions)))
    for i, beta in enumerate(config.betas):
        for j, theta in enumerate(config.directions):
            out[i, j] = pooled(beta, theta) - pooled(beta, _opposite(theta))
    return out


def firing_rates(med: MedullaOutputs, config: LptcBankConfig) -> tuple[np.ndarray, float]:
    """Firing-rate vector over ``betas`` and the winning direction.

    The direction maximizes the bank-summed opponent response (first index
    wins ties); rates are that direction's opponent responses, half-wave
    rectified.
    """
    resp = bank_responses(med, config)
    j = int(np.argmax(resp.sum(axis=0)))
    return np.maximum(resp[:, j], 0.0), config.directions[j]


@dataclass
class TuningTable:
    """Calibrated responses ``f(v, beta)``.

    ``raw[i, j]`` is the steady-state firing rate of ``betas[j]`` at
    ``velocity_grid[i]``; ``values`` is ``raw`` divided by its global maximum
    (``scale``), and runtime firing rates must be divided by the same
    ``scale`` before decoding.
    """

    velocity_grid: np.ndarray
    betas: tuple[int, ...]
    raw: np.ndarray
    scale: float = field(init=False)
    values: np.ndarray = field(init=False)

    def __post_init__(self):
        self.velocity_grid = np.asarray(self.velocity_grid, dtype=np.float64)
        self.raw = np.maximum(np.asarray(self.raw, dtype=np.float64), 0.0)
        self.betas = tuple(int(b) for b in self.betas)
        if self.raw.shape != (len(self.velocity_grid), len(self.betas)):
            raise ValueError("raw table shape does not match grid and betas")
        top = float(self.raw.max()) if self.raw.size else 0.0
        self.scale = top if top > 0 else 1.0
        self.values = self.raw / self.scale

    def normalize(self, rates: np.ndarray) -> np.ndarray:
        return np.asarray(rates, dtype=np.float64) / self.scale

    def preferred_velocities(self) -> np.ndarray:
        return self.velocity_grid[np.argmax(self.values, axis=0)]

    def check(self) -> None:
        """Raise :class:`CalibrationError` unless optimal velocity rises with beta."""
        pref = self.preferred_velocities()
        for j in range(1, len(self.betas)):
            if not pref[j] > pref[j - 1]:
                raise CalibrationError(
                    f"optimal velocity not increasing: beta={self.betas[j - 1]} peaks at {pref[j - 1]:g} px/s, "
                    f"beta={self.betas[j]} at {pref[j]:g} px/s"
                )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["beta", "velocity", "response"])
            for j, beta in enumerate(self.betas):
                for i, v in enumerate(self.velocity_grid):
                    w.writerow([beta, f"{v:.12g}", f"{self.raw[i, j]:.12e}"])

    @classmethod
    def from_csv(cls, path) -> "TuningTable":
        rows = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                rows[(int(rec["beta"]), float(rec["velocity"]))] = float(rec["response"])
        betas = sorted({b for b, _ in rows})
        grid = sorted({v for _, v in rows})
        raw = np.array([[rows[(b, v)] for b in betas] for v in grid])
        return cls(np.array(grid), tuple(betas), raw)


def steady_state_rates(
    frames: Sequence[np.ndarray],
    direction: float,
    bank: LptcBankConfig = LptcBankConfig(),
    early: EarlyVisionConfig | None = None,
) -> np.ndarray:
    """Mean opponent firing rates along a known direction, after warm-up.

    Warm-up covers the lamina and LPTC delay filters in series.
    """
    early = early or EarlyVisionConfig()
    early = EarlyVisionConfig(
        sigma1=early.sigma1, lmc_fast=early.lmc_fast, lmc_slow=early.lmc_slow,
        stmd_delay=early.stmd_delay, lptc_delay=bank.delay, dt=early.dt, with_stmd=False,
    )
    frames = np.asarray(frames)
    state = EarlyVisionState(early, frames.shape[1:])
    skip = state.lmc.support_len + state.lptc_taps.support_len
    one = LptcBankConfig(bank.betas, (direction % (2 * math.pi),), bank.delay)
    acc = np.zeros(len(bank.betas))
    n = 0
    for i, frame in enumerate(frames):
        _, _, med = early_vision_step(state, frame)
        if i < skip:
            continue
        acc += bank_responses(med, one)[:, 0]
        n += 1
    if n == 0:
        raise CalibrationError(f"stimulus of {len(frames)} frames is shorter than the {skip}-frame warm-up")
    return np.maximum(acc / n, 0.0)


def calibrate_tuning(
    bank: LptcBankConfig = LptcBankConfig(),
    generator: Callable[[float, float], np.ndarray] | None = None,
    velocities: Sequence[float] = VELOCITY_GRID,
    early: EarlyVisionConfig | None = None,
    check: bool = True,
) -> TuningTable:
    """Measure ``f(v, beta)`` on target-free textures translating along +x."""
    if generator is None:
        from .synthgen import generate_calibration as generator
    raw = []
    for v in velocities:
        frames = generator(float(v), 0.0)
        raw.append(steady_state_rates(frames, 0.0, bank, early))
        log.debug("calibrated v=%g: %s", v, raw[-1])
    table = TuningTable(np.asarray(velocities, dtype=np.float64), bank.betas, np.array(raw))
    if check:
        table.check()
    return table


def decode_velocity(rates: np.ndarray, table: TuningTable) -> float:
    """Grid velocity whose tuning column is nearest to ``rates`` (already
    normalized by ``table.scale``); ties go to the smaller velocity.

    Maximizing ``prod_i exp(-(r_i - f(v, beta_i))^2)`` is the same as
    minimizing the squared residual, which is what is computed.
    """
    rates = np.asarray(rates, dtype=np.float64)
    resid = ((table.values - rates[None, :]) ** 2).sum(axis=1)
    return float(table.velocity_grid[int(np.argmin(resid))])


def accumulate_shifts(history: Sequence[tuple[float, float]], n_lags: int, dt: float) -> np.ndarray:
    """Background displacement over each lag, shape ``(n_lags, 2)``.

    ``history[-j]`` holds ``(speed px/s, direction rad)`` estimated ``j``
    frames ago; ``dt`` is in ms.  Row ``k`` is the displacement accumulated
    over the last ``k`` frame intervals, row 0 is zero.
    """
    need = n_lags - 1
    if len(history) < need:
        raise InvalidStateError(f"shift accumulation needs {need} past estimates, got {len(history)}")
    out = np.zeros((n_lags, 2))
    for k in range(1, n_lags):
        speed, theta = history[-k]
        step = speed * dt / 1000.0
        out[k, 0] = out[k - 1, 0] + step * math.cos(theta)
        out[k, 1] = out[k - 1, 1] + step * math.sin(theta)
    return out
