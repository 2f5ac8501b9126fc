"""STMD correlator with spatio-temporal feedback and lateral inhibition.

Per frame::

    E = W_e * (tm3 . tm1)                      surround term
    F = alpha * sum_k gamma4[k] (D + E)(x - phi_k, y - psi_k, t - k)
    D = (tm3 - F) . (tm1 - F)
    Q = W_s * D

``F`` only reads the (D + E) history of earlier frames; the lag-0 tap of the
feedback Gamma kernel vanishes for orders >= 1, so nothing is lost.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    FrameRing,
    GammaSpec,
    InvalidStateError,
    SpatialKernel,
    convolve2d,
    make_gaussian,
    make_inhibition_kernel,
    sample_gamma,
)


#: Gain on the medulla channels entering the correlator.  With raw 0-255
#: luminance the recurrence diverges on textured backgrounds at alpha = 0.1.
INPUT_SCALE = 0.05


class FeedbackMode(str, enum.Enum):
    NONE = "none"
    TIME_DELAY = "time-delay"
    SPATIO_TEMPORAL = "spatio-temporal"


@dataclass(frozen=True)
class StmdConfig:
    alpha: float = 0.1
    fb_delay: GammaSpec = GammaSpec(6, 12.0)
    eta: float = 1.5
    A: float = 1.0
    B: float = 3.0
    e: float = 1.0
    rho: float = 0.0
    sigma2: float = 1.5
    sigma3: float = 3.0
    mode: FeedbackMode = FeedbackMode.SPATIO_TEMPORAL
    dt: float = 1.0
    # medulla channels are multiplied by this before correlation (see README)
    input_scale: float = INPUT_SCALE

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"feedback gain must be >= 0, got {self.alpha}")
        if not self.input_scale > 0:
            raise ValueError(f"input scale must be > 0, got {self.input_scale}")
        object.__setattr__(self, "mode", FeedbackMode(self.mode))


@dataclass
class StmdState:
    config: StmdConfig
    shape: tuple[int, int]
    F: np.ndarray = field(init=False)

    def __post_init__(self):
        cfg = self.config
        self.fb_filter = sample_gamma(cfg.fb_delay, cfg.dt)
        self.surround_kernel = make_gaussian(cfg.eta)
        self.inhibition_kernel = make_inhibition_kernel(cfg.A, cfg.B, cfg.e, cfg.rho, cfg.sigma2, cfg.sigma3)
        # (D + E) of previous frames; slot for lag k >= 1 is pushed k - 1 frames ago
        self.history = FrameRing(self.fb_filter.support_len, self.shape)
        self.F = np.zeros(self.shape)

    @property
    def n_lags(self) -> int:
        return self.fb_filter.support_len


def compute_surround_E(tm3: np.ndarray, tm1: np.ndarray, eta: float | SpatialKernel = 1.5) -> np.ndarray:
    kernel = eta if isinstance(eta, SpatialKernel) else make_gaussian(eta)
    return convolve2d(tm3 * tm1, kernel)


def shift_zero_fill(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """``out[y, x] = img[y - dy, x - dx]``; pixels shifted in from outside are 0."""
    h, w = img.shape
    out = np.zeros_like(img)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[yd, xd] = img[ys, xs]
    return out


def compute_feedback(state: StmdState, shifts: np.ndarray | None = None) -> np.ndarray:
    """Feedback signal from the buffered (D + E) history.

    ``shifts`` is an ``(n_lags, 2)`` array of ``(phi, psi)`` pixel
    displacements indexed by lag.  Required in spatio-temporal mode; ignored
    (treated as all-zero) in time-delay mode.
    """
    cfg = state.config
    if cfg.mode is FeedbackMode.NONE:
        return np.zeros(state.shape)
    n = state.n_lags
    if cfg.mode is FeedbackMode.TIME_DELAY:
        rounded = np.zeros((n, 2), dtype=np.int64)
    else:
        if shifts is None:
            raise InvalidStateError("spatio-temporal feedback needs a shift table")
        shifts = np.asarray(shifts, dtype=np.float64)
        if shifts.shape[0] < n:
            raise InvalidStateError(f"shift table covers {shifts.shape[0]} lags, need {n}")
        rounded = np.rint(shifts[:n]).astype(np.int64)
    taps = state.fb_filter.taps
    total = np.zeros(state.shape)
    # lags sharing one integer displacement are summed before the shift;
    # history.lagged(k - 1) holds (D + E) from k frames back
    groups: dict[tuple[int, int], list[int]] = {}
    for k in range(1, n):
        if taps[k] != 0.0:
            groups.setdefault((int(rounded[k, 0]), int(rounded[k, 1])), []).append(k)
    for key in sorted(groups):
        block = np.zeros(state.shape)
        for k in groups[key]:
            block += taps[k] * state.history.lagged(k - 1)
        total += shift_zero_fill(block, key[0], key[1])
    return cfg.alpha * total


def stmd_correlate(tm3: np.ndarray, tm1: np.ndarray, F: np.ndarray) -> np.ndarray:
    return (tm3 - F) * (tm1 - F)


def lateral_inhibit(D: np.ndarray, kernel: SpatialKernel) -> np.ndarray:
    return convolve2d(D, kernel)


def stmd_step(state: StmdState, tm3: np.ndarray, tm1: np.ndarray, shifts: np.ndarray | None = None) -> np.ndarray:
    """Advance the STMD one frame and return the inhibited output ``Q``."""
    g = state.config.input_scale
    if g != 1.0:
        tm3 = tm3 * g
        tm1 = tm1 * g
    E = compute_surround_E(tm3, tm1, state.surround_kernel)
    F = compute_feedback(state, shifts)
    D = stmd_correlate(tm3, tm1, F)
    state.history.push(D + E)
    state.F = F
    return lateral_inhibit(D, state.inhibition_kernel)
