"""Retina, lamina and medulla layers, run one frame at a time."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    FrameRing,
    GammaSpec,
    convolve2d,
    make_gaussian,
    make_lmc_filter,
    sample_gamma,
)


@dataclass(frozen=True)
class EarlyVisionConfig:
    sigma1: float = 1.0
    lmc_fast: GammaSpec = GammaSpec(2, 3.0)
    lmc_slow: GammaSpec = GammaSpec(6, 9.0)
    stmd_delay: GammaSpec = GammaSpec(5, 25.0)
    lptc_delay: GammaSpec = GammaSpec(25, 30.0)
    dt: float = 1.0  # ms per frame
    # calibration runs only need the LPTC channels
    with_stmd: bool = True
    with_lptc: bool = True


@dataclass
class MedullaOutputs:
    tm3: np.ndarray
    tm2: np.ndarray
    tm1_stmd: np.ndarray | None
    tm1_lptc: np.ndarray | None
    mi1_lptc: np.ndarray | None


def retina_step(frame: np.ndarray, sigma1: float = 1.0) -> np.ndarray:
    """Ommatidium blur of one input frame."""
    return convolve2d(frame, make_gaussian(sigma1))


def rectify(L: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split the LMC output into its ON (Tm3) and OFF (Tm2) parts."""
    return np.maximum(L, 0.0), np.maximum(-L, 0.0)


@dataclass
class EarlyVisionState:
    """Ring buffers behind the lamina and the delayed medulla channels."""

    config: EarlyVisionConfig
    shape: tuple[int, int]
    frame_count: int = 0
    retina_kernel: object = field(init=False)
    lmc: object = field(init=False)
    stmd_taps: object = field(init=False)
    lptc_taps: object = field(init=False)

    def __post_init__(self):
        cfg = self.config
        self.retina_kernel = make_gaussian(cfg.sigma1)
        self.lmc = make_lmc_filter(cfg.lmc_fast, cfg.lmc_slow, cfg.dt)
        self.stmd_taps = sample_gamma(cfg.stmd_delay, cfg.dt)
        self.lptc_taps = sample_gamma(cfg.lptc_delay, cfg.dt)
        self.p_ring = FrameRing(self.lmc.support_len, self.shape)
        self.tm2_stmd_ring = FrameRing(self.stmd_taps.support_len, self.shape) if cfg.with_stmd else None
        if cfg.with_lptc:
            self.tm3_lptc_ring = FrameRing(self.lptc_taps.support_len, self.shape)
            self.tm2_lptc_ring = FrameRing(self.lptc_taps.support_len, self.shape)
        else:
            self.tm3_lptc_ring = self.tm2_lptc_ring = None

    @property
    def warmup_frames(self) -> int:
        """Frames before every ring has been filled once."""
        lens = [self.lmc.support_len]
        if self.config.with_stmd:
            lens.append(self.stmd_taps.support_len)
        if self.config.with_lptc:
            lens.append(self.lptc_taps.support_len)
        return max(lens)

    @property
    def warming_up(self) -> bool:
        return self.frame_count <= self.warmup_frames


def lamina_step(state: EarlyVisionState, P: np.ndarray) -> np.ndarray:
    """Band-pass the retina output through the LMC filter."""
    state.p_ring.push(P)
    return state.p_ring.apply(state.lmc.taps)


def medulla_step(state: EarlyVisionState, L: np.ndarray) -> MedullaOutputs:
    tm3, tm2 = rectify(L)
    tm1_stmd = tm1_lptc = mi1_lptc = None
    if state.tm2_stmd_ring is not None:
        state.tm2_stmd_ring.push(tm2)
        tm1_stmd = state.tm2_stmd_ring.apply(state.stmd_taps.taps)
    if state.tm3_lptc_ring is not None:
        state.tm3_lptc_ring.push(tm3)
        state.tm2_lptc_ring.push(tm2)
        mi1_lptc = state.tm3_lptc_ring.apply(state.lptc_taps.taps)
        tm1_lptc = state.tm2_lptc_ring.apply(state.lptc_taps.taps)
    return MedullaOutputs(tm3, tm2, tm1_stmd, tm1_lptc, mi1_lptc)


def early_vision_step(state: EarlyVisionState, frame: np.ndarray) -> tuple[np.ndarray, np.ndarray, MedullaOutputs]:
    """Run one input frame through retina, lamina and medulla.

    Returns ``(P, L, medulla)``.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != state.shape:
        raise ValueError(f"frame shape {frame.shape} does not match stream shape {state.shape}")
    P = convolve2d(frame, state.retina_kernel)
    L = lamina_step(state, P)
    med = medulla_step(state, L)
    state.frame_count += 1
    return P, L, med
