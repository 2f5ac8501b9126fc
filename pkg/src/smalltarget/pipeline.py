"""Frame-by-frame composition of the whole detector."""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .early_vision import EarlyVisionConfig, EarlyVisionState, early_vision_step
from .kernels import GammaSpec
from .lptc import LptcBankConfig, TuningTable, accumulate_shifts, decode_velocity, firing_rates
from .stmd import FeedbackMode, StmdConfig, StmdState, stmd_step


@dataclass(frozen=True)
class ModelConfig:
    early: EarlyVisionConfig = EarlyVisionConfig()
    stmd: StmdConfig = StmdConfig()
    bank: LptcBankConfig = LptcBankConfig()

    @classmethod
    def for_fps(cls, fps: float = 1000.0, mode: FeedbackMode | str = FeedbackMode.SPATIO_TEMPORAL, **stmd_kw):
        dt = 1000.0 / fps
        return cls(
            early=EarlyVisionConfig(dt=dt),
            stmd=StmdConfig(dt=dt, mode=FeedbackMode(mode), **stmd_kw),
        )

    def with_mode(self, mode) -> "ModelConfig":
        return replace(self, stmd=replace(self.stmd, mode=FeedbackMode(mode)))

    def to_dict(self) -> dict:
        """Plain JSON-ready nesting; Gamma specs become ``[order, tau]``."""
        return {part: _flatten(getattr(self, part)) for part in ("early", "stmd", "bank")}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        """Inverse of :meth:`to_dict`; missing keys keep their defaults."""
        unknown = set(d) - {"early", "stmd", "bank"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        parts = {}
        for name, klass in (("early", EarlyVisionConfig), ("stmd", StmdConfig), ("bank", LptcBankConfig)):
            parts[name] = _inflate(klass, d.get(name, {}))
        return cls(**parts)


def _flatten(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, GammaSpec):
            v = [v.order, v.time_constant]
        elif isinstance(v, FeedbackMode):
            v = v.value
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def _inflate(klass, d: dict):
    names = {f.name: f for f in fields(klass)}
    unknown = set(d) - set(names)
    if unknown:
        raise ValueError(f"unknown {klass.__name__} keys: {sorted(unknown)}")
    kw = {}
    for k, v in d.items():
        default = getattr(klass(), k)
        if isinstance(default, GammaSpec):
            v = GammaSpec(int(v[0]), float(v[1]))
        elif isinstance(default, tuple):
            v = tuple(v)
        kw[k] = v
    return klass(**kw)


@dataclass
class StepResult:
    Q: np.ndarray
    warmup: bool
    speed: float | None = None
    direction: float | None = None
    layers: dict | None = None


class Detector:
    """Streaming detector; feed frames in order with :meth:`step`.

    ``tuning`` is only needed in spatio-temporal mode.  ``shift_override``
    replaces the decoded background motion with a fixed ``(speed, direction)``
    (useful for isolating the feedback from the velocity estimate).
    """

    def __init__(self, shape, config: ModelConfig = ModelConfig(), tuning: TuningTable | None = None,
                 shift_override: tuple[float, float] | None = None):
        self.config = config
        self.shape = tuple(shape)
        mode = config.stmd.mode
        need_lptc = mode is FeedbackMode.SPATIO_TEMPORAL and shift_override is None
        if need_lptc and tuning is None:
            raise ValueError("spatio-temporal feedback needs a tuning table")
        early = replace(config.early, lptc_delay=config.bank.delay, with_lptc=need_lptc)
        self.early = EarlyVisionState(early, self.shape)
        self.stmd = StmdState(replace(config.stmd, dt=early.dt), self.shape)
        self.tuning = tuning
        self.shift_override = shift_override
        self._need_lptc = need_lptc
        n = self.stmd.n_lags
        self.motion = collections.deque([(0.0, 0.0)] * n, maxlen=n)

    @property
    def warmup_frames(self) -> int:
        """Frames excluded from scoring: the ring lengths of every filter on
        the path to ``Q``, in series."""
        e = self.early
        return e.lmc.support_len + e.stmd_taps.support_len + self.stmd.n_lags

    def step(self, frame: np.ndarray, keep_layers: bool = False) -> StepResult:
        P, L, med = early_vision_step(self.early, frame)
        speed = direction = None
        shifts = None
        if self.config.stmd.mode is FeedbackMode.SPATIO_TEMPORAL:
            if self.shift_override is not None:
                speed, direction = self.shift_override
            else:
                rates, direction = firing_rates(med, self.config.bank)
                speed = decode_velocity(self.tuning.normalize(rates), self.tuning)
            shifts = accumulate_shifts(self.motion, self.stmd.n_lags, self.early.config.dt)
            self.motion.append((speed, direction))
        Q = stmd_step(self.stmd, med.tm3, med.tm1_stmd, shifts)
        layers = None
        if keep_layers:
            layers = {"P": P, "L": L, "tm3": med.tm3, "tm2": med.tm2, "tm1": med.tm1_stmd, "F": self.stmd.F, "Q": Q}
        warm = self.early.frame_count <= self.warmup_frames
        return StepResult(Q, warm, speed, direction, layers)

    def run(self, frames, keep_layers: bool = False):
        for f in frames:
            yield self.step(f, keep_layers)
