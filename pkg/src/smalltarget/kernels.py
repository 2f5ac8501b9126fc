"""Spatial and temporal kernels plus the convolution primitives shared by
every layer of the detector.

Time is measured in milliseconds, space in pixels.  Temporal filters are
causal FIR tap vectors (tap 0 is lag 0); spatial kernels are odd-sized 2D
arrays anchored at their center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage, special

#: Fraction of a continuous Gamma kernel's area retained by the sampled taps.
GAMMA_AREA = 0.999


class InvalidParameterError(ValueError):
    """Raised when a kernel or filter is requested with unusable parameters."""


class InvalidStateError(RuntimeError):
    """A streaming stage was asked for output its buffered state cannot supply."""


@dataclass(frozen=True)
class GammaSpec:
    """Order ``n`` and time constant ``tau`` (ms) of a Gamma kernel."""

    order: int
    time_constant: float

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise InvalidParameterError(f"Gamma order must be a positive integer, got {self.order!r}")
        if not self.time_constant > 0:
            raise InvalidParameterError(f"Gamma time constant must be > 0, got {self.time_constant!r}")


@dataclass(frozen=True)
class TemporalFilter:
    taps: np.ndarray
    dt: float

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64).copy()
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def support_len(self) -> int:
        return len(self.taps)


@dataclass(frozen=True)
class SpatialKernel:
    weights: np.ndarray
    normalized: bool = field(default=False, compare=False)
    # rank-1 terms (col, row) with weights == sum of outer(col, row), when
    # known; each term costs two 1D passes instead of one full 2D pass
    terms: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).copy()
        if w.ndim != 2 or w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
            raise InvalidParameterError(f"spatial kernel must be 2D with odd sides, got shape {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.terms is not None:
            terms = []
            for col, row in self.terms:
                col = np.array(col, dtype=np.float64)
                row = np.array(row, dtype=np.float64)
                if col.shape != (w.shape[0],) or row.shape != (w.shape[1],):
                    raise InvalidParameterError("separable terms do not match the kernel shape")
                col.setflags(write=False)
                row.setflags(write=False)
                terms.append((col, row))
            object.__setattr__(self, "terms", tuple(terms))

    @property
    def radius(self) -> int:
        return self.weights.shape[0] // 2


def gamma_kernel(t, order: int, tau: float) -> np.ndarray:
    """Continuous Gamma kernel ``(n t)^n exp(-n t / tau) / ((n-1)! tau^(n+1))``.

    Evaluated in log space so that high orders (n = 25) do not overflow.
    Vanishes at ``t <= 0``.
    """
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    pos = t > 0
    n = order
    tp = t[pos]
    logv = n * np.log(n * tp) - n * tp / tau - special.gammaln(n) - (n + 1) * math.log(tau)
    out[pos] = np.exp(logv)
    return out


def gamma_cdf(t, order: int, tau: float):
    """Cumulative area of the Gamma kernel on ``[0, t]``.

    The kernel is a gamma density with shape ``n + 1`` and scale ``tau / n``.
    """
    return special.gammainc(order + 1, order * np.asarray(t, dtype=np.float64) / tau)


def sample_gamma(spec: GammaSpec, dt: float) -> TemporalFilter:
    """Sample a Gamma kernel at ``k * dt`` and rescale the taps to unit sum.

    The support is the shortest one whose continuous area reaches
    ``GAMMA_AREA`` of the total.
    """
    if not dt > 0:
        raise InvalidParameterError(f"dt must be > 0, got {dt!r}")
    n, tau = spec.order, float(spec.time_constant)
    # quantile of the continuous kernel, then round up to whole taps
    t_cut = special.gammaincinv(n + 1, GAMMA_AREA) * tau / n
    n_taps = int(math.ceil(t_cut / dt)) + 1
    while gamma_cdf((n_taps - 1) * dt, n, tau) < GAMMA_AREA:
        n_taps += 1
    taps = gamma_kernel(np.arange(n_taps) * dt, n, tau)
    total = taps.sum()
    if total <= 0:
        # dt much coarser than tau: all mass lands before the first nonzero sample
        taps = np.zeros(n_taps)
        taps[min(1, n_taps - 1)] = 1.0
    else:
        taps = taps / total
    return TemporalFilter(taps, dt)


def make_lmc_filter(fast: GammaSpec, slow: GammaSpec, dt: float) -> TemporalFilter:
    """Band-pass difference of two unit-sum Gamma filters, ``fast - slow``."""
    a = sample_gamma(fast, dt).taps
    b = sample_gamma(slow, dt).taps
    n = max(len(a), len(b))
    taps = np.zeros(n)
    taps[: len(a)] += a
    taps[: len(b)] -= b
    return TemporalFilter(taps, dt)


def gaussian_2d(sigma: float, radius: int) -> np.ndarray:
    """Unnormalized isotropic Gaussian ``exp(-r^2 / 2 sigma^2) / (2 pi sigma^2)``
    sampled on the integer grid ``[-radius, radius]^2``."""
    r = np.arange(-radius, radius + 1, dtype=np.float64)
    rr = r[:, None] ** 2 + r[None, :] ** 2
    return np.exp(-rr / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma)


def _check_radius(radius, sigma):
    need = int(math.ceil(3.0 * sigma))
    if radius is None:
        return need
    if int(radius) != radius or radius < need:
        raise InvalidParameterError(f"radius {radius!r} too small for sigma {sigma}; need >= {need}")
    return int(radius)


def make_gaussian(sigma: float, radius: int | None = None) -> SpatialKernel:
    """Unit-sum Gaussian kernel truncated at ``ceil(3 sigma)`` by default."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma!r}")
    radius = _check_radius(radius, sigma)
    w = gaussian_2d(sigma, radius)
    r = np.arange(-radius, radius + 1, dtype=np.float64)
    f = np.exp(-(r * r) / (2.0 * sigma * sigma))
    f = f / f.sum()
    return SpatialKernel(w / w.sum(), normalized=True, terms=((f, f),))


def make_inhibition_kernel(
    A: float = 1.0,
    B: float = 3.0,
    e: float = 1.0,
    rho: float = 0.0,
    sigma2: float = 1.5,
    sigma3: float = 3.0,
    radius: int | None = None,
) -> SpatialKernel:
    """Center-surround lateral inhibition kernel.

    ``g = G(sigma2) - e * G(sigma3) - rho`` and the weights are
    ``A * max(g, 0) + B * min(g, 0)``.  Not renormalized: the balance of the
    positive and negative lobes is what suppresses wide responses.
    """
    if not (sigma2 > 0 and sigma3 > 0):
        raise InvalidParameterError("inhibition sigmas must be > 0")
    radius = _check_radius(radius, max(sigma2, sigma3))
    g = gaussian_2d(sigma2, radius) - e * gaussian_2d(sigma3, radius) - rho
    w = A * np.maximum(g, 0.0) + B * np.minimum(g, 0.0)
    return SpatialKernel(w, terms=low_rank_terms(w))


def low_rank_terms(w: np.ndarray, rel_tol: float = 1e-13):
    """Rank-1 decomposition of ``w`` via SVD, or None when it would not save
    work over direct 2D summation (or would not reproduce ``w`` to
    ``rel_tol``)."""
    u, s, vt = np.linalg.svd(w)
    if s[0] == 0:
        return None
    rank = int(np.sum(s > rel_tol * s[0]))
    if 2 * rank >= min(w.shape):
        return None
    terms = tuple((u[:, i] * s[i], vt[i]) for i in range(rank))
    approx = sum(np.outer(c, r) for c, r in terms)
    if np.abs(approx - w).max() > rel_tol * np.abs(w).max() * 10:
        return None
    return terms


def convolve2d(frame: np.ndarray, kernel: SpatialKernel) -> np.ndarray:
    """Same-size 2D convolution with replicate ("nearest") border padding.

    Separable kernels run as two 1D passes; per-axis edge clamping makes
    that equal to the 2D sum up to rounding.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if kernel.terms is not None:
        out = None
        for col, row in kernel.terms:
            part = ndimage.convolve1d(ndimage.convolve1d(frame, col, axis=0, mode="nearest"), row, axis=1, mode="nearest")
            out = part if out is None else out + part
        return out
    return ndimage.convolve(frame, kernel.weights, mode="nearest")


def temporal_convolve(history: Sequence[np.ndarray] | np.ndarray, filt: TemporalFilter) -> np.ndarray:
    """Per-pixel causal FIR over a frame history.

    ``history[-1]`` is the current frame and ``history[-1 - k]`` the frame
    ``k`` steps back.  Missing history (before the stream started) counts as
    zero, so the history may be shorter than the filter.
    """
    hist = np.asarray(history, dtype=np.float64)
    taps = filt.taps
    k = min(len(taps), hist.shape[0])
    recent = hist[::-1][:k]
    return np.tensordot(taps[:k], recent, axes=1)


class FrameRing:
    """Fixed-length ring of past frames feeding a causal FIR filter.

    Zero-filled at construction; ``push`` stores the newest frame and
    ``apply`` evaluates ``sum_k taps[k] * frame[t - k]``.  The shift table
    used by the feedback loop needs per-lag access, hence ``lagged``.
    """

    def __init__(self, length: int, shape: tuple[int, int]):
        if length < 1:
            raise InvalidParameterError("ring length must be >= 1")
        self.length = int(length)
        self.shape = tuple(shape)
        self._buf = np.zeros((self.length, shape[0] * shape[1]))
        self._head = -1  # slot of the most recent frame

    def push(self, frame: np.ndarray) -> None:
        self._head = (self._head + 1) % self.length
        self._buf[self._head] = np.asarray(frame, dtype=np.float64).ravel()

    def lagged(self, lag: int) -> np.ndarray:
        """Frame stored ``lag`` pushes ago (0 = most recent)."""
        if not 0 <= lag < self.length:
            raise IndexError(f"lag {lag} outside ring of length {self.length}")
        return self._buf[(self._head - lag) % self.length].reshape(self.shape)

    def apply(self, taps: np.ndarray, skip: int = 0) -> np.ndarray:
        """FIR output; with ``skip=1`` the newest frame counts as lag 1
        (used when the output must not depend on the current frame)."""
        taps = np.asarray(taps, dtype=np.float64)
        n = min(len(taps), self.length + skip)
        weights = np.zeros(self.length)
        lags = np.arange(skip, n)
        weights[(self._head - (lags - skip)) % self.length] = taps[skip:n]
        return (weights @ self._buf).reshape(self.shape)
