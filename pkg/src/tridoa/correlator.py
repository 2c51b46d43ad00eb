"""Frame segmentation and frame-level TDOA measurement.

Cross-correlation uses a partially whitened cross-power spectrum (a PHAT
variant with exponent ``exponent``; 1 gives the classic phase transform)
followed by quadratic interpolation of the peak.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import SPEED_OF_SOUND, ArrayGeometry, TdoaTriple

PAIRS = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class Weighting:
    """Spectral weighting ``1 / (|G|**exponent + floor * mean|G|)``."""

    exponent: float = 0.75
    floor: float = 1e-9
    window: str = "hann"

    def __post_init__(self):
        if not 0 <= self.exponent <= 1:
            raise ValueError("exponent must lie in [0, 1]")
        if self.floor <= 0:
            raise ValueError("floor must be positive")
        if self.window not in ("hann", "rect"):
            raise ValueError(f"unknown window {self.window!r}")


class Frame(NamedTuple):
    samples: np.ndarray
    k: int
    channel: int


@dataclass(frozen=True)
class CorrelationFunction:
    """Weighted correlation on integer lags ``-max_lag..max_lag``."""

    max_lag: int
    values: np.ndarray
    peak_lag: int

    @classmethod
    def from_values(cls, values) -> "CorrelationFunction":
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or len(v) % 2 == 0:
            raise ValueError("need an odd number of lag values centred on lag 0")
        max_lag = len(v) // 2
        return cls(max_lag, v, int(np.argmax(v)) - max_lag)

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.max_lag, self.max_lag + 1)

    @property
    def peak_value(self) -> float:
        return float(self.values[self.peak_lag + self.max_lag])

    def at(self, lag: int) -> float:
        return float(self.values[lag + self.max_lag])


class PairMeasurement(NamedTuple):
    pair: tuple[int, int]
    refined_lag: float
    tdoa: float
    peak_value: float
    corr: CorrelationFunction


class TdoaMeasurement(NamedTuple):
    k: int
    q: TdoaTriple
    pairs: tuple[PairMeasurement, PairMeasurement, PairMeasurement]


def segment_stream(signal, L: int) -> list[tuple[Frame, Frame, Frame]]:
    """Split a 3-channel signal into half-overlapping frames of length ``L``.

    A trailing partial frame is dropped.
    """
    chans = [np.asarray(c, dtype=float) for c in signal]
    if len(chans) != 3:
        raise ValueError(f"expected 3 channels, got {len(chans)}")
    n = len(chans[0])
    if any(len(c) != n for c in chans):
        raise ValueError("channel length mismatch")
    hop = L // 2
    count = 0 if n < L else (n - L) // hop + 1
    return [
        tuple(Frame(c[k * hop:k * hop + L], k, i + 1) for i, c in enumerate(chans))
        for k in range(count)
    ]


def frame_count(n_samples: int, L: int) -> int:
    return 0 if n_samples < L else (n_samples - L) // (L // 2) + 1


def max_lag_for(distance: float, fs: float, c: float = SPEED_OF_SOUND) -> int:
    """Plausible lag bound in samples, one bin of slack over the geometry."""
    return math.ceil(distance * fs / c) + 1


def _window(L: int, kind: str) -> np.ndarray:
    return np.hanning(L) if kind == "hann" else np.ones(L)


def spectra(frames, weighting: Weighting) -> np.ndarray:
    """Windowed, zero-padded (length 2L) spectra of the rows of ``frames``."""
    x = np.atleast_2d(np.asarray(frames, dtype=float))
    L = x.shape[-1]
    return np.fft.rfft(x * _window(L, weighting.window), n=2 * L, axis=-1)


def _correlate_spectra(xi, xj, n_fft: int, max_lag: int, weighting: Weighting) -> CorrelationFunction:
    cross = xj * np.conj(xi)
    mag = np.abs(cross)
    mean_power = mag.mean()
    if mean_power == 0:
        return CorrelationFunction(max_lag, np.zeros(2 * max_lag + 1), 0)
    weighted = cross / (mag ** weighting.exponent + weighting.floor * mean_power)
    # unit mean magnitude: a coherent pure delay then peaks near 1
    weighted /= np.abs(weighted).mean()
    cc = np.fft.irfft(weighted, n=n_fft)
    values = np.concatenate([cc[n_fft - max_lag:], cc[:max_lag + 1]])
    return CorrelationFunction(max_lag, values, int(np.argmax(values)) - max_lag)


def cross_correlate(fi, fj, max_lag: int, weighting: Weighting = Weighting()) -> CorrelationFunction:
    """Weighted correlation ``R(l) ~ sum_n fi[n] fj[n + l]``.

    A positive peak lag means ``fj`` lags ``fi``.
    """
    a = np.asarray(getattr(fi, "samples", fi), dtype=float)
    b = np.asarray(getattr(fj, "samples", fj), dtype=float)
    if a.shape != b.shape:
        raise ValueError("frames must have the same length")
    L = len(a)
    if not 0 <= max_lag < L / 2:
        raise ValueError(f"max_lag {max_lag} must be below L/2 = {L / 2}")
    sp = spectra(np.stack([a, b]), weighting)
    return _correlate_spectra(sp[0], sp[1], 2 * L, max_lag, weighting)


def refine_peak_qi(corr: CorrelationFunction) -> float:
    """Sub-sample peak lag from a parabola through the peak and its neighbours."""
    lag = corr.peak_lag
    if abs(lag) >= corr.max_lag:
        return float(lag)
    left, mid, right = corr.at(lag - 1), corr.at(lag), corr.at(lag + 1)
    denom = left - 2 * mid + right
    if abs(denom) < 1e-12:
        return float(lag)
    delta = 0.5 * (left - right) / denom
    return lag + min(0.5, max(-0.5, delta))


def measure_frame(frames, g: ArrayGeometry, fs: float, c: float = SPEED_OF_SOUND,
                  weighting: Weighting = Weighting(), k: int = 0) -> TdoaMeasurement:
    """Measure ``q = [r12, r13, r23]`` (meters) for one 3-channel frame.

    ``frames`` is either three :class:`Frame` objects or a ``(3, L)`` array.
    """
    if len(frames) == 3 and isinstance(frames[0], Frame):
        ks = {f.k for f in frames}
        if len(ks) != 1:
            raise ValueError("frames come from different frame indices")
        k = ks.pop()
        data = np.stack([f.samples for f in frames])
    else:
        data = np.asarray(frames, dtype=float)
    L = data.shape[-1]
    sp = spectra(data, weighting)
    out = []
    for (i, j), d in zip(PAIRS, g.spacings):
        max_lag = max_lag_for(d, fs, c)
        if max_lag >= L / 2:
            raise ValueError(f"frame length {L} too short for pair spacing {d} m")
        # r_ij > 0 means channel i hears the source later, so correlate (j, i)
        corr = _correlate_spectra(sp[j], sp[i], 2 * L, max_lag, weighting)
        lag = refine_peak_qi(corr)
        out.append(PairMeasurement((i + 1, j + 1), lag, lag * c / fs, corr.peak_value, corr))
    q = TdoaTriple(out[0].tdoa, out[1].tdoa, out[2].tdoa)
    return TdoaMeasurement(k, q, tuple(out))
