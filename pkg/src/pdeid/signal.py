"""Time-signal features: mean frame-to-frame change, smoothing, statistics,
envelopes and binned spectra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import find_peaks, savgol_filter

from .core import GridField
from .errors import TooShort, WindowOutOfRange

SG_WINDOW = 21
SG_ORDER = 3
PROMINENCE = 0.01
FFT_BIN_EDGES = (0.0, 0.02, 0.04, 0.06, 0.08, 0.1)


@dataclass(frozen=True)
class TimeSignal:
    values: np.ndarray
    t0_index: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).copy()
        if not np.all(np.isfinite(v)):
            raise ValueError("TimeSignal contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class EnvelopePair:
    upper: np.ndarray
    lower: np.ndarray
    amplitude: np.ndarray
    peaks: np.ndarray
    valleys: np.ndarray


def delta_signal(field: GridField) -> TimeSignal:
    """Spatial mean of ``u[t+1] - u[t]`` for every consecutive frame pair."""
    return TimeSignal(np.diff(field.values, axis=0).mean(axis=(1, 2)))


def orient_signal(sig: TimeSignal) -> TimeSignal:
    """Flip the sign so the largest excursion is positive.

    The governing equations are linear, so ``u`` and ``-u`` belong to the same
    class; orienting makes the downstream features blind to that sign.
    """
    x = sig.values
    if len(x) == 0:
        return sig
    s = np.sign(x[np.argmax(np.abs(x))])
    return TimeSignal(-x, sig.t0_index) if s < 0 else sig


def minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi <= lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def prepare_signal(sig: TimeSignal) -> TimeSignal:
    """Scale to [0, 1] then Savitzky-Golay smooth (window 21, cubic).

    Edge samples use the polynomial fitted to the first/last full window.
    """
    if len(sig) < SG_WINDOW:
        raise TooShort(f"signal length {len(sig)} < {SG_WINDOW}")
    x = minmax(sig.values)
    smoothed = savgol_filter(x, SG_WINDOW, SG_ORDER, mode="interp")
    return TimeSignal(smoothed, sig.t0_index)


def _skew(x: np.ndarray) -> float:
    m = x.mean()
    sd = x.std()
    if sd <= 1e-12 * max(1.0, abs(m)):
        return 0.0
    return float(np.mean((x - m) ** 3) / sd**3)


def _window(x: np.ndarray, lo: int, hi: int) -> np.ndarray:
    if len(x) < hi:
        raise WindowOutOfRange(f"window [{lo}, {hi}) exceeds length {len(x)}")
    return x[lo:hi]


def stats_features(sig: TimeSignal) -> np.ndarray:
    x = sig.values
    w_all = _window(x, 50, 450)
    w_late = _window(x, 350, 450)
    return np.array([
        w_all.mean(),
        w_all.std(),
        w_late.min(),
        w_late.max(),
        w_late.mean(),
        w_late.std(),
        _skew(w_all),
    ])


def find_extrema(sig: TimeSignal) -> tuple[np.ndarray, np.ndarray]:
    """Peaks and valleys with prominence of at least 1% of the signal range."""
    x = np.asarray(sig.values)
    rng = x.max() - x.min() if len(x) else 0.0
    if len(x) < 3 or rng <= 0:
        empty = np.array([], dtype=int)
        return empty, empty
    prom = PROMINENCE * rng
    peaks, _ = find_peaks(x, prominence=prom)
    valleys, _ = find_peaks(-x, prominence=prom)
    return peaks.astype(int), valleys.astype(int)


def _envelope(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    n = len(x)
    idx = np.concatenate(([0], knots[(knots > 0) & (knots < n - 1)], [n - 1]))
    t = np.arange(n)
    if len(knots) < 2:
        # too few extrema for a meaningful cubic: piecewise-linear through knots
        env = np.interp(t, idx, x[idx])
    else:
        env = CubicSpline(idx, x[idx], bc_type="natural")(t)
    env[idx] = x[idx]
    return env


def envelopes(sig: TimeSignal) -> EnvelopePair:
    x = np.asarray(sig.values)
    peaks, valleys = find_extrema(sig)
    if len(x) < 2:
        z = np.zeros_like(x)
        return EnvelopePair(x.copy(), x.copy(), z, peaks, valleys)
    upper = _envelope(x, peaks)
    lower = _envelope(x, valleys)
    amp = np.clip(upper - lower, 0.0, None)
    return EnvelopePair(upper, lower, amp, peaks, valleys)


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den > 0 else 0.0


def amplitude_features(env: EnvelopePair) -> np.ndarray:
    a = env.amplitude
    n = len(a)
    w_all = _window(a, 50, 450)
    w_late = _window(a, 350, 450)
    w_second = _window(a, 250, 450)
    w_first = a[50:250]
    return np.array([
        w_all.max(),
        int(np.argmax(w_all)) / n,
        w_late.mean(),
        w_late.std(),
        _skew(w_late),
        w_second.mean(),
        w_second.std(),
        float(len(env.peaks)),
        float(len(env.valleys)),
        _ratio(w_second.mean(), w_first.mean()),
        _ratio(w_second.max(), w_first.max()),
    ])


def magnitude_spectrum(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-sided |FFT| of the mean-removed signal, frequencies in cycles/step."""
    x = np.asarray(x, dtype=np.float64)
    mag = np.abs(np.fft.rfft(x - x.mean()))
    freqs = np.arange(len(mag)) / len(x)
    return freqs, mag


def fft_features(sig: TimeSignal) -> np.ndarray:
    x = np.asarray(sig.values)
    freqs, mag = magnitude_spectrum(x)
    top = mag.max() if len(mag) else 0.0
    # a spectrum at round-off level (constant input) is treated as empty
    scale = len(x) * np.abs(x).max() if len(x) else 0.0
    if top > 1e-12 * scale:
        mag = mag / top
    else:
        mag = np.zeros_like(mag)
    out = []
    edges = FFT_BIN_EDGES
    for b in range(len(edges) - 1):
        lo, hi = edges[b], edges[b + 1]
        if b == len(edges) - 2:
            sel = (freqs >= lo) & (freqs <= hi)
        else:
            sel = (freqs >= lo) & (freqs < hi)
        m = mag[sel]
        if m.size == 0:
            out.extend([0.0] * 4)
        else:
            out.extend([m.mean(), m.std(), m.min(), m.max()])
    return np.array(out)
