"""Coefficient magnitudes: wave-front speed, amplitude decay rate and
least-squares regression when the term set is known."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter
from scipy.stats import spearmanr

from .core import GridField, PdeSpec, TermLabels
from .errors import DegenerateAmplitude, IllConditioned, NoFrontDetected
from .signal import (
    SG_ORDER,
    SG_WINDOW,
    delta_signal,
    envelopes,
    minmax,
    orient_signal,
    prepare_signal,
)
from .spatial import flow_direction

FRONT_LEVEL = 0.5
REVERSAL_TOL = 0.1  # cells
MIN_FRONT_FRAMES = 10


@dataclass(frozen=True)
class FrontTrack:
    times: np.ndarray
    positions: np.ndarray
    slope: float
    intercept: float

    @property
    def speed(self) -> float:
        return abs(self.slope)


def front_position(profile: np.ndarray, level: float = FRONT_LEVEL) -> float | None:
    """First crossing of ``level`` walking in from index 0, linearly interpolated."""
    q = minmax(np.asarray(profile, dtype=np.float64))
    if q.max() <= 0:
        return None
    above = q[0] >= level
    for g in range(1, len(q)):
        if (q[g] >= level) != above:
            a, b = q[g - 1], q[g]
            return (g - 1) + (a - level) / (a - b)
    return None


def front_profiles(field: GridField, spec: PdeSpec) -> np.ndarray:
    """Per-frame profile along the flow direction, shape (nt, n)."""
    d1, d2, _ = flow_direction(spec)
    ux = field.values.mean(axis=1)
    uy = field.values.mean(axis=2)
    return d1 * ux + d2 * uy


def source_side(profiles: np.ndarray) -> int:
    """0 if the first-frame profile departs more from its centre at index 0, else -1."""
    p0 = profiles[0]
    mid = p0[len(p0) // 2]
    return 0 if abs(p0[0] - mid) >= abs(p0[-1] - mid) else -1


def track_front(field: GridField, spec: PdeSpec) -> FrontTrack:
    """Follow the 0.5 crossing inward from the driving boundary until it turns back."""
    profiles = front_profiles(field, spec)
    if source_side(profiles) == -1:
        profiles = profiles[:, ::-1]
    times, pos = [], []
    best = -np.inf
    for t, prof in enumerate(profiles):
        p = front_position(prof)
        if p is None:
            if times:
                break
            continue
        if p < best - REVERSAL_TOL:
            break
        best = max(best, p)
        times.append(t)
        pos.append(p)
    if len(times) < MIN_FRONT_FRAMES:
        raise NoFrontDetected(f"front found in only {len(times)} frames")
    times = np.asarray(times, dtype=np.float64)
    pos = np.asarray(pos)
    # keep the traversal up to the furthest point reached
    stop = int(np.argmax(pos)) + 1
    if stop < MIN_FRONT_FRAMES:
        raise NoFrontDetected("front stalls before it moves")
    times, pos = times[:stop], pos[:stop]
    slope, intercept = np.polyfit(times, pos, 1)
    if not slope > 0:
        raise NoFrontDetected("front does not advance")
    return FrontTrack(times, pos, float(slope), float(intercept))


def wave_speed_estimate(field: GridField, spec: PdeSpec) -> tuple[float, FrontTrack]:
    """Front speed in cells per stored step, plus the fitted track."""
    track = track_front(field, spec)
    return track.speed, track


def decay_rate(amplitude, lo: int = 50, hi: int = 450, floor: float = 1e-6) -> float:
    """Least-squares rate ``lam`` of ``A(t) ~ A0 exp(-lam t)`` over ``[lo, hi)``."""
    a = np.asarray(amplitude, dtype=np.float64)[lo:hi]
    t = np.arange(lo, lo + len(a), dtype=np.float64)
    ok = a > floor
    if ok.sum() < 20:
        raise DegenerateAmplitude(f"only {int(ok.sum())} usable amplitude points")
    slope, _ = np.polyfit(t[ok], np.log(a[ok]), 1)
    return float(-slope)


def damping_estimate(field: GridField) -> float:
    prepared = prepare_signal(orient_signal(delta_signal(field)))
    return decay_rate(envelopes(prepared).amplitude)


def median_by_level(levels, values) -> dict[float, float]:
    """Median of the finite ``values`` at each distinct level."""
    levels = np.asarray(levels, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    out = {}
    for lv in np.unique(levels):
        v = values[(levels == lv) & np.isfinite(values)]
        out[float(lv)] = float(np.median(v)) if v.size else float("nan")
    return out


def level_rank_correlation(levels, values) -> float:
    """Spearman correlation between each level and the median value at that level."""
    med = median_by_level(levels, values)
    keys = sorted(med)
    if len(keys) < 2 or not np.all(np.isfinite([med[k] for k in keys])):
        return float("nan")
    return float(spearmanr(keys, [med[k] for k in keys]).statistic)


def matched_pair_fraction(rates: dict, key_index: int, lo, hi) -> tuple[int, int]:
    """Count matched pairs where the rate at ``hi`` exceeds the rate at ``lo``.

    ``rates`` maps parameter tuples to values; two tuples are matched when they
    agree everywhere except at ``key_index``. Returns ``(wins, pairs)``; pairs
    with a non-finite rate are skipped.
    """
    wins = pairs = 0
    for key, r_lo in rates.items():
        if key[key_index] != lo:
            continue
        other = key[:key_index] + (hi,) + key[key_index + 1:]
        r_hi = rates.get(other)
        if r_hi is None or not (np.isfinite(r_lo) and np.isfinite(r_hi)):
            continue
        pairs += 1
        wins += int(r_hi > r_lo)
    return wins, pairs


@dataclass(frozen=True)
class Coefficients:
    e: float
    d: float
    c: float
    bx: float
    by: float
    leading: str
    residual: float

    def as_dict(self) -> dict:
        return {
            "e": self.e, "d": self.d, "c": self.c, "bx": self.bx, "by": self.by,
            "leading": self.leading, "residual": self.residual,
        }


def derivative_fields(u: np.ndarray, dt: float, h: float, smooth: bool = True) -> dict:
    """Centred-difference estimates at interior points and interior times.

    ``stencil`` holds the summed magnitudes of the Laplacian stencil terms,
    a scale for judging how much the Laplacian cancels.
    """
    if smooth and u.shape[0] >= SG_WINDOW:
        u = savgol_filter(u, SG_WINDOW, SG_ORDER, axis=0, mode="interp")
    c = u[1:-1, 1:-1, 1:-1]
    return {
        "u_t": (u[2:, 1:-1, 1:-1] - u[:-2, 1:-1, 1:-1]) / (2 * dt),
        "u_tt": (u[2:, 1:-1, 1:-1] - 2 * c + u[:-2, 1:-1, 1:-1]) / dt**2,
        "lap": (
            u[1:-1, 1:-1, 2:] + u[1:-1, 1:-1, :-2] + u[1:-1, 2:, 1:-1] + u[1:-1, :-2, 1:-1] - 4 * c
        ) / h**2,
        "u_x": (u[1:-1, 1:-1, 2:] - u[1:-1, 1:-1, :-2]) / (2 * h),
        "u_y": (u[1:-1, 2:, 1:-1] - u[1:-1, :-2, 1:-1]) / (2 * h),
        "stencil": (
            np.abs(u[1:-1, 1:-1, 2:]) + np.abs(u[1:-1, 1:-1, :-2]) + np.abs(u[1:-1, 2:, 1:-1])
            + np.abs(u[1:-1, :-2, 1:-1]) + 4 * np.abs(c)
        ) / h**2,
    }


def regress_coefficients(
    field: GridField,
    terms: TermLabels,
    h: float,
    dt: float | None = None,
    skip: int = SG_WINDOW // 2,
    smooth: bool = True,
    max_cond: float = 1e10,
) -> Coefficients:
    """Fit the active coefficients of ``e u_tt + d u_t - c lap + B.grad = 0``.

    The highest active time derivative with a non-zero column is pinned to 1;
    with none, the Laplacian coefficient is. ``skip`` frames are dropped at
    each end where the smoother runs on one-sided windows. The residual is
    relative to the pinned column, or to the summed magnitude of the
    Laplacian stencil terms when the Laplacian is pinned.
    """
    dt = field.dt if dt is None else dt
    der = derivative_fields(field.values, dt, h, smooth)
    sl = slice(skip, der["lap"].shape[0] - skip) if skip else slice(None)
    cols = {k: v[sl].ravel() for k, v in der.items()}
    scale = np.linalg.norm(cols["lap"]) or 1.0

    def usable(name):
        return np.linalg.norm(cols[name]) > 1e-10 * scale

    active = []
    if terms.has_utt and usable("u_tt"):
        active.append("u_tt")
    if terms.has_ut and usable("u_t"):
        active.append("u_t")
    leading = active[0] if active else "lap"

    # move every other active term to the right-hand side with its sign
    sign = {"u_tt": -1.0, "u_t": -1.0, "lap": 1.0, "u_x": -1.0, "u_y": -1.0}
    regressors = list(active[1:])
    if leading != "lap":
        regressors.append("lap")
    if terms.has_conv:
        regressors += ["u_x", "u_y"]
    b = cols[leading]
    coef = {}
    resid = np.linalg.norm(b)
    if regressors:
        A = np.column_stack([sign[t] * cols[t] for t in regressors])
        if leading == "lap":
            # lap = bx u_x + by u_y  (c pinned to 1)
            A = -A
        norms = np.linalg.norm(A, axis=0)
        norms[norms == 0] = 1.0
        An = A / norms
        cond = np.linalg.cond(An.T @ An)
        if not cond <= max_cond:
            raise IllConditioned(f"normal-equation condition number {cond:.3g}")
        x, *_ = np.linalg.lstsq(An, b, rcond=None)
        x = x / norms
        coef = dict(zip(regressors, x))
        resid = np.linalg.norm(A @ x - b)
    if leading == "lap":
        # the Laplacian can vanish identically (steady harmonic fields), so
        # measure cancellation against the gross size of its stencil terms
        ref = np.linalg.norm(cols["stencil"])
    else:
        ref = np.linalg.norm(b)
    rel = float(resid / (ref or 1.0))
    out = {"e": 0.0, "d": 0.0, "c": 0.0, "bx": 0.0, "by": 0.0}
    if leading == "u_tt":
        out["e"] = 1.0
        out["d"] = float(coef.get("u_t", 0.0))
    elif leading == "u_t":
        out["d"] = 1.0
    out["c"] = 1.0 if leading == "lap" else float(coef.get("lap", 0.0))
    out["bx"] = float(coef.get("u_x", 0.0))
    out["by"] = float(coef.get("u_y", 0.0))
    return Coefficients(leading=leading, residual=rel, **out)
