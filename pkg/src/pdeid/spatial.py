"""Boundary-driven flow direction, projected profiles and the symmetry
features that flag convection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GridField, PdeSpec
from .signal import minmax


@dataclass(frozen=True)
class ProjectedProfiles:
    v1: np.ndarray
    v2: np.ndarray
    d1: float
    d2: float


def marginal_profiles(field: GridField, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(u_x, u_y)``: the frame averaged over y, and over x."""
    frame = field.values[t]
    return frame.mean(axis=0), frame.mean(axis=1)


def flow_direction(spec: PdeSpec) -> tuple[float, float, bool]:
    """Unit vector along the boundary-value difference; flag is True if degenerate."""
    bc1, bc2, bc3, bc4 = spec.bc
    dcx, dcy = bc1 - bc4, bc2 - bc3
    norm = np.hypot(dcx, dcy)
    if norm == 0:
        return 1.0, 0.0, True
    return float(dcx / norm), float(dcy / norm), False


def project(ux: np.ndarray, uy: np.ndarray, d1: float, d2: float) -> ProjectedProfiles:
    return ProjectedProfiles(d1 * uy - d2 * ux, d1 * ux + d2 * uy, d1, d2)


def projected_profiles(field: GridField, spec: PdeSpec, t: int) -> ProjectedProfiles:
    ux, uy = marginal_profiles(field, t)
    d1, d2, _ = flow_direction(spec)
    return project(ux, uy, d1, d2)


def mirror_difference(v: np.ndarray) -> np.ndarray:
    """First half minus the mirrored second half about the centre index."""
    n = len(v)
    half = n // 2
    return v[:half] - v[::-1][:half]


def symmetry_signal(field: GridField, spec: PdeSpec, t: int) -> np.ndarray:
    # min-max scaling is applied to v1 itself so that mirror symmetry survives
    prof = projected_profiles(field, spec, t)
    return mirror_difference(minmax(prof.v1))


def _stats(s: np.ndarray) -> np.ndarray:
    a = np.abs(s)
    sd = s.std()
    skew = float(np.mean((s - s.mean()) ** 3) / sd**3) if sd > 1e-12 else 0.0
    return np.array([s.mean(), sd, s.min(), s.max(), a.mean(), a.std(), skew])


def spatial_features(field: GridField, spec: PdeSpec) -> np.ndarray:
    return _stats(symmetry_signal(field, spec, field.nt - 1))
