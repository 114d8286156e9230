"""3x3 block matching between consecutive frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GridField

# (dx, dy) candidates in tie-break order: shortest first, then lexicographic.
OFFSETS: tuple[tuple[int, int], ...] = tuple(
    sorted(
        ((dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)),
        key=lambda o: (o[0] ** 2 + o[1] ** 2, o[0], o[1]),
    )
)


@dataclass(frozen=True)
class MotionField:
    vx: np.ndarray
    vy: np.ndarray

    @property
    def vectors(self) -> np.ndarray:
        return np.stack([self.vx, self.vy], axis=1)


def best_offsets(u: np.ndarray) -> np.ndarray:
    """Index into OFFSETS of the best match for every interior point.

    ``u`` is a (t, y, x) array; the result has shape (t-1, y-2, x-2).
    """
    prev, nxt = u[:-1], u[1:]
    ny, nx = u.shape[1:]
    centre = prev[:, 1:-1, 1:-1]
    err = np.empty((len(OFFSETS),) + centre.shape)
    for k, (dx, dy) in enumerate(OFFSETS):
        shifted = nxt[:, 1 + dy : ny - 1 + dy, 1 + dx : nx - 1 + dx]
        np.abs(shifted - centre, out=err[k])
    return np.argmin(err, axis=0)


def motion_vectors(field: GridField) -> MotionField:
    idx = best_offsets(field.values)
    off = np.array(OFFSETS, dtype=np.float64)
    vx = off[idx, 0].mean(axis=(1, 2))
    vy = off[idx, 1].mean(axis=(1, 2))
    return MotionField(vx, vy)


def motion_magnitude(mv: MotionField) -> float:
    """Time average of the norm of each per-step mean vector."""
    if len(mv.vx) == 0:
        return 0.0
    return float(np.mean(np.hypot(mv.vx, mv.vy)))
