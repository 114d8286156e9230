"""Finite-difference generation of the eight PDE classes on a regular grid.

Grid layout is ``u[y, x]`` with Dirichlet sides ``bc = (x-min, y-min, y-max,
x-max)``. Corners hold the mean of the two adjacent sides; no interior stencil
reads them.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Dataset, GridField, PdeSpec, Sample, normalize_field
from .errors import NonFinite, NotConverged, SampleError, Unstable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    substeps_max: int = 1000
    steady_tol: float = 1e-12
    steady_iter_max: int = 50000
    cfl_safety: float = 0.9

    def __post_init__(self):
        if self.substeps_max < 1:
            raise ValueError("substeps_max must be >= 1")
        if not self.steady_tol > 0:
            raise ValueError("steady_tol must be positive")
        if not 0 < self.cfl_safety < 1:
            raise ValueError("cfl_safety must lie in (0, 1)")


def grid_spacing(spec: PdeSpec) -> float:
    return spec.domain_len / (spec.nx - 1)


def boundary_frame(spec: PdeSpec) -> np.ndarray:
    """Initial frame: interior at ``ic``, sides at their Dirichlet values."""
    bc1, bc2, bc3, bc4 = spec.bc
    u = np.full((spec.ny, spec.nx), spec.ic, dtype=np.float64)
    u[:, 0] = bc1
    u[:, -1] = bc4
    u[0, :] = bc2
    u[-1, :] = bc3
    u[0, 0] = 0.5 * (bc1 + bc2)
    u[-1, 0] = 0.5 * (bc1 + bc3)
    u[0, -1] = 0.5 * (bc4 + bc2)
    u[-1, -1] = 0.5 * (bc4 + bc3)
    return u


def _rhs(u: np.ndarray, c: float, bx: float, by: float, h: float) -> np.ndarray:
    """``c lap(u) - B.grad(u)`` on interior points, upwinded convection."""
    mid = u[1:-1, 1:-1]
    west, east = u[1:-1, :-2], u[1:-1, 2:]
    south, north = u[:-2, 1:-1], u[2:, 1:-1]
    out = (c / (h * h)) * (west + east + south + north - 4.0 * mid)
    if bx > 0:
        out -= (bx / h) * (mid - west)
    elif bx < 0:
        out -= (bx / h) * (east - mid)
    if by > 0:
        out -= (by / h) * (mid - south)
    elif by < 0:
        out -= (by / h) * (north - mid)
    return out


def substep_count(spec: PdeSpec, cfg: SolverConfig) -> int:
    """Smallest number of uniform sub-steps per output step that is stable."""
    h = grid_spacing(spec)
    dt = spec.dt_sim
    s = cfg.cfl_safety
    bsum = abs(spec.bx) + abs(spec.by)
    if spec.e == 0:
        # forward Euler: keep the update a convex combination of neighbours
        rate = (4.0 * spec.c / h**2 + bsum / h) / spec.d
        n = rate * dt / s
    else:
        n = max(
            math.sqrt(2.0 * spec.c) * dt / h / s,
            max(abs(spec.bx), abs(spec.by)) * dt / h / s,
        )
    n = max(1, math.ceil(n - 1e-12))
    if n > cfg.substeps_max:
        raise Unstable(f"need {n} sub-steps per output step, cap is {cfg.substeps_max}")
    return n


def simulate(spec: PdeSpec, cfg: SolverConfig | None = None) -> GridField:
    """Integrate a time-dependent problem and return every output frame."""
    cfg = cfg or SolverConfig()
    if spec.steady:
        raise ValueError("simulate needs a time-dependent spec; use solve_steady")
    h = grid_spacing(spec)
    n_sub = substep_count(spec, cfg)
    dt = spec.dt_sim / n_sub
    c, bx, by = spec.c, spec.bx, spec.by

    out = np.empty((spec.nt, spec.ny, spec.nx))
    u = boundary_frame(spec)
    out[0] = u

    if spec.e == 0:
        k = dt / spec.d
        for t in range(1, spec.nt):
            for _ in range(n_sub):
                u[1:-1, 1:-1] += k * _rhs(u, c, bx, by, h)
            out[t] = u
            if not np.isfinite(u).all():
                raise NonFinite(f"non-finite state at output step {t}")
        return GridField(out, dt=spec.dt_sim)

    # leapfrog, damping term centred and solved for the new level
    damp = 0.5 * spec.d * dt
    a_new = 1.0 / (1.0 + damp)
    prev = u.copy()
    cur = u.copy()
    cur[1:-1, 1:-1] += 0.5 * dt * dt * _rhs(u, c, bx, by, h)
    step = 1
    for t in range(1, spec.nt):
        while step < t * n_sub:
            nxt = cur.copy()
            nxt[1:-1, 1:-1] = a_new * (
                2.0 * cur[1:-1, 1:-1]
                - (1.0 - damp) * prev[1:-1, 1:-1]
                + dt * dt * _rhs(cur, c, bx, by, h)
            )
            prev, cur = cur, nxt
            step += 1
        out[t] = cur
        if not np.isfinite(cur).all():
            raise NonFinite(f"non-finite state at output step {t}")
    return GridField(out, dt=spec.dt_sim)


def steady_residual(u: np.ndarray, spec: PdeSpec) -> float:
    """Max abs correction a Jacobi sweep would apply (units of ``u``)."""
    h = grid_spacing(spec)
    diag = 4.0 * spec.c / h**2 + (abs(spec.bx) + abs(spec.by)) / h
    return float(np.abs(_rhs(u, spec.c, spec.bx, spec.by, h)).max() / diag)


def _red_black_masks(ny: int, nx: int) -> tuple[np.ndarray, np.ndarray]:
    iy, ix = np.indices((ny - 2, nx - 2))
    red = (iy + ix) % 2 == 0
    return red, ~red


def solve_steady(spec: PdeSpec, cfg: SolverConfig | None = None) -> GridField:
    """Red-black SOR for ``-c lap(u) + B.grad(u) = 0``; frames are replicated."""
    cfg = cfg or SolverConfig()
    if not spec.steady:
        raise ValueError("solve_steady needs e = d = 0")
    h = grid_spacing(spec)
    c, bx, by = spec.c, spec.bx, spec.by
    diag = 4.0 * c / h**2 + (abs(bx) + abs(by)) / h
    u = boundary_frame(spec)
    if bx == 0 and by == 0:
        omega = 2.0 / (1.0 + math.sin(math.pi / (spec.nx - 1)))
    else:
        omega = 1.5
    masks = _red_black_masks(spec.ny, spec.nx)
    inner = u[1:-1, 1:-1]
    res = math.inf
    for it in range(cfg.steady_iter_max):
        for m in masks:
            corr = _rhs(u, c, bx, by, h) / diag
            inner[m] += omega * corr[m]
        if it % 10 == 9 or it == cfg.steady_iter_max - 1:
            res = steady_residual(u, spec)
            if res < cfg.steady_tol:
                break
    else:
        raise NotConverged(f"residual {res:.3e} after {cfg.steady_iter_max} iterations")
    return GridField(np.broadcast_to(u, (spec.nt, spec.ny, spec.nx)), dt=spec.dt_sim)


def solve(spec: PdeSpec, cfg: SolverConfig | None = None) -> GridField:
    return solve_steady(spec, cfg) if spec.steady else simulate(spec, cfg)


# Parameter grids per class. ``sides`` lists the varied boundary indices
# (0-based into ``bc``); the remaining side is held at the initial value.
_FULL_BC = (-4.0, 1.0, 6.0, 11.0)
_CONV_BC = (1.0, 6.0)
PARAM_GRID: dict[int, dict] = {
    1: dict(e=0, d=[1], c=[1, 3, 5, 7, 9, 11], b=[0], sides=(0, 1, 2), bcs=_FULL_BC),
    2: dict(e=0, d=[1], c=[1, 6, 11], b=[70, 90, 110, 130], sides=(0, 1, 2), bcs=_CONV_BC),
    3: dict(e=0, d=[0], c=[1, 3, 5, 7, 9, 11], b=[0], sides=(0, 1, 2), bcs=_FULL_BC),
    4: dict(e=0, d=[0], c=[5, 8, 11], b=[50, 70, 90, 110], sides=(1, 2, 3), bcs=_CONV_BC),
    5: dict(e=1, d=[0], c=[100, 150, 200, 250, 300, 350], b=[0], sides=(0, 1, 2), bcs=_FULL_BC),
    6: dict(e=1, d=[0], c=[100, 200, 300], b=[700, 900, 1100, 1300], sides=(0, 1, 2), bcs=_CONV_BC),
    7: dict(e=1, d=[200, 300], c=[100, 200, 300], b=[0], sides=(0, 1, 2), bcs=_FULL_BC),
    8: dict(
        e=1, d=[200, 300], c=[100, 150, 200, 250, 300, 350], b=[900, 1100],
        sides=(1, 2, 3), bcs=_CONV_BC,
    ),
}


def class_specs(class_id: int, ic: float = 0.1, **overrides) -> list[PdeSpec]:
    """Enumerate the full parameter grid of one class in a fixed order."""
    g = PARAM_GRID[class_id]
    if g["b"] == [0]:
        b_pairs = [(0.0, 0.0)]
    else:
        b_pairs = list(itertools.product(g["b"], repeat=2))
    specs = []
    for d, c, (bx, by), vals in itertools.product(
        g["d"], g["c"], b_pairs, itertools.product(g["bcs"], repeat=3)
    ):
        bc = [ic] * 4
        for side, v in zip(g["sides"], vals):
            bc[side] = v
        specs.append(
            PdeSpec(e=g["e"], d=d, c=c, bx=bx, by=by, bc=tuple(bc), ic=ic, **overrides)
        )
    return specs


def sample_id(class_id: int, index: int) -> str:
    return f"c{class_id}_{index:04d}"


def _solve_one(args):
    spec, cfg, normalize = args
    try:
        field = solve(spec, cfg)
    except Exception as exc:  # tag with the parameter tuple
        raise SampleError(spec.to_dict(), exc) from exc
    if normalize:
        field, _ = normalize_field(field)
    return field


def generate_dataset(
    seed: int = 0,
    classes=range(1, 9),
    cfg: SolverConfig | None = None,
    threads: int = 1,
    normalize: bool = True,
    keep_fields: bool = True,
) -> Dataset:
    """Simulate every parameter tuple of the requested classes.

    Output order is class order then enumeration order regardless of
    ``threads``. ``seed`` is recorded for downstream shuffling only.
    """
    cfg = cfg or SolverConfig()
    entries = []
    for cid in sorted(set(int(c) for c in classes)):
        for i, spec in enumerate(class_specs(cid)):
            entries.append((cid, i, spec))
    jobs = [(spec, cfg, normalize) for _, _, spec in entries]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            fields = list(pool.map(_solve_one, jobs, chunksize=8))
    else:
        fields = [_solve_one(j) for j in jobs]
    samples = [
        Sample(spec=spec, labels=spec.labels, sample_id=sample_id(cid, i),
               field=f if keep_fields else None)
        for (cid, i, spec), f in zip(entries, fields)
    ]
    return Dataset(samples=samples, seed=seed)
