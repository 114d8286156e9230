"""Assembly of the 46-entry feature vector and per-task feature masks."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .core import FAMILIES, FEATURE_NAMES, FeatureVector, GridField, PdeSpec
from .errors import FeatureError
from .motion import motion_magnitude, motion_vectors
from .signal import (
    amplitude_features,
    delta_signal,
    envelopes,
    fft_features,
    orient_signal,
    prepare_signal,
    stats_features,
)
from .spatial import spatial_features

TASK_FAMILIES: dict[str, tuple[str, ...]] = {
    "utt": ("stat", "amp", "fft", "motion"),
    "ut": ("stat", "amp", "fft", "motion"),
    "conv": ("motion", "sym"),
    "multiclass": tuple(FAMILIES),
}
TASKS = ("utt", "ut", "conv")


def extract_all(field: GridField, spec: PdeSpec) -> FeatureVector:
    """Feature vector of a normalized field, in ``FEATURE_NAMES`` order."""
    try:
        prepared = prepare_signal(orient_signal(delta_signal(field)))
    except Exception as exc:
        raise FeatureError("stat", exc) from exc
    blocks = []
    for fam, fn in (
        ("stat", lambda: stats_features(prepared)),
        ("amp", lambda: amplitude_features(envelopes(prepared))),
        ("fft", lambda: fft_features(prepared)),
        ("motion", lambda: [motion_magnitude(motion_vectors(field))]),
        ("sym", lambda: spatial_features(field, spec)),
    ):
        try:
            blocks.append(np.asarray(fn(), dtype=np.float64))
        except Exception as exc:
            raise FeatureError(fam, exc) from exc
    return FeatureVector(np.concatenate(blocks))


def _extract_pair(args):
    field, spec = args
    return extract_all(field, spec).values


def extract_many(pairs, threads: int = 1) -> np.ndarray:
    """Feature matrix for ``(field, spec)`` pairs, rows in input order."""
    pairs = list(pairs)
    if not pairs:
        return np.empty((0, len(FEATURE_NAMES)))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_extract_pair, pairs, chunksize=8))
    else:
        rows = [_extract_pair(p) for p in pairs]
    return np.vstack(rows)


def families_mask(families) -> list[str]:
    fams = set(families)
    unknown = fams - set(FAMILIES)
    if unknown:
        raise ValueError(f"unknown feature families: {sorted(unknown)}")
    return [n for n in FEATURE_NAMES if n.split("_", 1)[0] in fams]


def task_mask(task: str) -> list[str]:
    if task not in TASK_FAMILIES:
        raise ValueError(f"unknown task {task!r}")
    return families_mask(TASK_FAMILIES[task])


def column_indices(names) -> np.ndarray:
    pos = {n: i for i, n in enumerate(FEATURE_NAMES)}
    return np.array([pos[n] for n in names], dtype=int)
