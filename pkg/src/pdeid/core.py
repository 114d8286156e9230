"""Domain types, class encoding and per-sample normalization."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

#: Presence bits (u_tt, u_t, convection) for class ids 1..8.
CLASS_BITS: dict[int, tuple[int, int, int]] = {
    1: (0, 1, 0),
    2: (0, 1, 1),
    3: (0, 0, 0),
    4: (0, 0, 1),
    5: (1, 0, 0),
    6: (1, 0, 1),
    7: (1, 1, 0),
    8: (1, 1, 1),
}
_BITS_CLASS = {bits: cid for cid, bits in CLASS_BITS.items()}

CLASS_NAMES = {
    1: "u_t - c lap(u) = 0",
    2: "u_t - c lap(u) + B grad(u) = 0",
    3: "- c lap(u) = 0",
    4: "- c lap(u) + B grad(u) = 0",
    5: "u_tt - c lap(u) = 0",
    6: "u_tt - c lap(u) + B grad(u) = 0",
    7: "u_tt + d u_t - c lap(u) = 0",
    8: "u_tt + d u_t - c lap(u) + B grad(u) = 0",
}

STAT_NAMES = [
    "stat_mean_50_450",
    "stat_std_50_450",
    "stat_min_350_450",
    "stat_max_350_450",
    "stat_mean_350_450",
    "stat_std_350_450",
    "stat_skew_50_450",
]
AMP_NAMES = [
    "amp_max_50_450",
    "amp_argmax_50_450",
    "amp_mean_350_450",
    "amp_std_350_450",
    "amp_skew_350_450",
    "amp_mean_250_450",
    "amp_std_250_450",
    "amp_n_peaks",
    "amp_n_valleys",
    "amp_mean_ratio",
    "amp_max_ratio",
]
FFT_NAMES = [
    f"fft_bin{b}_{stat}" for b in range(1, 6) for stat in ("mean", "std", "min", "max")
]
MOTION_NAMES = ["motion_magnitude"]
SYM_NAMES = [
    "sym_mean",
    "sym_std",
    "sym_min",
    "sym_max",
    "sym_abs_mean",
    "sym_abs_std",
    "sym_skew",
]

FAMILIES: dict[str, list[str]] = {
    "stat": STAT_NAMES,
    "amp": AMP_NAMES,
    "fft": FFT_NAMES,
    "motion": MOTION_NAMES,
    "sym": SYM_NAMES,
}
FEATURE_NAMES: list[str] = [name for names in FAMILIES.values() for name in names]


def family_of(name: str) -> str:
    return name.split("_", 1)[0]


def class_from_bits(has_utt: int, has_ut: int, has_conv: int) -> int:
    return _BITS_CLASS[(int(bool(has_utt)), int(bool(has_ut)), int(bool(has_conv)))]


def bits_from_class(class_id: int) -> tuple[int, int, int]:
    return CLASS_BITS[int(class_id)]


@dataclass(frozen=True)
class TermLabels:
    has_utt: int
    has_ut: int
    has_conv: int

    @property
    def class_id(self) -> int:
        return class_from_bits(self.has_utt, self.has_ut, self.has_conv)

    @property
    def bits(self) -> tuple[int, int, int]:
        return (self.has_utt, self.has_ut, self.has_conv)

    @classmethod
    def from_class(cls, class_id: int) -> "TermLabels":
        return cls(*bits_from_class(class_id))


@dataclass(frozen=True)
class GridField:
    """Solution tensor ``u(t, y, x)`` on a regular grid.

    ``values`` is stored read-only; ``dt`` is the time between stored frames.
    """

    values: np.ndarray
    dt: float = 1e-4

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 3:
            raise ValueError(f"GridField needs a (t, y, x) array, got shape {v.shape}")
        nt, ny, nx = v.shape
        if nt < 2 or ny < 3 or nx < 3:
            raise ValueError(f"GridField too small: {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("GridField contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def nt(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def nx(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


@dataclass(frozen=True)
class PdeSpec:
    """Coefficients and setup of ``e u_tt + d u_t - c lap(u) + B.grad(u) = 0``.

    Boundary values follow ``bc = (x-min, y-min, y-max, x-max)``.
    """

    e: float = 0.0
    d: float = 1.0
    c: float = 1.0
    bx: float = 0.0
    by: float = 0.0
    bc: tuple[float, float, float, float] = (0.1, 0.1, 0.1, 0.1)
    ic: float = 0.1
    dt_sim: float = 1e-4
    nt: int = 500
    ny: int = 21
    nx: int = 21
    domain_len: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "bc", tuple(float(b) for b in self.bc))
        if len(self.bc) != 4:
            raise ValueError("bc needs exactly four values")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.e not in (0, 1):
            raise ValueError(f"e must be 0 or 1, got {self.e}")
        if self.d < 0:
            raise ValueError(f"d must be non-negative, got {self.d}")

    @property
    def steady(self) -> bool:
        return self.e == 0 and self.d == 0

    @property
    def labels(self) -> TermLabels:
        return TermLabels(
            int(self.e != 0), int(self.d != 0), int(self.bx != 0 or self.by != 0)
        )

    def to_dict(self) -> dict:
        return {
            "e": self.e,
            "d": self.d,
            "c": self.c,
            "bx": self.bx,
            "by": self.by,
            "bc": list(self.bc),
            "ic": self.ic,
            "dt_sim": self.dt_sim,
            "nt": self.nt,
            "ny": self.ny,
            "nx": self.nx,
            "domain_len": self.domain_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PdeSpec":
        d = dict(d)
        d["bc"] = tuple(d["bc"])
        return cls(**d)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...] = tuple(FEATURE_NAMES)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).copy()
        if v.shape != (len(self.names),):
            raise ValueError(f"expected {len(self.names)} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("FeatureVector contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", tuple(self.names))

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def family(self, fam: str) -> np.ndarray:
        return np.array([v for n, v in zip(self.names, self.values) if family_of(n) == fam])


@dataclass
class Sample:
    spec: PdeSpec
    labels: TermLabels
    sample_id: str
    field: GridField | None = None
    features: FeatureVector | None = None


@dataclass
class Dataset:
    samples: list[Sample] = dc_field(default_factory=list)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def class_ids(self) -> np.ndarray:
        return np.array([s.labels.class_id for s in self.samples], dtype=int)

    def feature_matrix(self) -> np.ndarray:
        return np.vstack([s.features.values for s in self.samples])


def normalize_field(field: GridField) -> tuple[GridField, bool]:
    """Min-max scale a field into [0, 1].

    Returns the scaled field and a flag that is True when the input was
    constant, in which case the result is all zeros.
    """
    v = field.values
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return GridField(np.zeros_like(v), dt=field.dt), True
    return GridField((v - lo) / (hi - lo), dt=field.dt), False
