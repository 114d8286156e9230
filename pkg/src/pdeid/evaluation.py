"""Experiment harness: stratified splits, the term-detector pipeline,
leave-one-equation-out, feature ablation and confusion matrices."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import CLASS_BITS, FAMILIES, FEATURE_NAMES, TermLabels, class_from_bits
from .errors import EmptyMask, LengthMismatch, MaskMismatch
from .features import TASKS, column_indices, families_mask, task_mask
from .gbdt import GbdtModel, TrainConfig, fit

CLASS_IDS = tuple(range(1, 9))


@dataclass
class FeatureTable:
    """Feature matrix with labels and sample ids, rows in manifest order."""

    X: np.ndarray
    class_ids: np.ndarray
    ids: list
    names: tuple = tuple(FEATURE_NAMES)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(-1, len(self.names))
        self.class_ids = np.asarray(self.class_ids, dtype=int)
        self.ids = list(self.ids)
        if not len(self.X) == len(self.class_ids) == len(self.ids):
            raise LengthMismatch("rows, labels and ids differ in length")

    def __len__(self) -> int:
        return len(self.class_ids)

    @property
    def bits(self) -> np.ndarray:
        return np.array([CLASS_BITS[c] for c in self.class_ids], dtype=int).reshape(-1, 3)

    def subset(self, idx) -> "FeatureTable":
        idx = np.asarray(idx, dtype=int)
        return FeatureTable(self.X[idx], self.class_ids[idx], [self.ids[i] for i in idx], self.names)

    @classmethod
    def from_dataset(cls, ds) -> "FeatureTable":
        return cls(ds.feature_matrix(), ds.class_ids, [s.sample_id for s in ds.samples])


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def split_dataset(table: FeatureTable, ratio: float = 0.8, seed: int = 0):
    """Stratified train/test index split; ``floor(ratio * n_k)`` per class go to train."""
    if not len(table):
        raise ValueError("empty dataset")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cid in np.unique(table.class_ids):
        idx = np.nonzero(table.class_ids == cid)[0]
        idx = idx[rng.permutation(len(idx))]
        n_train = int(np.floor(ratio * len(idx) + 1e-9))
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def confusion_matrix(truth, pred, labels=CLASS_IDS):
    """Rows are ground truth, columns predictions; returns (counts, accuracy)."""
    truth = np.asarray(truth, dtype=int)
    pred = np.asarray(pred, dtype=int)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"{truth.shape} vs {pred.shape}")
    pos = {c: i for i, c in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=int)
    np.add.at(cm, ([pos[t] for t in truth], [pos[p] for p in pred]), 1)
    acc = float(np.trace(cm) / cm.sum()) if cm.sum() else 0.0
    return cm, acc


def train_detectors(table: FeatureTable, cfg: TrainConfig | None = None) -> dict[str, GbdtModel]:
    """One binary model per term, each on its task's feature columns."""
    cfg = cfg or TrainConfig()
    bits = table.bits
    models = {}
    for j, task in enumerate(TASKS):
        names = task_mask(task)
        models[task] = fit(
            table.X[:, column_indices(names)], bits[:, j], cfg=cfg, feature_names=names
        )
    return models


def detector_probabilities(detectors: dict[str, GbdtModel], X) -> np.ndarray:
    """(n, 3) presence probabilities for (u_tt, u_t, convection)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = []
    for task in TASKS:
        model = detectors[task]
        names = task_mask(task)
        if list(model.feature_names) != names:
            raise MaskMismatch(f"{task} detector was trained on different features")
        out.append(model.predict_proba(X[:, column_indices(names)])[:, 1])
    return np.column_stack(out)


def bits_from_probabilities(probs, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(probs) > threshold).astype(int)


def identify_equation(detectors: dict[str, GbdtModel], x) -> TermLabels:
    bits = bits_from_probabilities(detector_probabilities(detectors, x))[0]
    return TermLabels(*map(int, bits))


def identify_many(detectors: dict[str, GbdtModel], X) -> np.ndarray:
    bits = bits_from_probabilities(detector_probabilities(detectors, X))
    return np.array([class_from_bits(*b) for b in bits], dtype=int)


@dataclass
class LoeoResult:
    histograms: dict  # held-out class -> counts of predicted classes 1..8
    accuracy: dict  # held-out class -> fraction correct
    train_ids: dict  # held-out class -> ids used for training

    @property
    def average(self) -> float:
        return float(np.mean([self.accuracy[c] for c in sorted(self.accuracy)]))

    def table(self) -> list[list]:
        rows = []
        for c in sorted(self.histograms):
            rows.append([c, *self.histograms[c].tolist(), 100.0 * self.accuracy[c]])
        return rows


def _loeo_fold(args):
    table, held, cfg = args
    train_idx = np.nonzero(table.class_ids != held)[0]
    test_idx = np.nonzero(table.class_ids == held)[0]
    train = table.subset(train_idx)
    detectors = train_detectors(train, cfg)
    pred = identify_many(detectors, table.X[test_idx])
    hist = np.array([(pred == c).sum() for c in CLASS_IDS], dtype=int)
    return held, hist, float(np.mean(pred == held)), train.ids


def leave_one_equation_out(
    table: FeatureTable, cfg: TrainConfig | None = None, threads: int = 1
) -> LoeoResult:
    cfg = cfg or TrainConfig()
    present = sorted(set(table.class_ids.tolist()))
    if present != list(CLASS_IDS):
        raise ValueError(f"LOEO needs all 8 classes, found {present}")
    jobs = [(table, c, replace(cfg, seed=fold_seed(cfg.seed, c))) for c in CLASS_IDS]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_loeo_fold, jobs))
    else:
        results = [_loeo_fold(j) for j in jobs]
    hist, acc, ids = {}, {}, {}
    for held, h, a, tr_ids in results:
        hist[held], acc[held], ids[held] = h, a, tr_ids
    return LoeoResult(hist, acc, ids)


def multiclass_run(
    table: FeatureTable,
    cfg: TrainConfig | None = None,
    families=None,
    ratio: float = 0.8,
    split_seed: int = 0,
) -> dict:
    """Multiclass 80/20 experiment on the chosen feature families."""
    cfg = cfg or TrainConfig()
    names = families_mask(families) if families is not None else list(FEATURE_NAMES)
    if not names:
        raise EmptyMask("no features selected")
    cols = column_indices(names)
    tr, te = split_dataset(table, ratio, split_seed)
    model = fit(table.X[tr][:, cols], table.class_ids[tr], cfg=cfg, feature_names=names)
    pred = model.predict(table.X[te][:, cols]).astype(int)
    cm, acc = confusion_matrix(table.class_ids[te], pred)
    truth_conv = table.bits[te][:, 2]
    pred_conv = np.array([CLASS_BITS[p][2] for p in pred], dtype=int)
    return {
        "model": model,
        "test_idx": te,
        "pred": pred,
        "confusion": cm,
        "accuracy": acc,
        "conv_accuracy": float(np.mean(truth_conv == pred_conv)) if len(te) else 0.0,
    }


def pipeline_run(table: FeatureTable, cfg: TrainConfig | None = None, ratio=0.8, split_seed=0):
    """Detector pipeline on a stratified split; returns accuracy and confusion."""
    tr, te = split_dataset(table, ratio, split_seed)
    detectors = train_detectors(table.subset(tr), cfg)
    pred = identify_many(detectors, table.X[te])
    cm, acc = confusion_matrix(table.class_ids[te], pred)
    return {"detectors": detectors, "pred": pred, "confusion": cm, "accuracy": acc}


def _ablation_cell(args):
    table, fams, cfg, split_seed = args
    run = multiclass_run(table, cfg, fams, split_seed=split_seed)
    return run["accuracy"], run["conv_accuracy"]


def ablation(
    table: FeatureTable,
    families_list=None,
    cfg: TrainConfig | None = None,
    seeds=(0,),
    threads: int = 1,
) -> list[dict]:
    """Accuracy per feature-family subset; the full set is always included last.

    Each seed re-draws the split and the learner seed.
    """
    cfg = cfg or TrainConfig()
    if families_list is None:
        families_list = [(f,) for f in FAMILIES]
    subsets = [tuple(f) for f in families_list]
    for fams in subsets:
        if not fams:
            raise EmptyMask("empty feature-family subset")
    full = tuple(FAMILIES)
    if full not in subsets:
        subsets.append(full)
    jobs = [
        (table, fams, replace(cfg, seed=fold_seed(cfg.seed + s, i)), s)
        for i, fams in enumerate(subsets)
        for s in seeds
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_ablation_cell, jobs))
    else:
        results = [_ablation_cell(j) for j in jobs]
    rows = []
    k = 0
    for fams in subsets:
        accs, convs = [], []
        for _ in seeds:
            a, c = results[k]
            accs.append(a)
            convs.append(c)
            k += 1
        rows.append({
            "families": "+".join(fams),
            "accuracy": float(np.mean(accs)),
            "accuracy_per_seed": accs,
            "conv_accuracy": float(np.mean(convs)),
        })
    return rows
