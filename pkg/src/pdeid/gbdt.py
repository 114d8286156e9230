"""Second-order gradient boosted regression trees with exact greedy splits.

Binary detectors use the logistic loss, multiclass models the softmax
cross-entropy with one tree per class per round. Split gain accumulated per
feature is kept for gain-based importance.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import FAMILIES, family_of
from .errors import DegenerateLabels, DimensionMismatch, UntrainedModel

FORMAT_VERSION = 1
BINARY = "binary:logistic"
SOFTMAX = "multi:softmax"


@dataclass(frozen=True)
class TrainConfig:
    rounds: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    lambda_l2: float = 1.0
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")


@dataclass
class Tree:
    """Flat tree; a node is a leaf when ``feature[i] == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while rows.size:
            f = self.feature[node[rows]]
            internal = f >= 0
            rows, f = rows[internal], f[internal]
            if not rows.size:
                break
            cur = node[rows]
            go_left = X[rows, f] < self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(len(X), dtype=np.int64)
        for _ in range(len(self.feature)):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            idx = np.nonzero(internal)[0]
            cur = node[idx]
            go_left = X[idx, f[idx]] < self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


class _TreeBuilder:
    def __init__(self, X, XT, g, h, cfg: TrainConfig, gain_totals):
        self.X, self.XT, self.g, self.h = X, XT, g, h
        self.lam = cfg.lambda_l2
        self.mcw = cfg.min_child_weight
        self.lr = cfg.learning_rate
        self.max_depth = cfg.max_depth
        self.gain_totals = gain_totals
        self.nodes: list[list] = []  # [feature, threshold, left, right, value]

    def build(self, order: np.ndarray) -> Tree:
        self._grow(order, 0)
        cols = list(zip(*self.nodes))
        return Tree(
            np.array(cols[0], dtype=np.int64),
            np.array(cols[1], dtype=np.float64),
            np.array(cols[2], dtype=np.int64),
            np.array(cols[3], dtype=np.int64),
            np.array(cols[4], dtype=np.float64),
        )

    def _grow(self, order: np.ndarray, depth: int) -> int:
        # order: (F, m) row indices of this node, sorted per feature
        rows = order[0]
        G = float(self.g[rows].sum())
        H = float(self.h[rows].sum())
        node_id = len(self.nodes)
        self.nodes.append([-1, 0.0, -1, -1, -G / (H + self.lam) * self.lr])
        m = order.shape[1]
        if depth >= self.max_depth or m < 2:
            return node_id

        xs = np.take_along_axis(self.XT, order, axis=1)
        GL = np.cumsum(self.g[order], axis=1)[:, :-1]
        HL = np.cumsum(self.h[order], axis=1)[:, :-1]
        GR = G - GL
        HR = H - HL
        gain = 0.5 * (
            GL**2 / (HL + self.lam) + GR**2 / (HR + self.lam) - G**2 / (H + self.lam)
        )
        ok = (xs[:, 1:] > xs[:, :-1]) & (HL >= self.mcw) & (HR >= self.mcw)
        gain = np.where(ok, gain, -np.inf)
        # row-major argmax: ties go to the lowest feature, then lowest threshold
        best = int(np.argmax(gain))
        f, k = divmod(best, m - 1)
        best_gain = gain[f, k]
        if not best_gain > 0:
            return node_id

        lo, hi = xs[f, k], xs[f, k + 1]
        thr = 0.5 * (lo + hi)
        if not lo < thr <= hi:
            thr = hi
        self.gain_totals[f] += best_gain

        go_left = np.zeros(len(self.X), dtype=bool)
        go_left[order[f, : k + 1]] = True
        sel = go_left[order]
        n_left = k + 1
        left_order = order[sel].reshape(order.shape[0], n_left)
        right_order = order[~sel].reshape(order.shape[0], m - n_left)

        node = self.nodes[node_id]
        node[0], node[1] = f, float(thr)
        node[2] = self._grow(left_order, depth + 1)
        node[3] = self._grow(right_order, depth + 1)
        return node_id


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class GbdtModel:
    objective: str
    classes: list
    feature_names: list
    learning_rate: float
    base_score: float = 0.5
    trees: list = field(default_factory=list)
    gain_totals: np.ndarray | None = None
    config: dict = field(default_factory=dict)
    train_loss: list = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected {self.n_features} features, got {X.shape[1]}"
            )
        return X

    def raw_margin(self, X) -> np.ndarray:
        X = self._check(X)
        if self.objective == BINARY:
            p = min(max(self.base_score, 1e-15), 1 - 1e-15)
            out = np.full(len(X), np.log(p / (1 - p)))
            for tree in self.trees:
                out += tree.predict(X)
            return out
        K = self.n_classes
        out = np.zeros((len(X), K))
        for i, tree in enumerate(self.trees):
            out[:, i % K] += tree.predict(X)
        return out

    def predict_proba(self, X) -> np.ndarray:
        """Class probabilities, columns ordered as ``classes``."""
        m = self.raw_margin(X)
        if self.objective == BINARY:
            p = _sigmoid(m)
            return np.column_stack([1.0 - p, p])
        return _softmax(m)

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.classes)[np.argmax(self.predict_proba(X), axis=1)]

    def to_json(self) -> str:
        doc = {
            "format": "pdeid-gbdt",
            "version": FORMAT_VERSION,
            "objective": self.objective,
            "classes": [int(c) for c in self.classes],
            "feature_names": list(self.feature_names),
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "config": self.config,
            "gain_totals": [float(v) for v in self.gain_totals],
            "train_loss": [float(v) for v in self.train_loss],
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        doc = json.loads(text)
        if doc.get("format") != "pdeid-gbdt" or doc.get("version") != FORMAT_VERSION:
            raise ValueError("not a pdeid-gbdt v1 model document")
        return cls(
            objective=doc["objective"],
            classes=doc["classes"],
            feature_names=doc["feature_names"],
            learning_rate=doc["learning_rate"],
            base_score=doc["base_score"],
            trees=[Tree.from_dict(t) for t in doc["trees"]],
            gain_totals=np.asarray(doc["gain_totals"], dtype=np.float64),
            config=doc["config"],
            train_loss=doc["train_loss"],
        )


def _logloss(y, margin):
    # log(1 + exp(-s m)) with s = 2y - 1, computed stably
    s = 2.0 * y - 1.0
    return float(np.mean(np.logaddexp(0.0, -s * margin)))


def _xent(Y, margin):
    z = margin - margin.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-np.mean(np.sum(Y * logp, axis=1)))


def fit(
    X,
    y,
    objective: str | None = None,
    cfg: TrainConfig | None = None,
    feature_names=None,
) -> GbdtModel:
    """Train a boosted ensemble.

    ``objective`` defaults to logistic for labels {0, 1} and softmax otherwise.
    """
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatch(f"X shape {X.shape} vs {len(y)} labels")
    classes = sorted(np.unique(y).tolist())
    if len(classes) < 2:
        raise DegenerateLabels(f"need at least two classes, got {classes}")
    if objective is None:
        objective = BINARY if classes == [0, 1] else SOFTMAX
    if objective == BINARY and len(classes) != 2:
        raise DegenerateLabels("binary objective needs exactly two classes")
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(X.shape[1])]
    if len(feature_names) != X.shape[1]:
        raise DimensionMismatch("feature_names length does not match X")

    n, F = X.shape
    XT = np.ascontiguousarray(X.T)
    order_all = np.argsort(XT, axis=1, kind="stable")
    rng = np.random.default_rng(cfg.seed)
    gain_totals = np.zeros(F)
    model = GbdtModel(
        objective=objective,
        classes=classes,
        feature_names=list(feature_names),
        learning_rate=cfg.learning_rate,
        base_score=0.5,
        gain_totals=gain_totals,
        config=asdict(cfg),
    )
    y_idx = np.searchsorted(classes, y)

    def node_order():
        if cfg.subsample >= 1.0:
            return order_all
        keep = rng.random(n) < cfg.subsample
        if keep.sum() < 2:
            keep[rng.choice(n, 2, replace=False)] = True
        return order_all[keep[order_all]].reshape(F, int(keep.sum()))

    if objective == BINARY:
        yb = y_idx.astype(np.float64)
        margin = np.zeros(n)
        model.train_loss.append(_logloss(yb, margin))
        for _ in range(cfg.rounds):
            p = _sigmoid(margin)
            g = p - yb
            h = np.maximum(p * (1.0 - p), 1e-16)
            tree = _TreeBuilder(X, XT, g, h, cfg, gain_totals).build(node_order())
            model.trees.append(tree)
            margin += tree.predict(X)
            model.train_loss.append(_logloss(yb, margin))
    else:
        K = len(classes)
        Y = np.eye(K)[y_idx]
        margin = np.zeros((n, K))
        model.train_loss.append(_xent(Y, margin))
        for _ in range(cfg.rounds):
            P = _softmax(margin)
            order = node_order()
            new = []
            for k in range(K):
                g = P[:, k] - Y[:, k]
                h = np.maximum(P[:, k] * (1.0 - P[:, k]), 1e-16)
                new.append(_TreeBuilder(X, XT, g, h, cfg, gain_totals).build(order))
            for k, tree in enumerate(new):
                margin[:, k] += tree.predict(X)
            model.trees.extend(new)
            model.train_loss.append(_xent(Y, margin))
    return model


def feature_scores(model: GbdtModel) -> dict[str, float]:
    """Per-feature share of total split gain, in percent."""
    if model.gain_totals is None or not model.trees:
        raise UntrainedModel("model has no trees")
    total = model.gain_totals.sum()
    if total <= 0:
        return {n: 0.0 for n in model.feature_names}
    return {n: 100.0 * g / total for n, g in zip(model.feature_names, model.gain_totals)}


def feature_importance(model: GbdtModel) -> dict[str, float]:
    """Gain per feature family, divided by the family's feature count, in percent."""
    if model.gain_totals is None or not model.trees:
        raise UntrainedModel("model has no trees")
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for name, g in zip(model.feature_names, model.gain_totals):
        fam = family_of(name)
        sums[fam] = sums.get(fam, 0.0) + float(g)
        counts[fam] = counts.get(fam, 0) + 1
    per = {fam: sums[fam] / counts[fam] for fam in sums}
    total = sum(per.values())
    order = [f for f in FAMILIES if f in per] + [f for f in per if f not in FAMILIES]
    if total <= 0:
        return {fam: 0.0 for fam in order}
    return {fam: 100.0 * per[fam] / total for fam in order}
