import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdeid.core import CLASS_BITS, FEATURE_NAMES, TermLabels
from pdeid.errors import EmptyMask, LengthMismatch, MaskMismatch
from pdeid.evaluation import (
    CLASS_IDS,
    FeatureTable,
    ablation,
    bits_from_probabilities,
    confusion_matrix,
    identify_equation,
    identify_many,
    leave_one_equation_out,
    multiclass_run,
    split_dataset,
)
from pdeid.features import TASKS, column_indices, task_mask
from pdeid.gbdt import BINARY, GbdtModel, TrainConfig

from .oracles import naive_confusion

NF = len(FEATURE_NAMES)


def synthetic_table(per_class=20, seed=0, noise=0.1):
    """Each term bit is written (with noise) into its own column of its task's features."""
    rng = np.random.default_rng(seed)
    cids = np.repeat(CLASS_IDS, per_class)
    X = rng.normal(size=(len(cids), NF))
    for j, (task, k) in enumerate(zip(TASKS, (0, 1, -1))):
        col = column_indices(task_mask(task))[k]
        X[:, col] = [CLASS_BITS[c][j] for c in cids] + noise * rng.normal(size=len(cids))
    ids = [f"s{i:04d}" for i in range(len(cids))]
    return FeatureTable(X, cids, ids)


def constant_detectors(probs):
    return {
        task: GbdtModel(BINARY, [0, 1], task_mask(task), 0.1, base_score=p,
                        gain_totals=np.zeros(len(task_mask(task))))
        for task, p in zip(TASKS, probs)
    }


def test_table_length_mismatch():
    with pytest.raises(LengthMismatch):
        FeatureTable(np.zeros((3, NF)), [1, 2], ["a", "b", "c"])


def test_split_sizes_full_dataset():
    table = FeatureTable(np.zeros((3072, NF)), np.repeat(CLASS_IDS, 384), [str(i) for i in range(3072)])
    tr, te = split_dataset(table, 0.8, seed=0)
    assert (len(tr), len(te)) == (2456, 616)
    for c in CLASS_IDS:
        n = (table.class_ids[tr] == c).sum()
        assert n in (307, 308)
    assert not set(tr) & set(te)
    tr2, te2 = split_dataset(table, 0.8, seed=0)
    np.testing.assert_array_equal(tr, tr2)
    np.testing.assert_array_equal(te, te2)
    tr3, te3 = split_dataset(table, 1.0, seed=0)
    assert len(tr3) == 3072 and len(te3) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.floats(0.0, 1.0), st.integers(0, 1000))
def test_split_is_a_stratified_partition(per_class, ratio, seed):
    table = synthetic_table(per_class, seed=1)
    tr, te = split_dataset(table, ratio, seed)
    np.testing.assert_array_equal(np.sort(np.concatenate([tr, te])), np.arange(len(table)))
    for c in CLASS_IDS:
        assert (table.class_ids[tr] == c).sum() == int(np.floor(ratio * per_class + 1e-9))


def test_identify_applies_half_threshold():
    assert identify_equation(constant_detectors((0.9, 0.1, 0.05)), np.zeros(NF)).class_id == 5
    assert identify_equation(constant_detectors((0.2, 0.8, 0.9)), np.zeros(NF)) == TermLabels(0, 1, 1)
    # exactly 0.5 counts as absent
    np.testing.assert_array_equal(bits_from_probabilities([0.5, 0.51]), [0, 1])


def test_identify_rejects_wrong_mask():
    det = constant_detectors((0.9, 0.9, 0.9))
    det["ut"] = GbdtModel(BINARY, [0, 1], task_mask("conv"), 0.1, gain_totals=np.zeros(len(task_mask("conv"))))
    with pytest.raises(MaskMismatch):
        identify_many(det, np.zeros((2, NF)))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 8), st.integers(1, 8)), min_size=1, max_size=60))
def test_confusion_matches_oracle(pairs):
    truth, pred = map(np.array, zip(*pairs))
    cm, acc = confusion_matrix(truth, pred)
    np.testing.assert_array_equal(cm, naive_confusion(truth, pred, CLASS_IDS))
    assert cm.sum() == len(truth)
    assert acc == pytest.approx(np.mean(truth == pred))


def test_confusion_special_cases():
    truth = np.repeat(CLASS_IDS, 3)
    cm, acc = confusion_matrix(truth, truth)
    assert acc == 1.0 and np.all(cm == np.diag(np.diag(cm)))
    cm, _ = confusion_matrix(truth, np.ones_like(truth))
    assert cm[:, 0].sum() == len(truth) and cm[:, 1:].sum() == 0
    with pytest.raises(LengthMismatch):
        confusion_matrix([1, 2], [1])


def test_loeo_never_trains_on_held_out_class():
    table = synthetic_table(15)
    res = leave_one_equation_out(table, TrainConfig(rounds=10))
    for c in CLASS_IDS:
        held = {sid for sid, k in zip(table.ids, table.class_ids) if k == c}
        assert not held & set(res.train_ids[c])
        assert len(res.train_ids[c]) == 7 * 15
        assert res.histograms[c].sum() == 15
    assert res.average == pytest.approx(np.mean([res.accuracy[c] for c in CLASS_IDS]))
    # the bits are cleanly encoded, so unseen combinations are still recovered
    assert res.average >= 0.9
    rows = res.table()
    assert [r[0] for r in rows] == list(CLASS_IDS) and len(rows[0]) == 10


def test_loeo_needs_every_class():
    table = synthetic_table(5).subset(np.arange(35))
    with pytest.raises(ValueError):
        leave_one_equation_out(table)


def test_multiclass_and_ablation():
    table = synthetic_table(20)
    run = multiclass_run(table, TrainConfig(rounds=20))
    assert run["accuracy"] >= 0.9
    assert run["confusion"].sum() == len(run["test_idx"]) == 8 * 4
    with pytest.raises(EmptyMask):
        multiclass_run(table, families=())
    rows = ablation(table, [("stat",)], TrainConfig(rounds=5), seeds=(0, 1))
    assert [r["families"] for r in rows] == ["stat", "stat+amp+fft+motion+sym"]
    assert all(len(r["accuracy_per_seed"]) == 2 for r in rows)
    with pytest.raises(EmptyMask):
        ablation(table, [()])
