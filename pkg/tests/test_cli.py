import json
import subprocess
import sys

import numpy as np
import pytest

from pdeid import cli
from pdeid.errors import Unstable
from pdeid.formats import CSV_HEADER, MANIFEST_NAME, dataset_manifest, read_features, sha256_file, write_json, write_sample
from pdeid.solver import SolverConfig, class_specs, sample_id, solve

TRAIN = ["--rounds", "5", "--max-depth", "3"]


def run(*argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    """Four samples per class written in the generate layout, plus their features."""
    root = tmp_path_factory.mktemp("tiny")
    data = root / "data"
    entries = []
    for cid in range(1, 9):
        specs = class_specs(cid)
        for i in range(0, len(specs), 96):
            entries.append(write_sample(data, sample_id(cid, i), specs[i], solve(specs[i])))
    write_json(data / MANIFEST_NAME, dataset_manifest(entries, 0, range(1, 9), {}))
    features = root / "features.csv"
    assert run("featurize", "--data", data, "--out", features) == 0
    return data, features


def output_hashes(out):
    return json.loads((out / cli.RUN_MANIFEST).read_text())["outputs"]


def test_featurize_layout(tiny):
    data, features = tiny
    X, cids, ids = read_features(features)
    assert X.shape == (32, 46) and np.all(np.isfinite(X))
    manifest = json.loads((data / MANIFEST_NAME).read_text())
    assert ids == [e["id"] for e in manifest["samples"]]
    assert features.read_text().splitlines()[0].split(",") == CSV_HEADER
    run_doc = json.loads(features.with_name("features.run.json").read_text())
    assert run_doc["format"] == "pdeid-run"
    assert run_doc["outputs"]["features.csv"] == sha256_file(features)


def test_featurize_rerun_is_byte_identical(tiny, tmp_path):
    data, features = tiny
    again = tmp_path / "again.csv"
    assert run("featurize", "--data", data, "--out", again) == 0
    assert sha256_file(again) == sha256_file(features)


def test_featurize_empty_dataset_gives_header_only(tmp_path):
    write_json(tmp_path / MANIFEST_NAME, dataset_manifest([], 0, [], {}))
    out = tmp_path / "f.csv"
    assert run("featurize", "--data", tmp_path, "--out", out) == 0
    assert out.read_text().splitlines() == [",".join(CSV_HEADER)]


def test_featurize_reports_corrupt_samples(tmp_path, capsys):
    spec = class_specs(3)[0]
    entries = [write_sample(tmp_path, sample_id(3, i), spec, solve(spec)) for i in range(2)]
    write_json(tmp_path / MANIFEST_NAME, dataset_manifest(entries, 0, [3], {}))
    (tmp_path / entries[1]["bin"]).write_bytes(b"\0" * 16)
    out = tmp_path / "f.csv"
    assert run("featurize", "--data", tmp_path, "--out", out) == 2
    assert entries[1]["id"] in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("command, extra, expected", [
    ("train", ["--task", "pipeline"], ["model_utt.json", "model_ut.json", "model_conv.json",
                                        "importance_conv.csv", "importance_conv.png", "train_loss_ut.csv"]),
    ("train", ["--task", "multiclass"], ["model_multiclass.json", "feature_scores_multiclass.csv"]),
    ("evaluate", ["--split", "0.75"], ["confusion_multiclass.csv", "confusion_pipeline.png",
                                       "predictions.csv", "metrics.json"]),
    ("loeo", [], ["loeo_table.csv", "loeo.json", "loeo.png"]),
    ("ablation", ["--families", "stat,sym+motion", "--seeds", "2"], ["ablation.csv", "ablation.png"]),
    ("importance", ["--task", "conv"], ["importance_conv.csv", "importance_conv.png"]),
])
def test_training_commands_are_deterministic(tiny, tmp_path, command, extra, expected):
    _, features = tiny
    before = sha256_file(features)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert run(command, "--features", features, "--out", out, *TRAIN, *extra) == 0
        outs.append(out)
    for name in expected:
        assert (outs[0] / name).is_file(), name
    assert output_hashes(outs[0]) == output_hashes(outs[1])
    for name, digest in output_hashes(outs[0]).items():
        assert sha256_file(outs[1] / name) == digest
    assert sha256_file(features) == before


def test_loeo_table_layout(tiny, tmp_path):
    _, features = tiny
    assert run("loeo", "--features", features, "--out", tmp_path, *TRAIN) == 0
    lines = (tmp_path / "loeo_table.csv").read_text().splitlines()
    assert lines[0].split(",") == ["held_out", *[f"pred_{c}" for c in range(1, 9)], "accuracy_pct"]
    rows = [line.split(",") for line in lines[1:]]
    assert len(rows) == 8 and all(len(r) == 10 for r in rows)
    assert all(sum(int(v) for v in r[1:9]) == 4 for r in rows)


def test_importance_sums_to_hundred(tiny, tmp_path):
    _, features = tiny
    assert run("importance", "--features", features, "--out", tmp_path, "--task", "conv", *TRAIN) == 0
    lines = (tmp_path / "importance_conv.csv").read_text().splitlines()[1:]
    assert sum(float(line.split(",")[1]) for line in lines) == pytest.approx(100.0)


def test_evaluate_prints_accuracy(tiny, tmp_path, capsys):
    _, features = tiny
    assert run("evaluate", "--features", features, "--out", tmp_path, *TRAIN) == 0
    assert "multiclass accuracy:" in capsys.readouterr().out
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["n_test"] == 8


def test_coeff_and_signals(tiny, tmp_path):
    data, _ = tiny
    before = sha256_file(data / MANIFEST_NAME)
    out = tmp_path / "coeff"
    assert run("coeff", "--data", data, "--out", out, "--classes", "1,5,7") == 0
    summary = json.loads((out / "coefficients.json").read_text())
    assert set(summary) == {"1", "5", "7"}
    assert "damping_pairs" in summary["7"] and "median_relative_c_error" in summary["1"]
    assert len((out / "coefficients.csv").read_text().splitlines()) == 1 + 12
    sig = tmp_path / "signals"
    assert run("signals", "--data", data, "--out", sig) == 0
    for cid in range(1, 9):
        sid = sample_id(cid, 0)
        for suffix in ("_signal.csv", "_spectrum.csv", "_fft_bins.csv", "_signal.png", "_spectrum.png"):
            assert (sig / f"{sid}{suffix}").is_file()
    header = (sig / "c1_0000_signal.csv").read_text().splitlines()[0]
    assert header == "step,delta,prepared,upper,lower,amplitude"
    assert run("signals", "--data", data, "--out", sig, "--ids", "nope") == 2
    assert sha256_file(data / MANIFEST_NAME) == before


def test_generate_single_class_and_rerun(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("generate", "--classes", "3", "--out", a) == 0
    assert run("generate", "--classes", "3", "--out", b) == 0
    manifest = json.loads((a / MANIFEST_NAME).read_text())
    assert manifest["count"] == 384
    assert {e["class_id"] for e in manifest["samples"]} == {3}
    assert sha256_file(a / MANIFEST_NAME) == sha256_file(b / MANIFEST_NAME)
    meta = json.loads((a / manifest["samples"][0]["meta"]).read_text())
    assert meta["spec"]["e"] == 0 and meta["spec"]["d"] == 0


def test_generate_failure_removes_partial_output(tmp_path, monkeypatch):
    calls = {"n": 0}
    real = cli._solve_one

    def flaky(args):
        calls["n"] += 1
        if calls["n"] > 3:
            raise Unstable("injected failure")
        return real(args)

    monkeypatch.setattr(cli, "_solve_one", flaky)
    out = tmp_path / "fresh"
    assert run("generate", "--classes", "3", "--out", out) == 3
    assert not out.exists()
    existing = tmp_path / "existing"
    existing.mkdir()
    (existing / "keep.txt").write_text("x")
    calls["n"] = 0
    assert run("generate", "--classes", "3", "--out", existing) == 3
    assert sorted(p.name for p in existing.rglob("*") if p.is_file()) == ["keep.txt"]


def test_usage_and_data_exit_codes(tmp_path):
    assert run("generate", "--classes", "9", "--out", tmp_path / "x") == 1
    assert run("bogus") == 1
    assert run("featurize", "--data", tmp_path / "missing", "--out", tmp_path / "f.csv") == 2
    assert run("train", "--features", tmp_path / "missing.csv", "--out", tmp_path / "t") == 2


def test_bad_family_is_usage_error(tiny, tmp_path):
    _, features = tiny
    assert run("ablation", "--features", features, "--out", tmp_path, "--families", "colour") == 1


def test_thread_env_must_be_integer(tiny, tmp_path, monkeypatch):
    data, _ = tiny
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    assert run("featurize", "--data", data, "--out", tmp_path / "f.csv") == 1


def test_console_script_exit_code(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "pdeid.cli", "featurize", "--data", str(tmp_path), "--out", str(tmp_path / "f.csv")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert "data error" in proc.stderr
