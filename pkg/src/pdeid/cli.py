"""Command-line entry point: ``pdeid <command> ...``.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
The default worker count comes from ``PDEID_THREADS`` (1 if unset).
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import plotting
from .coeff import (
    damping_estimate,
    level_rank_correlation,
    matched_pair_fraction,
    median_by_level,
    regress_coefficients,
    wave_speed_estimate,
)
from .core import CLASS_NAMES, FAMILIES, normalize_field
from .errors import (
    DataError,
    DegenerateLabels,
    DimensionMismatch,
    EmptyMask,
    LengthMismatch,
    MaskMismatch,
    PdeIdError,
)
from .evaluation import (
    CLASS_IDS,
    FeatureTable,
    ablation,
    leave_one_equation_out,
    multiclass_run,
    pipeline_run,
)
from .features import TASKS, column_indices, extract_all, task_mask
from .formats import (
    MANIFEST_NAME,
    FeatureWriter,
    dataset_manifest,
    read_features,
    read_manifest,
    read_sample,
    run_manifest,
    sha256_file,
    write_csv,
    write_json,
    write_sample,
)
from .gbdt import TrainConfig, feature_importance, feature_scores, fit
from .signal import (
    FFT_BIN_EDGES,
    delta_signal,
    envelopes,
    fft_features,
    magnitude_spectrum,
    orient_signal,
    prepare_signal,
)
from .solver import SolverConfig, _solve_one, class_specs, grid_spacing, sample_id

THREADS_ENV = "PDEID_THREADS"
RUN_MANIFEST = "run_manifest.json"
DATA_ERRORS = (
    DataError, LengthMismatch, DimensionMismatch, MaskMismatch, DegenerateLabels,
    EmptyMask, FileNotFoundError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}")


def _threads(args) -> int:
    return args.threads if args.threads else default_threads()


def parse_classes(text: str) -> list[int]:
    if text == "all":
        return list(CLASS_IDS)
    try:
        out = sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        raise UsageError(f"bad --classes value {text!r}")
    if not out or any(c not in CLASS_IDS for c in out):
        raise UsageError(f"--classes must be 'all' or ids in 1..8, got {text!r}")
    return out


def parse_families(text: str) -> list[tuple[str, ...]]:
    """``"stat,amp"`` gives two single-family subsets; ``"stat+amp"`` one pair."""
    subsets = []
    for part in text.split(","):
        fams = tuple(f for f in part.split("+") if f)
        unknown = [f for f in fams if f not in FAMILIES]
        if unknown or not fams:
            raise UsageError(f"unknown feature family in {part!r}")
        subsets.append(fams)
    return subsets


def _pmap(fn, items, threads: int):
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            yield from pool.map(fn, items, chunksize=4)
    else:
        yield from map(fn, items)


def _train_cfg(args) -> TrainConfig:
    return TrainConfig(
        rounds=args.rounds, max_depth=args.max_depth,
        learning_rate=args.learning_rate, seed=args.seed,
    )


def _load_table(path) -> FeatureTable:
    X, cids, ids = read_features(path)
    return FeatureTable(X, cids, ids)


def _finish(out: Path, command: str, config: dict, inputs: dict) -> None:
    outputs = {
        p.relative_to(out).as_posix(): sha256_file(p)
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != RUN_MANIFEST
    }
    write_json(out / RUN_MANIFEST, run_manifest(command, config, inputs, outputs))


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# generate ------------------------------------------------------------------


def cmd_generate(args) -> int:
    classes = parse_classes(args.classes)
    threads = _threads(args)
    cfg = SolverConfig()
    out = Path(args.out)
    fresh = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    jobs = [
        (cid, i, spec) for cid in classes for i, spec in enumerate(class_specs(cid))
    ]
    written: list[Path] = []
    try:
        entries = []
        solved = _pmap(_solve_one, [(spec, cfg, False) for _, _, spec in jobs], threads)
        for (cid, i, spec), field in zip(jobs, solved):
            entry = write_sample(out, sample_id(cid, i), spec, field)
            written += [out / entry["bin"], out / entry["meta"]]
            entries.append(entry)
        manifest = dataset_manifest(entries, args.seed, classes, asdict(cfg))
        write_json(out / MANIFEST_NAME, manifest)
        written.append(out / MANIFEST_NAME)
    except BaseException:
        if fresh:
            shutil.rmtree(out, ignore_errors=True)
        else:
            for p in written:
                p.unlink(missing_ok=True)
        raise
    print(f"wrote {len(entries)} samples to {out}")
    return 0


# featurize -----------------------------------------------------------------


def _featurize_entry(args):
    root, entry = args
    try:
        field, spec = read_sample(root, entry)
    except DataError as exc:
        return entry["id"], None, str(exc)
    norm, _ = normalize_field(field)
    return entry["id"], extract_all(norm, spec).values, None


def cmd_featurize(args) -> int:
    root = Path(args.data)
    manifest = read_manifest(root)
    entries = manifest["samples"]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bad = []
    try:
        with FeatureWriter(out) as w:
            rows = _pmap(_featurize_entry, [(root, e) for e in entries], _threads(args))
            for entry, (sid, values, err) in zip(entries, rows):
                if err is not None:
                    bad.append(err)
                    continue
                w.write(values, entry["class_id"], sid)
        if bad:
            raise DataError(f"{len(bad)} unreadable samples:\n  " + "\n  ".join(bad))
    except BaseException:
        out.unlink(missing_ok=True)
        raise
    run = run_manifest(
        "featurize", {"data": str(root)},
        {MANIFEST_NAME: sha256_file(root / MANIFEST_NAME)},
        {out.name: sha256_file(out)},
    )
    write_json(out.with_name(out.stem + ".run.json"), run)
    print(f"wrote {len(entries)} feature rows to {out}")
    return 0


# training and evaluation --------------------------------------------------


def _importance_outputs(out: Path, model, tag: str) -> dict:
    fam = feature_importance(model)
    write_csv(out / f"importance_{tag}.csv", ["family", "percent"], list(fam.items()))
    write_csv(
        out / f"feature_scores_{tag}.csv", ["feature", "percent"],
        list(feature_scores(model).items()),
    )
    plotting.plot_bars(
        out / f"importance_{tag}.png", list(fam), list(fam.values()),
        "relative importance (%)", f"feature families: {tag}",
    )
    return fam


def cmd_train(args) -> int:
    table = _load_table(args.features)
    cfg = _train_cfg(args)
    out = _out_dir(args.out)
    tasks = list(TASKS) if args.task == "pipeline" else [args.task]
    for task in tasks:
        names = task_mask(task)
        X = table.X[:, column_indices(names)]
        y = table.class_ids if task == "multiclass" else table.bits[:, TASKS.index(task)]
        model = fit(X, y, cfg=cfg, feature_names=names)
        (out / f"model_{task}.json").write_text(model.to_json(), encoding="utf-8")
        write_csv(
            out / f"train_loss_{task}.csv", ["round", "loss"],
            [(i, float(v)) for i, v in enumerate(model.train_loss)],
        )
        fam = _importance_outputs(out, model, task)
        print(task, " ".join(f"{k}={v:.1f}%" for k, v in fam.items()))
    _finish(out, "train", {"task": args.task, **asdict(cfg)},
            {"features": sha256_file(args.features)})
    return 0


def _confusion_outputs(out: Path, cm, tag: str, title: str) -> None:
    rows = [[c, *cm[i].tolist()] for i, c in enumerate(CLASS_IDS)]
    write_csv(
        out / f"confusion_{tag}.csv", ["truth", *[f"pred_{c}" for c in CLASS_IDS]], rows
    )
    labels = plotting.class_labels()
    plotting.plot_counts(out / f"confusion_{tag}.png", cm, labels, labels, title)


def cmd_evaluate(args) -> int:
    table = _load_table(args.features)
    cfg = _train_cfg(args)
    out = _out_dir(args.out)
    if not 0 < args.split <= 1:
        raise UsageError("--split must lie in (0, 1]")
    multi = multiclass_run(table, cfg, ratio=args.split, split_seed=args.seed)
    pipe = pipeline_run(table, cfg, ratio=args.split, split_seed=args.seed)
    _confusion_outputs(out, multi["confusion"], "multiclass", "multiclass model")
    _confusion_outputs(out, pipe["confusion"], "pipeline", "term-detector pipeline")
    te = multi["test_idx"]
    write_csv(
        out / "predictions.csv", ["sample_id", "class_id", "multiclass", "pipeline"],
        [
            (table.ids[i], int(table.class_ids[i]), int(a), int(b))
            for i, a, b in zip(te, multi["pred"], pipe["pred"])
        ],
    )
    metrics = {
        "split": args.split,
        "n_train": int(len(table) - len(te)),
        "n_test": int(len(te)),
        "multiclass_accuracy": multi["accuracy"],
        "pipeline_accuracy": pipe["accuracy"],
        "conv_bit_accuracy": multi["conv_accuracy"],
    }
    write_json(out / "metrics.json", metrics)
    print(f"multiclass accuracy: {multi['accuracy']:.4f}")
    print(f"pipeline accuracy:   {pipe['accuracy']:.4f}")
    _finish(out, "evaluate", {"split": args.split, **asdict(cfg)},
            {"features": sha256_file(args.features)})
    return 0


def cmd_loeo(args) -> int:
    table = _load_table(args.features)
    cfg = _train_cfg(args)
    out = _out_dir(args.out)
    res = leave_one_equation_out(table, cfg, threads=_threads(args))
    header = ["held_out", *[f"pred_{c}" for c in CLASS_IDS], "accuracy_pct"]
    write_csv(out / "loeo_table.csv", header, res.table())
    summary = {
        "per_class_accuracy": {str(c): res.accuracy[c] for c in sorted(res.accuracy)},
        "average_accuracy": res.average,
        "classes": {str(c): CLASS_NAMES[c] for c in CLASS_IDS},
    }
    write_json(out / "loeo.json", summary)
    counts = np.array([res.histograms[c] for c in CLASS_IDS])
    labels = plotting.class_labels()
    plotting.plot_counts(out / "loeo.png", counts, labels, labels, "unseen-equation predictions")
    for row in res.table():
        print(" ".join(f"{v:>6}" for v in row[:-1]), f"{row[-1]:6.1f}")
    print(f"average accuracy: {100 * res.average:.2f}%")
    _finish(out, "loeo", asdict(cfg), {"features": sha256_file(args.features)})
    return 0


def cmd_ablation(args) -> int:
    table = _load_table(args.features)
    cfg = _train_cfg(args)
    out = _out_dir(args.out)
    subsets = parse_families(args.families)
    seeds = tuple(range(args.seeds))
    rows = ablation(table, subsets, cfg, seeds=seeds, threads=_threads(args))
    write_csv(
        out / "ablation.csv", ["families", "accuracy", "conv_accuracy"],
        [(r["families"], r["accuracy"], r["conv_accuracy"]) for r in rows],
    )
    write_json(out / "ablation.json", {"seeds": list(seeds), "rows": rows})
    plotting.plot_bars(
        out / "ablation.png", [r["families"] for r in rows],
        [100 * r["accuracy"] for r in rows], "test accuracy (%)", "feature ablation",
    )
    for r in rows:
        print(f"{r['families']:<28} {100 * r['accuracy']:6.2f}%")
    _finish(out, "ablation", {"families": args.families, "seeds": list(seeds), **asdict(cfg)},
            {"features": sha256_file(args.features)})
    return 0


def cmd_importance(args) -> int:
    table = _load_table(args.features)
    cfg = _train_cfg(args)
    out = _out_dir(args.out)
    names = task_mask(args.task)
    if args.task == "multiclass":
        y = table.class_ids
    else:
        y = table.bits[:, TASKS.index(args.task)]
    model = fit(table.X[:, column_indices(names)], y, cfg=cfg, feature_names=names)
    fam = _importance_outputs(out, model, args.task)
    for k, v in fam.items():
        print(f"{k:<8} {v:6.2f}%")
    _finish(out, "importance", {"task": args.task, **asdict(cfg)},
            {"features": sha256_file(args.features)})
    return 0


# coefficients and signals ---------------------------------------------------


def _coeff_entry(args):
    root, entry = args
    field, spec = read_sample(root, entry)
    norm, _ = normalize_field(field)
    row = {"speed": np.nan, "damping": np.nan, "status": "ok"}
    notes = []
    if spec.e != 0:
        try:
            row["speed"] = wave_speed_estimate(norm, spec)[0]
        except PdeIdError as exc:
            notes.append(type(exc).__name__)
        if spec.d > 0:
            try:
                row["damping"] = damping_estimate(norm)
            except PdeIdError as exc:
                notes.append(type(exc).__name__)
    try:
        fitted = regress_coefficients(field, spec.labels, grid_spacing(spec))
        row.update({f"fit_{k}": v for k, v in fitted.as_dict().items() if k != "leading"})
        row["leading"] = fitted.leading
    except PdeIdError as exc:
        notes.append(type(exc).__name__)
    if notes:
        row["status"] = ";".join(notes)
    return entry["id"], spec, row


def cmd_coeff(args) -> int:
    root = Path(args.data)
    manifest = read_manifest(root)
    classes = set(parse_classes(args.classes))
    entries = [e for e in manifest["samples"] if e["class_id"] in classes]
    out = _out_dir(args.out)
    fit_cols = ["fit_e", "fit_d", "fit_c", "fit_bx", "fit_by", "fit_residual"]
    header = ["sample_id", "class_id", "e", "d", "c", "bx", "by", "bc1", "bc2", "bc3", "bc4",
              "speed", "damping", "leading", *fit_cols, "status"]
    rows, records = [], []
    for entry, (sid, spec, r) in zip(
        entries, _pmap(_coeff_entry, [(root, e) for e in entries], _threads(args))
    ):
        records.append((entry["class_id"], spec, r))
        rows.append([
            sid, entry["class_id"], float(spec.e), float(spec.d), float(spec.c),
            float(spec.bx), float(spec.by), *map(float, spec.bc),
            float(r["speed"]), float(r["damping"]), r.get("leading", ""),
            *[float(r.get(k, np.nan)) for k in fit_cols],
            r["status"],
        ])
    write_csv(out / "coefficients.csv", header, rows)

    summary = {}
    for cid in sorted(classes):
        recs = [(s, r) for c, s, r in records if c == cid]
        if not recs:
            continue
        info = {"name": CLASS_NAMES[cid], "count": len(recs)}
        specs = [s for s, _ in recs]
        if specs[0].e != 0:
            sel = [(s.c, r["speed"]) for s, r in recs if s.c in (100, 200, 300)]
            levels, speeds = zip(*sel) if sel else ((), ())
            info["median_speed_by_c"] = {str(k): v for k, v in median_by_level(levels, speeds).items()}
            info["speed_rank_correlation"] = level_rank_correlation(levels, speeds)
            plotting.plot_scatter(
                out / f"speed_vs_c_class{cid}.png", [s.c for s, _ in recs],
                [r["speed"] for _, r in recs], "c", "front speed (cells/step)",
                f"class {cid}",
            )
        if any(s.d > 0 and s.e != 0 for s in specs):
            rates = {(s.d, s.c, s.bx, s.by, s.bc): r["damping"] for s, r in recs}
            wins, pairs = matched_pair_fraction(rates, 0, 200, 300)
            info["damping_pairs"] = {"higher_d_larger_rate": wins, "pairs": pairs}
        if specs[0].e == 0 and specs[0].d != 0:
            rel = [abs(r.get("fit_c", np.nan) - s.c) / s.c for s, r in recs]
            info["median_relative_c_error"] = float(np.nanmedian(rel))
        summary[str(cid)] = info
    write_json(out / "coefficients.json", summary)
    for cid, info in summary.items():
        print(cid, {k: v for k, v in info.items() if k not in ("name",)})
    _finish(out, "coeff", {"classes": sorted(classes)},
            {MANIFEST_NAME: sha256_file(root / MANIFEST_NAME)})
    return 0


def cmd_signals(args) -> int:
    root = Path(args.data)
    manifest = read_manifest(root)
    by_id = {e["id"]: e for e in manifest["samples"]}
    if args.ids:
        ids = [s for s in args.ids.split(",") if s]
        missing = [s for s in ids if s not in by_id]
        if missing:
            raise DataError(f"unknown sample ids: {missing}")
    else:
        seen, ids = set(), []
        for e in manifest["samples"]:
            if e["class_id"] not in seen:
                seen.add(e["class_id"])
                ids.append(e["id"])
    out = _out_dir(args.out)
    for sid in ids:
        field, spec = read_sample(root, by_id[sid])
        norm, _ = normalize_field(field)
        oriented = orient_signal(delta_signal(norm))
        prepared_sig = prepare_signal(oriented)
        raw, prepared = oriented.values, prepared_sig.values
        env = envelopes(prepared_sig)
        t = np.arange(len(raw))
        write_csv(
            out / f"{sid}_signal.csv",
            ["step", "delta", "prepared", "upper", "lower", "amplitude"],
            zip(t.tolist(), raw, prepared, env.upper, env.lower, env.amplitude),
        )
        freqs, mag = magnitude_spectrum(prepared)
        top = mag.max()
        mag = mag / top if top > 0 else mag
        write_csv(out / f"{sid}_spectrum.csv", ["frequency", "magnitude"], zip(freqs, mag))
        bins = fft_features(prepared_sig).reshape(-1, 4)
        write_csv(
            out / f"{sid}_fft_bins.csv", ["lo", "hi", "mean", "std", "min", "max"],
            [(FFT_BIN_EDGES[b], FFT_BIN_EDGES[b + 1], *bins[b]) for b in range(len(bins))],
        )
        title = f"{sid} (class {spec.labels.class_id})"
        plotting.plot_signal(out / f"{sid}_signal.png", t, raw, prepared, env.upper, env.lower, title)
        plotting.plot_spectrum(out / f"{sid}_spectrum.png", freqs, mag, FFT_BIN_EDGES, title)
    print(f"wrote signal series for {len(ids)} samples to {out}")
    _finish(out, "signals", {"ids": ids}, {MANIFEST_NAME: sha256_file(root / MANIFEST_NAME)})
    return 0


# parser ---------------------------------------------------------------------


def _add_train_opts(p):
    p.add_argument("--features", required=True, help="features CSV from 'featurize'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--learning-rate", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pdeid", description="Identify PDE term sets from simulated fields.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate the parameter grids to disk")
    p.add_argument("--classes", default="all", help="'all' or comma-separated ids 1..8")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("featurize", help="46 features per sample into a CSV")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="features CSV path")
    p.add_argument("--threads", type=int, default=0)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="fit detectors or the multiclass model")
    _add_train_opts(p)
    p.add_argument("--task", default="pipeline",
                   choices=["pipeline", "multiclass", *TASKS])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="stratified split accuracy and confusion")
    _add_train_opts(p)
    p.add_argument("--split", type=float, default=0.8)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("loeo", help="leave-one-equation-out table")
    _add_train_opts(p)
    p.add_argument("--threads", type=int, default=0)
    p.set_defaults(func=cmd_loeo)

    p = sub.add_parser("ablation", help="accuracy per feature-family subset")
    _add_train_opts(p)
    p.add_argument("--families", default=",".join(FAMILIES),
                   help="comma-separated subsets; join families with '+'")
    p.add_argument("--seeds", type=int, default=5, help="number of split seeds")
    p.add_argument("--threads", type=int, default=0)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("importance", help="family-level gain importance")
    _add_train_opts(p)
    p.add_argument("--task", default="multiclass", choices=["multiclass", *TASKS])
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("coeff", help="wave speed, damping and coefficient regression")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", default="all")
    p.add_argument("--threads", type=int, default=0)
    p.set_defaults(func=cmd_coeff)

    p = sub.add_parser("signals", help="time signal, envelope and spectrum series")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ids", default="", help="comma-separated sample ids (default: one per class)")
    p.set_defaults(func=cmd_signals)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pdeid: error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"pdeid: data error: {exc}", file=sys.stderr)
        return 2
    except (PdeIdError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"pdeid: numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
