"""On-disk formats: raw sample binaries with JSON sidecars, the dataset
manifest, feature CSVs and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .core import FEATURE_NAMES, GridField, PdeSpec, TermLabels
from .errors import DataError

SAMPLE_FORMAT = "pdeid-sample"
DATASET_FORMAT = "pdeid-dataset"
RUN_FORMAT = "pdeid-run"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
SAMPLE_DIR = "samples"
LABEL_COLUMNS = ["class_id", "has_utt", "has_ut", "has_conv", "sample_id"]
CSV_HEADER = list(FEATURE_NAMES) + LABEL_COLUMNS


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path, chunk_size: int = 1 << 22) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while chunk := f.read(chunk_size):
            h.update(chunk)
    return h.hexdigest()


def dumps(obj) -> str:
    """Stable JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> str:
    text = dumps(obj)
    Path(path).write_text(text, encoding="utf-8")
    return sha256_bytes(text.encode("utf-8"))


def labels_dict(labels: TermLabels) -> dict:
    return {
        "has_utt": labels.has_utt,
        "has_ut": labels.has_ut,
        "has_conv": labels.has_conv,
        "class_id": labels.class_id,
    }


def write_sample(root, sid: str, spec: PdeSpec, field: GridField) -> dict:
    """Write ``<sid>.bin`` and ``<sid>.json`` under ``root/samples``; return the manifest entry."""
    root = Path(root)
    (root / SAMPLE_DIR).mkdir(parents=True, exist_ok=True)
    raw = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    bin_rel = f"{SAMPLE_DIR}/{sid}.bin"
    meta_rel = f"{SAMPLE_DIR}/{sid}.json"
    (root / bin_rel).write_bytes(raw)
    meta = {
        "format": SAMPLE_FORMAT,
        "version": FORMAT_VERSION,
        "id": sid,
        "spec": spec.to_dict(),
        "labels": labels_dict(spec.labels),
        "shape": list(field.shape),
        "dt": field.dt,
        "dtype": "<f8",
        "order": "t,y,x",
        "sha256": sha256_bytes(raw),
    }
    meta_hash = write_json(root / meta_rel, meta)
    return {
        "id": sid,
        "class_id": spec.labels.class_id,
        "bin": bin_rel,
        "meta": meta_rel,
        "sha256_bin": meta["sha256"],
        "sha256_meta": meta_hash,
    }


def read_sample(root, entry: dict, verify: bool = True) -> tuple[GridField, PdeSpec]:
    root = Path(root)
    sid = entry["id"]
    try:
        meta = json.loads((root / entry["meta"]).read_text(encoding="utf-8"))
        raw = (root / entry["bin"]).read_bytes()
    except (OSError, ValueError) as exc:
        raise DataError(f"sample {sid}: {exc}") from exc
    if meta.get("format") != SAMPLE_FORMAT or meta.get("version") != FORMAT_VERSION:
        raise DataError(f"sample {sid}: unsupported sidecar format")
    if verify and sha256_bytes(raw) != entry["sha256_bin"]:
        raise DataError(f"sample {sid}: content hash mismatch")
    shape = tuple(meta["shape"])
    if len(raw) != 8 * int(np.prod(shape)):
        raise DataError(f"sample {sid}: {len(raw)} bytes does not match shape {shape}")
    values = np.frombuffer(raw, dtype="<f8").reshape(shape)
    try:
        return GridField(values, meta["dt"]), PdeSpec.from_dict(meta["spec"])
    except ValueError as exc:
        raise DataError(f"sample {sid}: {exc}") from exc


def dataset_manifest(entries: list[dict], seed: int, classes, solver_cfg: dict) -> dict:
    return {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "seed": seed,
        "classes": sorted(int(c) for c in classes),
        "solver": solver_cfg,
        "count": len(entries),
        "samples": entries,
    }


def read_manifest(root) -> dict:
    path = Path(root) / MANIFEST_NAME
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read dataset manifest {path}: {exc}") from exc
    if doc.get("format") != DATASET_FORMAT or doc.get("version") != FORMAT_VERSION:
        raise DataError(f"{path} is not a {DATASET_FORMAT} v{FORMAT_VERSION} manifest")
    return doc


def _fmt(v) -> str:
    return repr(float(v))


def feature_row(values, class_id: int, sid: str) -> list[str]:
    bits = TermLabels.from_class(class_id).bits
    return [_fmt(v) for v in values] + [str(class_id), *map(str, bits), sid]


class FeatureWriter:
    """Streaming writer for the features CSV."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(CSV_HEADER)

    def write(self, values, class_id: int, sid: str) -> None:
        self._w.writerow(feature_row(values, class_id, sid))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_features(path):
    """Load a features CSV into ``(X, class_ids, ids)``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read features {path}: {exc}") from exc
    if not rows or rows[0] != CSV_HEADER:
        raise DataError(f"{path}: header does not match the feature layout")
    nf = len(FEATURE_NAMES)
    X = np.empty((len(rows) - 1, nf))
    cids, ids = [], []
    for i, row in enumerate(rows[1:]):
        if len(row) != len(CSV_HEADER):
            raise DataError(f"{path}: row {i + 1} has {len(row)} columns")
        try:
            X[i] = [float(v) for v in row[:nf]]
            cids.append(int(row[nf]))
        except ValueError as exc:
            raise DataError(f"{path}: row {i + 1}: {exc}") from exc
        ids.append(row[-1])
    return X, np.asarray(cids, dtype=int), ids


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def run_manifest(command: str, config: dict, inputs: dict, outputs: dict) -> dict:
    """Record of one command run. ``inputs``/``outputs`` map names to sha256."""
    return {
        "format": RUN_FORMAT,
        "version": FORMAT_VERSION,
        "command": command,
        "config": config,
        "inputs": dict(sorted(inputs.items())),
        "outputs": dict(sorted(outputs.items())),
    }
