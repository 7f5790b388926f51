"""Dataset manifests on disk, plus import from the raw geom-gcn layout.

A manifest is a JSON file next to its data files::

    {"name": "texas", "edges": "edges.txt", "features": "features.csv",
     "labels": "labels.txt", "splits": "splits.json", "features_header": false}

``splits`` is optional; without it, seeded random 48/32/20 folds are drawn.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import FeatureMatrix, Fold, FoldSplits, Graph, LabelVector, random_splits

logger = logging.getLogger(__name__)

DATA_ENV = "SHEAFLAB_DATA"
DEFAULT_FOLDS = 10


class DataError(ValueError):
    """Malformed or missing dataset files."""


@dataclass(frozen=True)
class Dataset:
    name: str
    graph: Graph
    features: FeatureMatrix
    labels: LabelVector
    splits: FoldSplits


def data_root() -> Path:
    return Path(os.environ.get(DATA_ENV, "data"))


def resolve_manifest(dataset: str | os.PathLike) -> Path:
    """Accept a manifest path, a dataset directory, or a name under the data root."""
    p = Path(dataset)
    if p.is_file():
        return p
    if p.is_dir() and (p / "manifest.json").is_file():
        return p / "manifest.json"
    cand = data_root() / str(dataset) / "manifest.json"
    if cand.is_file():
        return cand
    raise DataError(f"dataset {dataset!r} not found (looked for {p} and {cand}; set ${DATA_ENV})")


def _read_edges(path: Path) -> list[tuple[int, int]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected two node ids, got {s!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer node id in {s!r}") from None
    return pairs


def _read_features(path: Path, header: bool) -> np.ndarray:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if header:
            next(reader, None)
        for lineno, row in enumerate(reader, 1 + header):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric feature") from None
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise DataError(f"{path}: ragged feature rows (widths {sorted(widths)})")
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), widths.pop() if widths else 0)


def _read_labels(path: Path) -> np.ndarray:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            try:
                out.append(int(s))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer label {s!r}") from None
    return np.asarray(out, dtype=np.int64)


def _read_splits(path: Path) -> FoldSplits:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    folds = []
    for i, f in enumerate(raw):
        try:
            folds.append(Fold(*(np.asarray(f[k], dtype=np.int64) for k in ("train", "val", "test"))))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: fold {i} malformed ({exc})") from None
    return FoldSplits(tuple(folds), source="file")


def load_dataset(manifest_path, seed: int = 0, n_folds: int = DEFAULT_FOLDS) -> Dataset:
    """Load a dataset manifest into validated graph, features, labels and folds."""
    manifest_path = resolve_manifest(manifest_path)
    base = manifest_path.parent
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: invalid JSON ({exc})") from None
    files = {}
    for key in ("edges", "features", "labels"):
        if key not in manifest:
            raise DataError(f"{manifest_path}: missing {key!r} entry")
        files[key] = base / manifest[key]
    if manifest.get("splits"):
        files["splits"] = base / manifest["splits"]
    for key, path in files.items():
        if not path.is_file():
            raise DataError(f"{key} file not found: {path}")

    labels = _read_labels(files["labels"])
    n = len(labels)
    feats = _read_features(files["features"], bool(manifest.get("features_header", False)))
    if feats.shape[0] != n:
        raise DataError(f"{files['features']}: {feats.shape[0]} feature rows for {n} labelled nodes")
    try:
        graph = Graph.from_edges(n, _read_edges(files["edges"]))
        fm = FeatureMatrix(feats)
        lv = LabelVector(labels, int(manifest["num_classes"]) if "num_classes" in manifest else -1)
    except ValueError as exc:
        raise DataError(str(exc)) from None

    if "splits" in files:
        splits = _read_splits(files["splits"])
    else:
        splits = random_splits(n, n_folds, seed)
    try:
        splits.validate(n)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    return Dataset(manifest.get("name", manifest_path.parent.name), graph, fm, lv, splits)


def write_dataset(directory, name: str, graph: Graph, features: np.ndarray, labels: np.ndarray,
                  splits: FoldSplits | None = None) -> Path:
    """Write a dataset in manifest layout and return the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "edges.txt", "w", encoding="utf-8") as fh:
        for u, v in graph.edges:
            fh.write(f"{u}\t{v}\n")
    np.savetxt(d / "features.csv", np.asarray(features, dtype=np.float64), delimiter=",", fmt="%.17g")
    np.savetxt(d / "labels.txt", np.asarray(labels, dtype=np.int64), fmt="%d")
    manifest = {"name": name, "edges": "edges.txt", "features": "features.csv", "labels": "labels.txt"}
    if splits is not None:
        payload = [{"train": f.train.tolist(), "val": f.val.tolist(), "test": f.test.tolist()}
                   for f in splits.folds]
        (d / "splits.json").write_text(json.dumps(payload))
        manifest["splits"] = "splits.json"
    path = d / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def import_geom_gcn(raw_dir, name: str, out_dir) -> Path:
    """Convert the raw geom-gcn files for one dataset into manifest layout.

    Expects ``out1_node_feature_label.txt`` (tab-separated id, comma list of
    features, label; one header line), ``out1_graph_edges.txt`` (header plus
    tab-separated pairs) and optionally ``{name}_split_0.6_0.2_{i}.npz`` with
    boolean ``train_mask``/``val_mask``/``test_mask``.
    """
    raw = Path(raw_dir)
    nodes = raw / "out1_node_feature_label.txt"
    edges_path = raw / "out1_graph_edges.txt"
    for p in (nodes, edges_path):
        if not p.is_file():
            raise DataError(f"missing raw file {p}")
    feats, labels = {}, {}
    with open(nodes, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                continue
            i = int(parts[0])
            feats[i] = [float(v) for v in parts[1].split(",")]
            labels[i] = int(parts[2])
    n = len(labels)
    if sorted(labels) != list(range(n)):
        raise DataError(f"{nodes}: node ids are not 0..{n - 1}")
    x = np.asarray([feats[i] for i in range(n)])
    y = np.asarray([labels[i] for i in range(n)])
    pairs = []
    with open(edges_path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            parts = line.split()
            if len(parts) == 2:
                pairs.append((int(parts[0]), int(parts[1])))
    graph = Graph.from_edges(n, pairs)
    split_files = sorted(raw.glob(f"{name}_split_0.6_0.2_*.npz"),
                         key=lambda p: int(p.stem.rsplit("_", 1)[1]))
    splits = None
    if split_files:
        folds = []
        for p in split_files:
            z = np.load(p)
            folds.append(Fold(*(np.nonzero(z[k])[0] for k in ("train_mask", "val_mask", "test_mask"))))
        splits = FoldSplits(tuple(folds), source="file")
    return write_dataset(out_dir, name, graph, x, y, splits)


def synthetic_heterophilic(n: int = 180, c: int = 5, n_features: int = 64, p_in: float = 0.01,
                           p_out: float = 0.04, signal: float = 1.0, seed: int = 0):
    """Random graph whose edges mostly cross classes, with class-dependent features.

    Returns ``(graph, features, labels)``. Each class prefers one partner class
    for edges, so neighbourhood distributions stay informative.
    """
    rng = np.random.default_rng(seed)
    y = rng.integers(0, c, size=n)
    partner = (np.arange(c) + 1) % c
    same = y[:, None] == y[None, :]
    linked = (partner[y][:, None] == y[None, :]) | (partner[y][None, :] == y[:, None])
    prob = np.where(same, p_in, np.where(linked, p_out * 3, p_out * 0.25))
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    graph = Graph.from_edges(n, np.argwhere(upper))
    centers = rng.standard_normal((c, n_features)) * signal
    x = centers[y] + rng.standard_normal((n, n_features))
    return graph, x, y
