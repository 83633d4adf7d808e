"""Utilities for loading datasets and other files."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import scipy.sparse as sp
import yaml
from sklearn.datasets import load_breast_cancer, load_digits, load_wine
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import StandardScaler

from itergraph.constants import STANDARD_SPLITS, TABULAR_DATASETS
from itergraph.errors import DatasetError
from itergraph.graph import read_edge_list, validate_csr

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Callable

    from itergraph.types import CsrSparse, FloatArray, IntArray

_logger = logging.getLogger(__name__)

SplitSpec = str | tuple[int, int, int]

_BUILTIN: dict[str, Callable[..., Any]] = {
    "wine": load_wine,
    "cancer": load_breast_cancer,
    "digits": load_digits,
}


def yaml_from_file(path: Path) -> Any:  # noqa: ANN401
    """Return a loaded YAML file."""
    with path.open(encoding="utf-8") as content:
        return yaml.load(content, Loader=yaml.SafeLoader)


def _index_array(values: Any) -> IntArray:  # noqa: ANN401
    return np.asarray(values, dtype=np.int64).reshape(-1)


@dataclass
class GraphDataset:
    """Node features, optional initial graph, labels and node splits.

    In inductive mode ``graph_label`` holds the label of the whole graph.
    """

    x: FloatArray
    y: IntArray
    train: IntArray
    dev: IntArray
    test: IntArray
    n_classes: int
    a0: CsrSparse | None = None
    name: str = ""
    graph_label: int | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Normalize dtypes and check consistency."""
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = _index_array(self.y)
        self.train = _index_array(self.train)
        self.dev = _index_array(self.dev)
        self.test = _index_array(self.test)
        if self.x.ndim != 2:  # noqa: PLR2004
            msg = f"features must be a matrix, got {self.x.ndim} dimensions"
            raise DatasetError(msg)
        if not np.isfinite(self.x).all():
            msg = "features contain NaN or Inf"
            raise DatasetError(msg)
        n = self.x.shape[0]
        if self.y.size != n:
            msg = f"{self.y.size} labels for {n} feature rows"
            raise DatasetError(msg)
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            msg = f"labels must lie in [0, {self.n_classes})"
            raise DatasetError(msg)
        if self.graph_label is not None and not 0 <= self.graph_label < self.n_classes:
            msg = f"graph label {self.graph_label} outside [0, {self.n_classes})"
            raise DatasetError(msg)
        masks = {"train": self.train, "dev": self.dev, "test": self.test}
        for label, mask in masks.items():
            if mask.size and (mask.min() < 0 or mask.max() >= n):
                msg = f"{label} mask references nodes outside 0..{n - 1}"
                raise DatasetError(msg)
        joined = np.concatenate(list(masks.values()))
        if np.unique(joined).size != joined.size:
            msg = "train, dev and test masks overlap"
            raise DatasetError(msg)
        if self.a0 is not None:
            self.a0 = sp.csr_matrix(self.a0, dtype=np.float64)
            if self.a0.shape != (n, n):
                msg = f"adjacency {self.a0.shape} does not match {n} nodes"
                raise DatasetError(msg)
            validate_csr(self.a0, name="a0")

    @property
    def n(self) -> int:
        """Return the node count."""
        return int(self.x.shape[0])

    @property
    def d(self) -> int:
        """Return the feature dimension."""
        return int(self.x.shape[1])

    def with_adjacency(self, a0: CsrSparse | None) -> GraphDataset:
        """Return a copy that uses another initial adjacency."""
        return GraphDataset(
            x=self.x,
            y=self.y,
            train=self.train,
            dev=self.dev,
            test=self.test,
            n_classes=self.n_classes,
            a0=a0,
            name=self.name,
            graph_label=self.graph_label,
            meta=dict(self.meta),
        )


def _take(
    idx: IntArray,
    size: int,
    labels: IntArray,
    seed: int,
) -> tuple[IntArray, IntArray]:
    """Split ``size`` indices off ``idx``, stratified when possible."""
    if size >= idx.size:
        return idx, idx[:0]
    if size == 0:
        return idx[:0], idx
    try:
        chosen, rest = train_test_split(
            idx,
            train_size=size,
            stratify=labels[idx],
            random_state=seed,
        )
    except ValueError:
        _logger.debug("Stratification impossible for %d of %d nodes", size, idx.size)
        chosen, rest = train_test_split(idx, train_size=size, random_state=seed)
    return np.asarray(chosen, dtype=np.int64), np.asarray(rest, dtype=np.int64)


def stratified_split(
    y: IntArray,
    sizes: tuple[int, int, int],
    seed: int,
) -> tuple[IntArray, IntArray, IntArray]:
    """Seeded class-stratified train/dev/test node indices of the given sizes.

    A test size larger than the remaining nodes is clipped with a warning.
    """
    n_train, n_dev, n_test = sizes
    n = y.size
    if n_train + n_dev > n:
        msg = f"train and dev sizes {n_train}+{n_dev} exceed {n} nodes"
        raise DatasetError(msg)
    idx = np.arange(n, dtype=np.int64)
    train, rest = _take(idx, n_train, y, seed)
    dev, rest = _take(rest, n_dev, y, seed)
    if n_test > rest.size:
        _logger.warning(
            "Test split of %d nodes clipped to the %d remaining nodes",
            n_test,
            rest.size,
        )
    test, _ = _take(rest, n_test, y, seed)
    return np.sort(train), np.sort(dev), np.sort(test)


def _resolve_split(split_spec: SplitSpec, name: str) -> tuple[int, int, int]:
    if isinstance(split_spec, tuple):
        return split_spec
    if split_spec == "standard":
        if name not in STANDARD_SPLITS:
            msg = f"no published split for dataset {name!r}"
            raise DatasetError(msg)
        return STANDARD_SPLITS[name]
    msg = f"unknown split specification {split_spec!r}"
    raise DatasetError(msg)


def _read_rows(path: Path, *, header: bool) -> list[list[str]]:
    with path.open(encoding="utf-8", newline="") as content:
        rows = [row for row in csv.reader(content) if row]
    return rows[1:] if header else rows


def read_matrix_csv(path: Path, *, header: bool = False) -> FloatArray:
    """Read a numeric CSV into a float64 matrix."""
    rows = _read_rows(path, header=header)
    if not rows:
        msg = f"{path}: no data rows"
        raise DatasetError(msg)
    width = len(rows[0])
    out = np.empty((len(rows), width), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != width:
            msg = f"{path}: row {i + 1} has {len(row)} cells, expected {width}"
            raise DatasetError(msg)
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError as exc:
                msg = f"{path}: non-numeric cell {cell!r} at row {i + 1}, column {j + 1}"
                raise DatasetError(msg) from exc
    return out


def read_labels_csv(path: Path, *, header: bool = False) -> tuple[IntArray, list[str]]:
    """Read one label per row; returns class indices and the sorted class names."""
    rows = _read_rows(path, header=header)
    raw = [row[0].strip() for row in rows]
    classes, inverse = np.unique(np.array(raw, dtype=str), return_inverse=True)
    names = classes.tolist()
    if all(name.lstrip("-").isdigit() for name in names):
        # integer labels keep numeric class order
        order = sorted(names, key=int)
        remap = np.array([order.index(name) for name in names], dtype=np.int64)
        return remap[inverse], order
    return inverse.astype(np.int64), names


def _standardize(x: FloatArray) -> FloatArray:
    return StandardScaler().fit_transform(x).astype(np.float64)


def load_tabular(  # noqa: PLR0913
    features_csv: Path,
    labels_csv: Path,
    split_spec: SplitSpec,
    *,
    name: str = "",
    seed: int = 0,
    header: bool = False,
    standardize: bool = True,
) -> GraphDataset:
    """Load a feature-only dataset from a pair of CSV files."""
    x = read_matrix_csv(features_csv, header=header)
    y, classes = read_labels_csv(labels_csv, header=header)
    if y.size != x.shape[0]:
        msg = f"{features_csv} has {x.shape[0]} rows but {labels_csv} has {y.size}"
        raise DatasetError(msg)
    name = name or features_csv.stem
    return _assemble(x, y, len(classes), None, split_spec, name, seed, standardize=standardize)


def _assemble(  # noqa: PLR0913
    x: FloatArray,
    y: IntArray,
    n_classes: int,
    a0: CsrSparse | None,
    split_spec: SplitSpec,
    name: str,
    seed: int,
    *,
    standardize: bool,
) -> GraphDataset:
    if standardize:
        x = _standardize(x)
    train, dev, test = stratified_split(y, _resolve_split(split_spec, name), seed)
    _logger.info(
        "Loaded %s: %d nodes, %d features, %d classes, split %d/%d/%d",
        name,
        x.shape[0],
        x.shape[1],
        n_classes,
        train.size,
        dev.size,
        test.size,
    )
    return GraphDataset(
        x=x,
        y=y,
        train=train,
        dev=dev,
        test=test,
        n_classes=n_classes,
        a0=a0,
        name=name,
    )


def load_builtin(name: str, split_spec: SplitSpec = "standard", *, seed: int = 0) -> GraphDataset:
    """Load one of the UCI datasets bundled with scikit-learn."""
    if name not in _BUILTIN:
        msg = f"no built-in dataset {name!r}, choose from {', '.join(TABULAR_DATASETS)}"
        raise DatasetError(msg)
    bunch = _BUILTIN[name]()
    x = np.asarray(bunch.data, dtype=np.float64)
    y = np.asarray(bunch.target, dtype=np.int64)
    return _assemble(x, y, int(y.max()) + 1, None, split_spec, name, seed, standardize=True)


def load_citation(  # noqa: PLR0913
    edge_list_path: Path,
    features_path: Path,
    labels_path: Path,
    split_spec: SplitSpec,
    *,
    name: str = "",
    seed: int = 0,
) -> GraphDataset:
    """Load a citation graph from an edge list and CSV features and labels."""
    x = read_matrix_csv(features_path)
    y, classes = read_labels_csv(labels_path)
    if y.size != x.shape[0]:
        msg = f"{features_path} has {x.shape[0]} rows but {labels_path} has {y.size}"
        raise DatasetError(msg)
    a0 = read_edge_list(edge_list_path, x.shape[0])
    name = name or edge_list_path.stem
    return _assemble(x, y, len(classes), a0, split_spec, name, seed, standardize=False)


def citation_files(data_dir: Path, name: str) -> tuple[Path, Path, Path]:
    """Return the edge list, features and labels paths of a named graph."""
    return (
        data_dir / f"{name}.edges",
        data_dir / f"{name}.features.csv",
        data_dir / f"{name}.labels.csv",
    )


def load_named(
    name: str,
    data_dir: Path,
    split_spec: SplitSpec = "standard",
    *,
    seed: int = 0,
) -> GraphDataset:
    """Resolve a dataset name to the data directory or a built-in source.

    Files in ``data_dir`` win over the bundled tabular datasets.
    """
    edges, features, labels = citation_files(data_dir, name)
    if edges.exists() and features.exists() and labels.exists():
        return load_citation(edges, features, labels, split_spec, name=name, seed=seed)
    if features.exists() and labels.exists():
        return load_tabular(features, labels, split_spec, name=name, seed=seed)
    if name in _BUILTIN:
        return load_builtin(name, split_spec, seed=seed)
    msg = f"dataset {name!r} not found in {data_dir}, expected {edges.name}, {features.name} and {labels.name}"
    raise DatasetError(msg)


def dump_tabular(dataset: GraphDataset, features_csv: Path, labels_csv: Path) -> None:
    """Write features and labels as CSV with round-trip exact floats."""
    with features_csv.open("w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        for row in dataset.x:
            writer.writerow([format(value, ".17g") for value in row])
    with labels_csv.open("w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        for label in dataset.y:
            writer.writerow([int(label)])


def save_dataset(path: Path, dataset: GraphDataset) -> None:
    """Persist a dataset to a compressed ``.npz`` archive."""
    arrays: dict[str, Any] = {
        "x": dataset.x,
        "y": dataset.y,
        "train": dataset.train,
        "dev": dataset.dev,
        "test": dataset.test,
        "n_classes": np.int64(dataset.n_classes),
        "name": np.array(dataset.name),
        "graph_label": np.int64(-1 if dataset.graph_label is None else dataset.graph_label),
    }
    if dataset.a0 is not None:
        a0 = dataset.a0.tocsr()
        arrays |= {
            "a0_data": a0.data,
            "a0_indices": a0.indices,
            "a0_indptr": a0.indptr,
            "a0_shape": np.array(a0.shape, dtype=np.int64),
        }
    with path.open("wb") as out:
        np.savez_compressed(out, **arrays)


def load_dataset(path: Path) -> GraphDataset:
    """Read a dataset written by :func:`save_dataset`."""
    with np.load(path, allow_pickle=False) as archive:
        a0 = None
        if "a0_data" in archive:
            a0 = sp.csr_matrix(
                (archive["a0_data"], archive["a0_indices"], archive["a0_indptr"]),
                shape=tuple(archive["a0_shape"].tolist()),
            )
        graph_label = int(archive["graph_label"])
        return GraphDataset(
            x=archive["x"],
            y=archive["y"],
            train=archive["train"],
            dev=archive["dev"],
            test=archive["test"],
            n_classes=int(archive["n_classes"]),
            a0=a0,
            name=str(archive["name"]),
            graph_label=None if graph_label < 0 else graph_label,
        )


def class_means(n_classes: int, dim: int, seed: int) -> FloatArray:
    """Centres of the per-class Gaussians used by :func:`synth_inductive`."""
    rng = np.random.default_rng(seed)
    return 3.0 * rng.standard_normal((n_classes, dim)) + 1.0


def synth_inductive(  # noqa: PLR0913
    n_graphs: int,
    nodes_per_graph: int,
    n_classes: int,
    noise: float,
    seed: int,
    *,
    dim: int = 8,
) -> list[GraphDataset]:
    """Small graphs whose nodes come from one class-specific Gaussian each.

    Graph ``g`` has label ``g % n_classes``; no initial adjacency is given.
    """
    if min(n_graphs, nodes_per_graph, n_classes, dim) < 1 or noise < 0:
        msg = "graph count, sizes and class count must be positive, noise non-negative"
        raise DatasetError(msg)
    means = class_means(n_classes, dim, seed)
    rng = np.random.default_rng([seed, 1])
    graphs = []
    every = np.arange(nodes_per_graph, dtype=np.int64)
    for g in range(n_graphs):
        label = g % n_classes
        x = means[label] + noise * rng.standard_normal((nodes_per_graph, dim))
        graphs.append(
            GraphDataset(
                x=x,
                y=np.full(nodes_per_graph, label),
                train=every,
                dev=every[:0],
                test=every[:0],
                n_classes=n_classes,
                name=f"synth-{g}",
                graph_label=label,
            ),
        )
    return graphs


__all__ = [
    "GraphDataset",
    "citation_files",
    "class_means",
    "dump_tabular",
    "load_builtin",
    "load_citation",
    "load_dataset",
    "load_named",
    "load_tabular",
    "read_labels_csv",
    "read_matrix_csv",
    "save_dataset",
    "stratified_split",
    "synth_inductive",
    "yaml_from_file",
]
