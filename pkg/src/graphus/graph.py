"""Graph container, structural quantities and the on-disk dataset format.

A dataset directory holds four files::

    edges.csv      two integer columns (0-based node ids), one edge per row
    features.csv   n rows x d real columns
    labels.csv     n rows, one integer class per row
    meta.json      {"n": ..., "d": ..., "num_classes": ...}
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from graphus.errors import DatasetError

__all__ = [
    "Graph",
    "load_dataset",
    "save_dataset",
    "normalize_features",
    "degree_centrality",
    "personalized_pagerank",
    "pagerank",
    "ppr_matrix",
    "normalized_adjacency",
]


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable node-classification instance.

    ``adjacency`` is kept as a CSR matrix with binary entries; ``dense_adjacency``
    is materialized lazily for the small-graph code paths.
    """

    adjacency: sp.csr_matrix
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    _dense: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        adj = sp.csr_matrix(self.adjacency, dtype=np.float64)
        adj.setdiag(0)
        adj.eliminate_zeros()
        adj.data[:] = 1.0
        adj.sort_indices()
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise ValueError(f"adjacency must be square, got {adj.shape}")
        if (adj != adj.T).nnz:
            raise ValueError("adjacency must be symmetric")
        if features.ndim != 2 or features.shape[0] != n:
            raise ValueError(f"features must have shape (n, d) with n={n}")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        if labels.shape != (n,):
            raise ValueError(f"labels must have shape ({n},)")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if n and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        for arr in (adj.data, adj.indices, adj.indptr, features, labels):
            arr.flags.writeable = False
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_edges(cls, n, edges, features, labels, num_classes):
        """Build a graph from an edge list; edges are symmetrized and deduplicated."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError(f"edge endpoint out of range for n={n}")
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
        return cls(adj, features, labels, num_classes)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def dense_adjacency(self) -> np.ndarray:
        if not self._dense:
            dense = self.adjacency.toarray()
            dense.flags.writeable = False
            self._dense.append(dense)
        return self._dense[0]

    def edge_list(self) -> np.ndarray:
        """Upper-triangular edge list, sorted lexicographically."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        edges = np.stack([upper.row, upper.col], axis=1).astype(np.int64)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        return edges[order]

    def with_features(self, features) -> "Graph":
        return Graph(self.adjacency, features, self.labels, self.num_classes)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.adjacency.shape == other.adjacency.shape
            and (self.adjacency != other.adjacency).nnz == 0
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


def _read_rows(path: Path):
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            yield lineno, row


def load_dataset(path, normalize: bool = False) -> Graph:
    """Load a dataset directory (see module docstring).

    Directed edges are symmetrized and self-loops dropped. With ``normalize``
    the feature rows are scaled to unit L2 norm.
    """
    root = Path(path)
    try:
        meta = json.loads((root / "meta.json").read_text())
    except FileNotFoundError as exc:
        raise DatasetError(f"{root}: missing meta.json") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{root / 'meta.json'}: invalid JSON ({exc})") from exc
    try:
        n, d, num_classes = int(meta["n"]), int(meta["d"]), int(meta["num_classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{root / 'meta.json'}: needs integer n, d, num_classes") from exc

    edges = []
    for lineno, row in _read_rows(root / "edges.csv"):
        if len(row) != 2:
            raise DatasetError(f"edges.csv line {lineno}: expected 2 columns, got {len(row)}")
        try:
            u, v = int(row[0]), int(row[1])
        except ValueError as exc:
            raise DatasetError(f"edges.csv line {lineno}: non-integer node id {row!r}") from exc
        if not (0 <= u < n and 0 <= v < n):
            raise DatasetError(f"edges.csv line {lineno}: node id out of range [0, {n})")
        if u != v:
            edges.append((u, v))

    features = []
    for lineno, row in _read_rows(root / "features.csv"):
        if len(row) != d:
            raise DatasetError(f"features.csv line {lineno}: expected {d} columns, got {len(row)}")
        try:
            features.append([float(x) for x in row])
        except ValueError as exc:
            raise DatasetError(f"features.csv line {lineno}: non-numeric value") from exc
    if len(features) != n:
        raise DatasetError(f"features.csv: expected {n} rows, got {len(features)}")

    labels = []
    for lineno, row in _read_rows(root / "labels.csv"):
        if len(row) != 1:
            raise DatasetError(f"labels.csv line {lineno}: expected 1 column, got {len(row)}")
        try:
            label = int(row[0])
        except ValueError as exc:
            raise DatasetError(f"labels.csv line {lineno}: non-integer label {row[0]!r}") from exc
        if not 0 <= label < num_classes:
            raise DatasetError(
                f"labels.csv line {lineno}: label {label} outside [0, {num_classes})"
            )
        labels.append(label)
    if len(labels) != n:
        raise DatasetError(f"labels.csv: expected {n} rows, got {len(labels)}")

    X = np.asarray(features, dtype=np.float64).reshape(n, d)
    if not np.all(np.isfinite(X)):
        raise DatasetError("features.csv: non-finite feature value")
    if normalize:
        X = normalize_features(X)
    return Graph.from_edges(n, edges, X, labels, num_classes)


def _atomic_write_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_dataset(g: Graph, path) -> Path:
    """Write ``g`` as a dataset directory; floats use ``repr`` so loading round-trips."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    edges = "".join(f"{u},{v}\n" for u, v in g.edge_list())
    feats = "".join(",".join(repr(float(x)) for x in row) + "\n" for row in g.features)
    labels = "".join(f"{int(y)}\n" for y in g.labels)
    meta = json.dumps({"n": g.n, "d": g.feature_dim, "num_classes": g.num_classes}, indent=2)
    _atomic_write_text(root / "edges.csv", edges)
    _atomic_write_text(root / "features.csv", feats)
    _atomic_write_text(root / "labels.csv", labels)
    _atomic_write_text(root / "meta.json", meta + "\n")
    return root


def normalize_features(X) -> np.ndarray:
    """Scale every nonzero row to unit Euclidean norm; zero rows are left alone."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=X.copy(), where=norms > 0)


def degree_centrality(g: Graph) -> np.ndarray:
    return np.asarray(g.adjacency.sum(axis=1)).ravel()


def _power_iteration(g: Graph, start: np.ndarray, teleport: float, iterations: int):
    # start: (n, k) teleport distributions, one column per walk
    if not 0.0 < teleport <= 1.0:
        raise ValueError(f"teleport must be in (0, 1], got {teleport}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    deg = degree_centrality(g)
    inv_deg = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    isolated = deg == 0
    # transition for row-normalized walk: pi <- teleport*e + (1-teleport) * A^T D^-1 pi
    pi = start.copy()
    for _ in range(iterations):
        spread = g.adjacency.T @ (inv_deg[:, None] * pi)
        # a walker on an isolated node can only teleport
        spread += start * pi[isolated].sum(axis=0)
        pi = teleport * start + (1.0 - teleport) * spread
    return pi


def personalized_pagerank(g: Graph, source: int, teleport: float = 0.2, iterations: int = 10):
    """PPR vector of ``source`` after a fixed number of power-iteration steps."""
    if not 0 <= source < g.n:
        raise IndexError(f"source {source} out of range for n={g.n}")
    start = np.zeros((g.n, 1))
    start[source, 0] = 1.0
    return _power_iteration(g, start, teleport, iterations)[:, 0]


def ppr_matrix(g: Graph, sources, teleport: float = 0.2, iterations: int = 10) -> np.ndarray:
    """Column ``k`` is the PPR vector of ``sources[k]``."""
    sources = np.asarray(sources, dtype=np.int64)
    if sources.size and (sources.min() < 0 or sources.max() >= g.n):
        raise IndexError("source out of range")
    start = np.zeros((g.n, len(sources)))
    start[sources, np.arange(len(sources))] = 1.0
    return _power_iteration(g, start, teleport, iterations)


def pagerank(g: Graph, teleport: float = 0.2, iterations: int = 10) -> np.ndarray:
    """Global PageRank: power iteration with a uniform teleport distribution."""
    start = np.full((g.n, 1), 1.0 / g.n)
    return _power_iteration(g, start, teleport, iterations)[:, 0]


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """Symmetric normalization with self-loops, D~^-1/2 (A + I) D~^-1/2."""
    a_tilde = g.adjacency + sp.identity(g.n, format="csr")
    d = np.asarray(a_tilde.sum(axis=1)).ravel()
    scale = sp.diags(1.0 / np.sqrt(d))
    return sp.csr_matrix(scale @ a_tilde @ scale)
