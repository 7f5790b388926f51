"""Undirected simple graphs, node data containers and graph Laplacians."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc

logger = logging.getLogger(__name__)

LAPLACIAN_MODES = ("combinatorial", "symmetric-normalized")


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    Edges are stored once, oriented ``u < v``, sorted lexicographically.
    Use :meth:`from_edges` to build one from raw (possibly dirty) pairs.
    """

    n: int
    edges: np.ndarray  # (m, 2) int64, u < v, sorted, unique

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.n < 0:
            raise ValueError("node count must be non-negative")
        if len(e):
            if e.min() < 0 or e.max() >= self.n:
                raise ValueError(f"edge endpoint out of range for n={self.n}")
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValueError("edges must be oriented u < v without self-loops")
            keys = e[:, 0] * self.n + e[:, 1]
            if np.any(np.diff(keys) <= 0):
                raise ValueError("edge list must be sorted and unique")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @classmethod
    def from_edges(cls, n: int, pairs: Iterable[Sequence[int]]) -> "Graph":
        """Symmetrize, drop self-loops and merge duplicate pairs."""
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        if len(arr) and (arr.min() < 0 or arr.max() >= n):
            raise ValueError(f"edge endpoint out of range for n={n}")
        loops = arr[:, 0] == arr[:, 1]
        if loops.any():
            logger.warning("dropping %d self-loop(s)", int(loops.sum()))
            arr = arr[~loops]
        arr = np.sort(arr, axis=1)
        arr = np.unique(arr, axis=0) if len(arr) else arr
        return cls(n, arr)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n).astype(np.int64)

    def adjacency(self) -> sp.csr_matrix:
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * self.m)
        a = sp.coo_matrix((data, (np.r_[u, v], np.r_[v, u])), shape=(self.n, self.n))
        return a.tocsr()

    def neighbors(self) -> list[np.ndarray]:
        a = self.adjacency()
        return [a.indices[a.indptr[i]:a.indptr[i + 1]] for i in range(self.n)]

    def permute(self, perm: np.ndarray) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        return Graph.from_edges(self.n, perm[self.edges])

    def disjoint_union(self, other: "Graph") -> "Graph":
        return Graph.from_edges(self.n + other.n, np.vstack([self.edges, other.edges + self.n]))


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.values, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        x.setflags(write=False)
        object.__setattr__(self, "values", x)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabelVector:
    labels: np.ndarray
    c: int = -1

    def __post_init__(self):
        y = np.asarray(self.labels, dtype=np.int64).ravel()
        c = self.c if self.c >= 0 else (int(y.max()) + 1 if len(y) else 0)
        if len(y) and (y.min() < 0 or y.max() >= c):
            raise ValueError("label index outside 0..c-1")
        if c < 2:
            raise ValueError("need at least two classes")
        y.setflags(write=False)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "c", c)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Fold:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class FoldSplits:
    folds: tuple[Fold, ...]
    source: str = "file"  # "file" or "random"
    seed: int | None = None

    def validate(self, n: int) -> None:
        for i, f in enumerate(self.folds):
            parts = [np.asarray(f.train), np.asarray(f.val), np.asarray(f.test)]
            for p in parts:
                if len(p) and (p.min() < 0 or p.max() >= n):
                    raise ValueError(f"fold {i}: index out of range")
                if len(np.unique(p)) != len(p):
                    raise ValueError(f"fold {i}: repeated index")
            if (np.intersect1d(parts[0], parts[1]).size or np.intersect1d(parts[0], parts[2]).size
                    or np.intersect1d(parts[1], parts[2]).size):
                raise ValueError(f"fold {i}: train/val/test overlap")

    def __len__(self) -> int:
        return len(self.folds)


def random_splits(n: int, n_folds: int = 10, seed: int = 0,
                  fractions: tuple[float, float, float] = (0.48, 0.32, 0.20)) -> FoldSplits:
    """Uniformly random train/val/test partitions, one permutation per fold."""
    rng = np.random.default_rng(seed)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    folds = []
    for _ in range(n_folds):
        p = rng.permutation(n)
        folds.append(Fold(np.sort(p[:n_train]), np.sort(p[n_train:n_train + n_val]),
                          np.sort(p[n_train + n_val:])))
    return FoldSplits(tuple(folds), source="random", seed=seed)


def graph_laplacian(g: Graph, mode: str = "combinatorial"):
    """Scalar graph Laplacian as a ``d = 1`` block operator.

    ``combinatorial`` gives ``D - A``. ``symmetric-normalized`` gives
    ``I - D^-1/2 A D^-1/2`` with isolated nodes mapped to a zero row.
    """
    from .blocksparse import BlockSparseOperator

    if mode not in LAPLACIAN_MODES:
        raise ValueError(f"unknown Laplacian mode {mode!r}")
    a = g.adjacency()
    deg = g.degree.astype(np.float64)
    lap = sp.diags(deg) - a
    if mode == "symmetric-normalized":
        inv_sqrt = np.zeros_like(deg)
        nz = deg > 0
        inv_sqrt[nz] = deg[nz] ** -0.5
        s = sp.diags(inv_sqrt)
        lap = s @ lap @ s
    return BlockSparseOperator.from_sparse(sp.csr_matrix(lap), d=1, symmetric=True)


def connected_components(g: Graph) -> np.ndarray:
    """Dense component ids, numbered in order of each component's lowest node."""
    _, raw = _cc(g.adjacency(), directed=False)
    # relabel so ids follow first appearance
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[raw]
