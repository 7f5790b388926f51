"""Cellular sheaves on graphs and their Laplacians.

A sheaf here carries one ``d x d`` restriction map per (node, edge)
incidence. Each edge has a stored orientation ``(tail, head)``; the
coboundary on that edge is ``F_tail x_tail - F_head x_head``. The default
orientation is ``tail < head``. Laplacians do not depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .blocksparse import BlockSparseOperator
from .graph import Graph

MAP_KINDS = ("general", "diagonal", "identity")
SHEAF_MODES = ("combinatorial", "degree-normalized")
PINV_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class CellularSheaf:
    """Restriction maps ``maps[e, 0]`` (tail) and ``maps[e, 1]`` (head) per edge."""

    graph: Graph
    d: int
    maps: np.ndarray  # (m, 2, d, d)
    map_kind: str = "general"
    ends: np.ndarray | None = None  # (m, 2) stored orientation

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("stalk dimension must be >= 1")
        if self.map_kind not in MAP_KINDS:
            raise ValueError(f"unknown map kind {self.map_kind!r}")
        maps = np.asarray(self.maps, dtype=np.float64)
        if maps.shape != (self.graph.m, 2, self.d, self.d):
            raise ValueError(f"maps must have shape {(self.graph.m, 2, self.d, self.d)}, got {maps.shape}")
        if not np.all(np.isfinite(maps)):
            raise ValueError("restriction maps contain non-finite entries")
        if self.map_kind == "identity" and not np.array_equal(maps, np.broadcast_to(np.eye(self.d), maps.shape)):
            raise ValueError("identity sheaf with non-identity maps")
        if self.map_kind == "diagonal":
            off = maps * (1 - np.eye(self.d))
            if np.any(off != 0):
                raise ValueError("diagonal sheaf with off-diagonal entries")
        ends = self.graph.edges if self.ends is None else np.asarray(self.ends, dtype=np.int64)
        if ends.shape != self.graph.edges.shape or not np.array_equal(np.sort(ends, axis=1), self.graph.edges):
            raise ValueError("edge orientation does not match the graph's edges")
        maps.setflags(write=False)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "ends", ends)

    @property
    def n(self) -> int:
        return self.graph.n

    def diagonals(self) -> np.ndarray:
        """``(m, 2, d)`` diagonal entries; only meaningful for non-general kinds."""
        return np.diagonal(self.maps, axis1=2, axis2=3)

    def flipped(self, edge_mask: np.ndarray) -> "CellularSheaf":
        """Same sheaf with the stored orientation of masked edges reversed."""
        edge_mask = np.asarray(edge_mask, dtype=bool)
        ends = self.ends.copy()
        ends[edge_mask] = ends[edge_mask][:, ::-1]
        maps = self.maps.copy()
        maps[edge_mask] = maps[edge_mask][:, ::-1]
        return CellularSheaf(self.graph, self.d, maps, self.map_kind, ends)


def identity_sheaf(g: Graph, d: int = 1) -> CellularSheaf:
    if d < 1:
        raise ValueError("stalk dimension must be >= 1")
    maps = np.broadcast_to(np.eye(d), (g.m, 2, d, d)).copy()
    return CellularSheaf(g, d, maps, "identity")


def diagonal_sheaf(g: Graph, tail_diag: np.ndarray, head_diag: np.ndarray) -> CellularSheaf:
    """Sheaf with diagonal maps; inputs are ``(m, d)`` arrays of diagonal entries."""
    tail_diag = np.asarray(tail_diag, dtype=np.float64)
    head_diag = np.asarray(head_diag, dtype=np.float64)
    d = tail_diag.shape[1]
    maps = np.zeros((g.m, 2, d, d))
    idx = np.arange(d)
    maps[:, 0, idx, idx] = tail_diag
    maps[:, 1, idx, idx] = head_diag
    return CellularSheaf(g, d, maps, "diagonal")


def coboundary_apply(sheaf: CellularSheaf, x: np.ndarray) -> np.ndarray:
    """Apply the coboundary to a stacked ``(n*d, f)`` signal, giving ``(m*d, f)``."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    n, d = sheaf.n, sheaf.d
    if x.shape[0] != n * d:
        raise ValueError(f"expected {n * d} rows, got {x.shape[0]}")
    f = x.shape[1]
    xs = x.reshape(n, d, f)
    t, h = sheaf.ends[:, 0], sheaf.ends[:, 1]
    out = (np.einsum("eij,ejf->eif", sheaf.maps[:, 0], xs[t])
           - np.einsum("eij,ejf->eif", sheaf.maps[:, 1], xs[h]))
    out = out.reshape(sheaf.graph.m * d, f)
    return out[:, 0] if squeeze else out


def _blocks_to_bsr(n: int, d: int, rows, cols, blocks) -> sp.bsr_matrix:
    # expand blocks into scalar COO entries, summing duplicates
    a, b = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    r = (rows[:, None, None] * d + a).ravel()
    c = (cols[:, None, None] * d + b).ravel()
    mat = sp.coo_matrix((blocks.ravel(), (r, c)), shape=(n * d, n * d)).tocsr()
    mat.sum_duplicates()
    return mat


def assemble_sheaf_laplacian(sheaf: CellularSheaf, mode: str = "combinatorial") -> BlockSparseOperator:
    """Assemble ``delta^T delta`` block-wise, optionally degree-normalized.

    Degree normalization is ``D^-1/2 L D^-1/2`` with ``D`` the block diagonal
    of ``L`` and an eigenvalue-floored pseudo-inverse square root.
    """
    if mode not in SHEAF_MODES:
        raise ValueError(f"unknown sheaf Laplacian mode {mode!r}")
    if not np.all(np.isfinite(sheaf.maps)):
        raise ValueError("restriction maps contain non-finite entries")
    n, d = sheaf.n, sheaf.d
    # canonical (lo, hi) order makes the result independent of stored orientation
    t, h = sheaf.graph.edges[:, 0], sheaf.graph.edges[:, 1]
    swap = (sheaf.ends[:, 0] != t)[:, None, None]
    ft = np.where(swap, sheaf.maps[:, 1], sheaf.maps[:, 0])
    fh = np.where(swap, sheaf.maps[:, 0], sheaf.maps[:, 1])
    ftt = ft.transpose(0, 2, 1)
    fht = fh.transpose(0, 2, 1)
    dblocks = np.zeros((n, d, d))
    np.add.at(dblocks, t, ftt @ ft)
    np.add.at(dblocks, h, fht @ fh)
    dblocks = _sym(dblocks)
    off_th = -(ftt @ fh)
    off_ht = off_th.transpose(0, 2, 1)
    nodes = np.arange(n)
    rows = np.concatenate([nodes, t, h])
    cols = np.concatenate([nodes, h, t])
    blocks = np.concatenate([dblocks, off_th, off_ht])
    lap = _blocks_to_bsr(n, d, rows, cols, blocks)

    if mode == "degree-normalized":
        s = block_pinv_sqrt(dblocks)
        smat = _blocks_to_bsr(n, d, nodes, nodes, s)
        lap = smat @ lap @ smat
        lap = ((lap + lap.T) * 0.5).tocsr()
    return BlockSparseOperator.from_sparse(lap, d=d, symmetric=True)


def _sym(blocks: np.ndarray) -> np.ndarray:
    return 0.5 * (blocks + blocks.transpose(0, 2, 1))


def block_pinv_sqrt(blocks: np.ndarray, floor: float = PINV_FLOOR) -> np.ndarray:
    """Pseudo-inverse square root of a stack of symmetric PSD blocks."""
    w, v = np.linalg.eigh(blocks)
    inv = np.zeros_like(w)
    keep = w > floor
    inv[keep] = w[keep] ** -0.5
    return np.einsum("nij,nj,nkj->nik", v, inv, v)


def augment_fixed_channels(sheaf: CellularSheaf, add_lp: bool = False, add_hp: bool = False) -> CellularSheaf:
    """Append fixed stalk coordinates so ``F_tail^T F_head`` gets a +1 (lp) / -1 (hp) entry.

    The low-pass coordinate is 1 in both maps. The high-pass coordinate is 1
    in the tail map and -1 in the head map. Extra coordinates come after the
    original ``d``, low-pass first.
    """
    if sheaf.map_kind == "general":
        raise ValueError("fixed channels can only be added to diagonal or identity sheaves")
    if not add_lp and not add_hp:
        return sheaf
    extra_t = [1.0] * add_lp + [1.0] * add_hp
    extra_h = [1.0] * add_lp + [-1.0] * add_hp
    diag = sheaf.diagonals()
    m = sheaf.graph.m
    tail = np.hstack([diag[:, 0], np.tile(extra_t, (m, 1))])
    head = np.hstack([diag[:, 1], np.tile(extra_h, (m, 1))])
    new_d = sheaf.d + len(extra_t)
    maps = np.zeros((m, 2, new_d, new_d))
    idx = np.arange(new_d)
    maps[:, 0, idx, idx] = tail
    maps[:, 1, idx, idx] = head
    kind = "identity" if sheaf.map_kind == "identity" and not add_hp else "diagonal"
    return CellularSheaf(sheaf.graph, new_d, maps, kind, sheaf.ends)
