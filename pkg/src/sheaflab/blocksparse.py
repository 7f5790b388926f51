"""Square block-sparse operators acting on stacked node stalks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class BlockSparseOperator:
    """An ``(n*d) x (n*d)`` operator made of ``d x d`` blocks keyed by node pair.

    Storage is a scipy BSR matrix, so block-row iteration and mat-vec are
    native. Row ``i*d + k`` is coordinate ``k`` of node ``i``'s stalk.
    """

    matrix: sp.bsr_matrix
    n_blocks: int
    d: int
    symmetric: bool = False

    @classmethod
    def from_blocks(cls, n_blocks: int, d: int, blocks: dict[tuple[int, int], np.ndarray],
                    symmetric: bool = False) -> "BlockSparseOperator":
        keys = sorted(blocks)
        if keys:
            rows = np.array([k[0] for k in keys])
            cols = np.array([k[1] for k in keys])
            data = np.stack([np.asarray(blocks[k], dtype=np.float64).reshape(d, d) for k in keys])
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            data = np.zeros((0, d, d))
        indptr = np.searchsorted(rows, np.arange(n_blocks + 1))
        mat = sp.bsr_matrix((data, cols, indptr), shape=(n_blocks * d, n_blocks * d), blocksize=(d, d))
        return cls(mat, n_blocks, d, symmetric)

    @classmethod
    def from_sparse(cls, mat, d: int, symmetric: bool = False) -> "BlockSparseOperator":
        mat = sp.bsr_matrix(mat, blocksize=(d, d))
        mat.sort_indices()
        return cls(mat, mat.shape[0] // d, d, symmetric)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def block(self, i: int, j: int) -> np.ndarray:
        m = self.matrix
        lo, hi = m.indptr[i], m.indptr[i + 1]
        hit = np.nonzero(m.indices[lo:hi] == j)[0]
        if len(hit) == 0:
            return np.zeros((self.d, self.d))
        return m.data[lo + hit].sum(axis=0)

    def blocks(self):
        """Yield ``((i, j), block)`` for every stored block."""
        m = self.matrix
        for i in range(self.n_blocks):
            for k in range(m.indptr[i], m.indptr[i + 1]):
                yield (i, int(m.indices[k])), m.data[k]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.shape[1]:
            raise ValueError(f"operator is {self.shape}, input has {x.shape[0]} rows")
        return self.matrix @ x

    __matmul__ = matvec

    def to_csr(self) -> sp.csr_matrix:
        return self.matrix.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_symmetric(self, atol: float = 0.0) -> bool:
        diff = (self.matrix - self.matrix.T).tocsr()
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= atol

    def dump_csv(self, path) -> None:
        """Write the dense matrix, row-major, one operator row per line."""
        np.savetxt(path, self.to_dense(), delimiter=",", fmt="%.17g")
