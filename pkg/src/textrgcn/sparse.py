"""Minimal CSR matrix used for relation adjacencies.

Only the operations the model needs: construction from COO triples,
dense right-multiplication (through the kernel backends), transposition,
and dense materialization for oracles and tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeMismatch


@dataclass(frozen=True)
class CSRMatrix:
    shape: tuple[int, int]
    indptr: np.ndarray  # int64, len rows + 1
    indices: np.ndarray  # int64, len nnz
    data: np.ndarray  # float64, len nnz

    @property
    def nnz(self) -> int:
        return int(self.data.shape[0])

    @staticmethod
    def from_coo(rows, cols, data, shape: tuple[int, int]) -> "CSRMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        data = np.asarray(data, dtype=np.float64)
        if not (rows.shape == cols.shape == data.shape):
            raise ShapeMismatch("COO arrays must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= shape[0]:
                raise ShapeMismatch("row index out of bounds")
            if cols.min() < 0 or cols.max() >= shape[1]:
                raise ShapeMismatch("column index out of bounds")
        order = np.lexsort((cols, rows))
        rows, cols, data = rows[order], cols[order], data[order]
        if rows.size > 1 and np.any((np.diff(rows) == 0) & (np.diff(cols) == 0)):
            raise ValueError("duplicate coordinate in COO input")
        indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(np.bincount(rows, minlength=shape[0]))
        return CSRMatrix(shape, indptr, cols, data)

    @staticmethod
    def identity(n: int) -> "CSRMatrix":
        return CSRMatrix(
            (n, n),
            np.arange(n + 1, dtype=np.int64),
            np.arange(n, dtype=np.int64),
            np.ones(n, dtype=np.float64),
        )

    @staticmethod
    def empty(shape: tuple[int, int]) -> "CSRMatrix":
        return CSRMatrix(
            shape,
            np.zeros(shape[0] + 1, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            np.zeros(0, dtype=np.float64),
        )

    def __matmul__(self, dense: np.ndarray) -> np.ndarray:
        dense = np.ascontiguousarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != self.shape[1]:
            raise ShapeMismatch(
                f"cannot multiply {self.shape} CSR by dense {dense.shape}"
            )
        return kernels.csr_dense_matmul(self.indptr, self.indices, self.data, dense)

    def transpose(self) -> "CSRMatrix":
        n_rows, n_cols = self.shape
        row_ids = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(self.indptr))
        order = np.argsort(self.indices, kind="stable")
        t_indptr = np.zeros(n_cols + 1, dtype=np.int64)
        t_indptr[1:] = np.cumsum(np.bincount(self.indices, minlength=n_cols))
        return CSRMatrix(
            (n_cols, n_rows), t_indptr, row_ids[order], self.data[order]
        )

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.indptr)

    def row_sums(self) -> np.ndarray:
        csum = np.concatenate(([0.0], np.cumsum(self.data)))
        return csum[self.indptr[1:]] - csum[self.indptr[:-1]]

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.float64)
        row_ids = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        out[row_ids, self.indices] = self.data
        return out

    def scale_rows(self, factors: np.ndarray) -> "CSRMatrix":
        """New matrix with row i multiplied by factors[i]."""
        if factors.shape != (self.shape[0],):
            raise ShapeMismatch("row factor length must equal row count")
        row_ids = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        return CSRMatrix(
            self.shape, self.indptr, self.indices, self.data * factors[row_ids]
        )
