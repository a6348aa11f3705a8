"""Image vectors and CSR sparse matrices shared by every solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

CSR_MAGIC = b"SUPTOMO-CSR1"

_U64 = np.dtype("<u8")
_F64 = np.dtype("<f8")


@dataclass(frozen=True, eq=False)
class Image:
    """Flat row-major pixel vector plus its grid shape.

    Pixel (i, j), counted 1-based from the top-left corner, is component
    cols*(i-1) + (j-1) of ``data``.
    """

    data: np.ndarray
    rows: int
    cols: int

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"image shape must be positive, got {self.rows}x{self.cols}")
        if data.ndim != 1 or data.size != self.rows * self.cols:
            raise ValueError(
                f"image data has length {data.size}, expected {self.rows * self.cols} "
                f"for a {self.rows}x{self.cols} grid"
            )

    def grid(self) -> np.ndarray:
        """The data viewed as a rows-by-cols array (no copy)."""
        return self.data.reshape(self.rows, self.cols)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Image":
        return cls(np.zeros(rows * cols), rows, cols)

    @classmethod
    def full(cls, rows: int, cols: int, value: float) -> "Image":
        return cls(np.full(rows * cols, float(value)), rows, cols)


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable CSR matrix.

    Invariants enforced at construction: row_ptr starts at 0, is
    nondecreasing, has length n_rows+1 and ends at len(values); column
    indices are in range and strictly increasing within each row.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_ptr", row_ptr)
        object.__setattr__(self, "col_idx", col_idx)
        object.__setattr__(self, "values", values)

        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError(f"matrix shape must be positive, got {self.n_rows}x{self.n_cols}")
        if row_ptr.shape != (self.n_rows + 1,):
            raise ValueError(
                f"row_ptr has length {row_ptr.size}, expected {self.n_rows + 1}"
            )
        if row_ptr[0] != 0 or row_ptr[-1] != values.size:
            raise ValueError("row_ptr must start at 0 and end at len(values)")
        if np.any(np.diff(row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if col_idx.shape != values.shape or col_idx.ndim != 1:
            raise ValueError("col_idx and values must be 1-D and equally long")
        if col_idx.size and (col_idx.min() < 0 or col_idx.max() >= self.n_cols):
            raise ValueError(f"column indices must lie in [0, {self.n_cols})")
        if col_idx.size > 1:
            jumps = np.diff(col_idx)
            # positions where a new row begins are allowed to step backwards
            starts = np.zeros(col_idx.size - 1, dtype=bool)
            inner = row_ptr[1:-1]
            inner = inner[(inner > 0) & (inner < col_idx.size)]
            starts[inner - 1] = True
            if np.any(jumps[~starts] <= 0):
                raise ValueError("column indices must be strictly increasing within a row")

        csr = scipy.sparse.csr_matrix(
            (values, col_idx, row_ptr), shape=(self.n_rows, self.n_cols), copy=False
        )
        csr.has_sorted_indices = True
        object.__setattr__(self, "_csr", csr)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row i (views, do not mutate)."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            cols, vals = self.row(i)
            out[i, cols] = vals
        return out

    @classmethod
    def from_dense(cls, array) -> "SparseMatrix":
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError("from_dense expects a 2-D array")
        row_ptr = [0]
        cols, vals = [], []
        for i in range(array.shape[0]):
            nz = np.nonzero(array[i])[0]
            cols.append(nz)
            vals.append(array[i, nz])
            row_ptr.append(row_ptr[-1] + nz.size)
        return cls(
            array.shape[0],
            array.shape[1],
            np.array(row_ptr, dtype=np.int64),
            np.concatenate(cols) if cols else np.zeros(0, np.int64),
            np.concatenate(vals) if vals else np.zeros(0),
        )

    @classmethod
    def from_rows(cls, n_cols: int, rows: list[tuple[np.ndarray, np.ndarray]]) -> "SparseMatrix":
        """Build from per-row (column indices, values) pairs, already sorted."""
        row_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        for i, (cols, _) in enumerate(rows):
            row_ptr[i + 1] = row_ptr[i] + len(cols)
        col_idx = (
            np.concatenate([np.asarray(c, np.int64) for c, _ in rows])
            if row_ptr[-1]
            else np.zeros(0, np.int64)
        )
        values = (
            np.concatenate([np.asarray(v, np.float64) for _, v in rows])
            if row_ptr[-1]
            else np.zeros(0)
        )
        return cls(len(rows), n_cols, row_ptr, col_idx, values)


def matvec(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Product A x with a length check on both sides."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.n_cols,):
        raise ValueError(
            f"matvec: matrix is {a.n_rows}x{a.n_cols} but vector has shape {x.shape}"
        )
    return a._csr @ x


def rmatvec(a: SparseMatrix, y: np.ndarray) -> np.ndarray:
    """Transpose product A^T y without materializing the transpose."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (a.n_rows,):
        raise ValueError(
            f"rmatvec: matrix is {a.n_rows}x{a.n_cols} but vector has shape {y.shape}"
        )
    return a._csr.T @ y


def normal_op(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """A^T A x, composed from matvec and rmatvec so both share one code path."""
    return rmatvec(a, matvec(a, x))


def save_matrix(path, a: SparseMatrix) -> None:
    """Write the binary CSR container (magic, u64 dims/offsets, f64 values)."""
    with open(path, "wb") as fh:
        fh.write(CSR_MAGIC)
        header = np.array([a.n_rows, a.n_cols, a.nnz], dtype=_U64)
        fh.write(header.tobytes())
        fh.write(a.row_ptr.astype(_U64).tobytes())
        fh.write(a.col_idx.astype(_U64).tobytes())
        fh.write(a.values.astype(_F64).tobytes())


def load_matrix(path) -> SparseMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CSR_MAGIC)] != CSR_MAGIC:
        raise ValueError(f"{path}: not a {CSR_MAGIC.decode()} file")
    off = len(CSR_MAGIC)
    n_rows, n_cols, nnz = (int(v) for v in np.frombuffer(blob, _U64, count=3, offset=off))
    off += 3 * 8
    row_ptr = np.frombuffer(blob, _U64, count=n_rows + 1, offset=off).astype(np.int64)
    off += (n_rows + 1) * 8
    col_idx = np.frombuffer(blob, _U64, count=nnz, offset=off).astype(np.int64)
    off += nnz * 8
    values = np.frombuffer(blob, _F64, count=nnz, offset=off).astype(np.float64)
    off += nnz * 8
    if off != len(blob):
        raise ValueError(f"{path}: trailing bytes after CSR payload")
    return SparseMatrix(n_rows, n_cols, row_ptr, col_idx, values)
