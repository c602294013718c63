"""Row-compressed sparse weight matrices and the kernels sparse layers use.

A sparse layer keeps only its live connections: parallel arrays of row
index, column index, weight and momentum, sorted by (row, col). A CSR-style
row pointer gives O(nnz/rows) access to any row's slice. The forward
product and the input gradient run through SciPy's CSR kernels on the same
buffers; the per-connection weight gradient is a sampled dense-dense
product (gather kernel) compiled with numba, with a chunked numpy fallback.

Batches are plain 2-D float64 arrays, row-major: one sample per row.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

SNAPSHOT_MAGIC = b"SETSNAP1"

# one stored connection: (row, col, weight), little-endian
TRIPLE_DTYPE = np.dtype([("row", "<i8"), ("col", "<i8"), ("weight", "<f8")])


def _index_dtype(n_in: int, n_out: int):
    # int32 keeps SciPy on its fast path; fall back for huge layers
    return np.int32 if n_in * n_out <= np.iinfo(np.int32).max else np.int64


def as_batch(x, n_cols: int | None = None, name: str = "batch") -> np.ndarray:
    """Validate a dense batch: 2-D float64 with the expected column count."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    if n_cols is not None and x.shape[1] != n_cols:
        raise ValueError(f"{name} has {x.shape[1]} columns, expected {n_cols}")
    return x


class SparseWeights:
    """Sparse weight matrix of one layer, with a per-connection momentum buffer.

    Connections are canonicalized to (row, col) lexicographic order at
    construction, which makes every reduction over them deterministic.
    ``weights`` and ``momentum`` may be mutated in place (the optimizer
    does); the connection pattern itself is immutable. Rebuilding the
    pattern (evolution) creates a new instance.
    """

    def __init__(self, n_in, n_out, rows, cols, weights, momentum=None):
        if n_in <= 0 or n_out <= 0:
            raise ValueError(f"matrix dimensions must be positive, got {n_in}x{n_out}")
        idx_t = _index_dtype(n_in, n_out)
        rows = np.asarray(rows, dtype=idx_t).ravel()
        cols = np.asarray(cols, dtype=idx_t).ravel()
        weights = np.asarray(weights, dtype=np.float64).ravel()
        if momentum is None:
            momentum = np.zeros_like(weights)
        else:
            momentum = np.asarray(momentum, dtype=np.float64).ravel()
        if not (len(rows) == len(cols) == len(weights) == len(momentum)):
            raise ValueError("rows, cols, weights and momentum must have equal length")
        if len(rows) > n_in * n_out:
            raise ValueError(f"{len(rows)} connections exceed capacity {n_in}x{n_out}")
        if len(rows) and (rows.min() < 0 or rows.max() >= n_in):
            raise ValueError(f"row index out of range for n_in={n_in}")
        if len(rows) and (cols.min() < 0 or cols.max() >= n_out):
            raise ValueError(f"col index out of range for n_out={n_out}")

        flat = rows.astype(np.int64) * n_out + cols
        gaps = np.diff(flat)
        if not np.all(gaps > 0):  # not canonical yet: sort, then reject duplicates
            order = np.argsort(flat, kind="stable")
            flat = flat[order]
            if np.any(flat[1:] == flat[:-1]):
                raise ValueError("duplicate connection positions")
            rows, cols = rows[order], cols[order]
            weights, momentum = weights[order], momentum[order]

        counts = np.bincount(rows, minlength=n_in)
        indptr = np.zeros(n_in + 1, dtype=idx_t)
        np.cumsum(counts, out=indptr[1:])
        self._init_canonical(n_in, n_out, rows, cols, weights, momentum, indptr)

    @classmethod
    def _from_canonical(cls, n_in, n_out, rows, cols, weights, momentum, indptr):
        """Trusted constructor: arrays already (row, col)-sorted, distinct and
        in range, with a matching row pointer. Used by the samplers."""
        self = cls.__new__(cls)
        self._init_canonical(n_in, n_out, rows, cols, weights, momentum, indptr)
        return self

    def _init_canonical(self, n_in, n_out, rows, cols, weights, momentum, indptr):
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.rows = np.ascontiguousarray(rows)
        self.cols = np.ascontiguousarray(cols)
        self.weights = np.ascontiguousarray(weights)
        self.momentum = np.ascontiguousarray(momentum)
        self.indptr = indptr
        self._csr = None

    @property
    def nnz(self) -> int:
        return len(self.weights)

    @property
    def csr(self) -> sp.csr_matrix:
        # built lazily; shares self.weights, so in-place weight updates need
        # no rebuild
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.weights, self.cols, self.indptr), shape=(self.n_in, self.n_out)
            )
        return self._csr

    def row_slice(self, i: int) -> slice:
        """Connection-array slice of row ``i``."""
        return slice(int(self.indptr[i]), int(self.indptr[i + 1]))

    def copy(self) -> "SparseWeights":
        return SparseWeights(
            self.n_in,
            self.n_out,
            self.rows.copy(),
            self.cols.copy(),
            self.weights.copy(),
            self.momentum.copy(),
        )

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_in, self.n_out))
        dense[self.rows, self.cols] = self.weights
        return dense

    def __repr__(self):
        return f"SparseWeights({self.n_in}x{self.n_out}, nnz={self.nnz})"


def density(w: SparseWeights) -> float:
    """Fraction of potential connections present: nnz / (n_in * n_out)."""
    return w.nnz / (w.n_in * w.n_out)


def sparsity(w: SparseWeights) -> float:
    """Fraction of potential connections absent: 1 - density."""
    return 1.0 - density(w)


def sparse_forward(w: SparseWeights, x) -> np.ndarray:
    """Batch product against the sparse matrix: out[b, j] = sum_i x[b, i] * w[i, j]."""
    x = as_batch(x, w.n_in, "x")
    out = x @ w.csr
    return np.asarray(out)


def sparse_backward(w: SparseWeights, x, grad_out) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the forward product.

    Returns ``(grad_w, grad_x)`` where ``grad_w`` is per stored connection,
    aligned with ``w.weights`` (structural sparsity preserved: no gradient
    exists for absent positions), and ``grad_x`` has the shape of ``x``.
    """
    x = as_batch(x, w.n_in, "x")
    grad_out = as_batch(grad_out, w.n_out, "grad_out")
    if x.shape[0] != grad_out.shape[0]:
        raise ValueError(
            f"x has {x.shape[0]} rows but grad_out has {grad_out.shape[0]}"
        )
    grad_x = np.asarray(grad_out @ w.csr.T)
    grad_w = _sddmm(w.rows, w.cols, x, grad_out)
    return grad_w, grad_x


def _sddmm(rows, cols, x, g) -> np.ndarray:
    """grad_w[k] = sum_b x[b, rows[k]] * g[b, cols[k]], sampled at stored positions."""
    out = np.empty(len(rows))
    if len(rows) == 0:
        return out
    if _HAVE_NUMBA:
        # transposed copies make the inner batch loop contiguous
        _sddmm_numba(rows, cols, np.ascontiguousarray(x.T), np.ascontiguousarray(g.T), out)
    else:
        _sddmm_numpy(rows, cols, x, g, out)
    return out


if _HAVE_NUMBA:

    @njit(cache=True)
    def _sddmm_numba(rows, cols, xt, gt, out):  # pragma: no cover - compiled
        for k in range(rows.shape[0]):
            r = rows[k]
            c = cols[k]
            acc = 0.0
            for b in range(xt.shape[1]):
                acc += xt[r, b] * gt[c, b]
            out[k] = acc


def _sddmm_numpy(rows, cols, x, g, out, chunk: int = 1 << 18):
    # chunked so the (batch x chunk) gathers stay within a bounded footprint
    for lo in range(0, len(rows), chunk):
        hi = min(lo + chunk, len(rows))
        out[lo:hi] = np.einsum("bk,bk->k", x[:, rows[lo:hi]], g[:, cols[lo:hi]])


def save_snapshot(w: SparseWeights, path) -> None:
    """Write the documented binary snapshot: header (n_in, n_out, nnz), then
    (row, col, weight) triples. Momentum is transient and not stored."""
    header = SNAPSHOT_MAGIC + np.array(
        [w.n_in, w.n_out, w.nnz], dtype="<u8"
    ).tobytes()
    triples = np.empty(w.nnz, dtype=TRIPLE_DTYPE)
    triples["row"] = w.rows
    triples["col"] = w.cols
    triples["weight"] = w.weights
    Path(path).write_bytes(header + triples.tobytes())


def load_snapshot(path) -> SparseWeights:
    """Read a snapshot written by :func:`save_snapshot`. Momentum starts at zero."""
    buf = Path(path).read_bytes()
    if len(buf) < 32 or buf[:8] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a sparse-weights snapshot")
    n_in, n_out, nnz = (int(v) for v in np.frombuffer(buf, "<u8", count=3, offset=8))
    expected = 32 + nnz * TRIPLE_DTYPE.itemsize
    if len(buf) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(buf)}")
    triples = np.frombuffer(buf, TRIPLE_DTYPE, count=nnz, offset=32)
    return SparseWeights(
        n_in, n_out, triples["row"], triples["col"], triples["weight"]
    )
