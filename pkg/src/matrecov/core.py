"""Matrix and operator substrate: sparse/banded storage, black-box linear
operators with matvec accounting, spectral norms, and MatrixMarket I/O.

All indexing is 0-based internally; MatrixMarket's 1-based indices are
converted at the file boundary.
"""

import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

DENSE_NORM_LIMIT = 4096  # largest dimension handled by dense SVD oracles


class MatrixMarketError(ValueError):
    """Malformed MatrixMarket input; carries the offending 1-based line number."""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# storage types
# ---------------------------------------------------------------------------

class SparseMatrix:
    """Row-compressed sparse matrix (CSR): per-row strictly increasing columns.

    Heavy kernels (matvec, matmul) are delegated to scipy.sparse behind this
    interface; the arrays themselves are owned by the instance.
    """

    def __init__(self, n_rows, n_cols, indptr, indices, data, check=True):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.asarray(data, dtype=np.float64)
        self._scipy = None
        if check:
            self._validate()

    def _validate(self):
        if self.n_rows <= 0 or self.n_cols <= 0:
            raise ValueError("matrix dimensions must be positive")
        if self.indptr.shape != (self.n_rows + 1,):
            raise ValueError("indptr must have length n_rows + 1")
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ValueError("indptr endpoints inconsistent with index count")
        if len(self.indices) != len(self.data):
            raise ValueError("indices and data length mismatch")
        if len(self.indices) and (
            self.indices.min() < 0 or self.indices.max() >= self.n_cols
        ):
            raise ValueError("column index out of range")
        for i in range(self.n_rows):
            row = self.indices[self.indptr[i]:self.indptr[i + 1]]
            if row.size > 1 and np.any(np.diff(row) <= 0):
                raise ValueError(f"row {i}: column indices not strictly increasing")

    @property
    def nnz(self):
        return len(self.data)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals):
        """Build from triplets; duplicate entries are summed."""
        m = sp.coo_matrix(
            (np.asarray(vals, dtype=np.float64), (rows, cols)),
            shape=(n_rows, n_cols),
        ).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls(n_rows, n_cols, m.indptr, m.indices, m.data, check=False)

    @classmethod
    def from_dense(cls, M):
        M = np.asarray(M, dtype=np.float64)
        m = sp.csr_matrix(M)
        m.sort_indices()
        return cls(M.shape[0], M.shape[1], m.indptr, m.indices, m.data, check=False)

    @classmethod
    def from_scipy(cls, S):
        m = sp.csr_matrix(S)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data, check=False)

    def to_scipy(self):
        if self._scipy is None:
            self._scipy = sp.csr_matrix(
                (self.data, self.indices, self.indptr),
                shape=(self.n_rows, self.n_cols),
            )
        return self._scipy

    def to_dense(self):
        return self.to_scipy().toarray()

    def matvec(self, x):
        return self.to_scipy() @ np.asarray(x, dtype=np.float64)

    def matmat(self, X):
        return self.to_scipy() @ np.asarray(X, dtype=np.float64)

    def transpose(self):
        return SparseMatrix.from_scipy(self.to_scipy().T.tocsr())

    def scaled(self, alpha):
        return SparseMatrix(
            self.n_rows, self.n_cols, self.indptr, self.indices,
            self.data * float(alpha), check=False,
        )

    def row(self, i):
        """Return (column indices, values) of row i."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]


class BandedMatrix:
    """Band storage of a matrix with upper bandwidth k1 and lower bandwidth k2.

    Entry (i, j) is stored iff -k2 <= j - i <= k1; everything else is exactly
    zero.  Diagonals are stored dia-style: data[m, j] holds entry
    (j - offsets[m], j) with offsets = (k1, k1-1, ..., -k2).
    """

    def __init__(self, n, k1, k2, data=None):
        if n <= 0:
            raise ValueError("n must be positive")
        if k1 < 0 or k2 < 0:
            raise ValueError("bandwidths must be nonnegative")
        if k1 >= n or k2 >= n:
            raise ValueError("bandwidth must be smaller than the dimension")
        self.n = int(n)
        self.k1 = int(k1)
        self.k2 = int(k2)
        self.offsets = np.arange(k1, -k2 - 1, -1, dtype=np.int64)
        if data is None:
            data = np.zeros((k1 + k2 + 1, n))
        data = np.asarray(data, dtype=np.float64)
        if data.shape != (k1 + k2 + 1, n):
            raise ValueError("band data must have shape (1 + k1 + k2, n)")
        self.data = data
        self._csr = None

    @property
    def bandwidths(self):
        return (self.k1, self.k2)

    def get(self, i, j):
        d = j - i
        if -self.k2 <= d <= self.k1:
            return self.data[self.k1 - d, j]
        return 0.0

    def set(self, i, j, value):
        d = j - i
        if not (-self.k2 <= d <= self.k1):
            raise ValueError(f"entry ({i},{j}) outside the band")
        self.data[self.k1 - d, j] = value
        self._csr = None

    @classmethod
    def from_dense(cls, M, k1, k2, require_banded=True):
        M = np.asarray(M, dtype=np.float64)
        n = M.shape[0]
        if M.shape != (n, n):
            raise ValueError("dense input must be square")
        out = cls(n, k1, k2)
        for m, off in enumerate(out.offsets):
            d = np.diagonal(M, offset=off)
            if off >= 0:
                out.data[m, off:off + len(d)] = d
            else:
                out.data[m, :len(d)] = d
        if require_banded and not np.array_equal(out.to_dense(), M):
            raise ValueError("dense input has entries outside the stated band")
        return out

    def to_scipy(self):
        if self._csr is None:
            dia = sp.dia_matrix((self.data, self.offsets), shape=(self.n, self.n))
            self._csr = dia.tocsr()
        return self._csr

    def to_dense(self):
        return self.to_scipy().toarray()

    def to_sparse(self):
        return SparseMatrix.from_scipy(self.to_scipy())

    def matvec(self, x):
        return self.to_scipy() @ np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class DecayProfile:
    """Exponential off-diagonal decay envelope |B_ij| <= C * lambda^{|i-j|},
    with separate rates above (lambda_upper) and below (lambda_lower) the
    diagonal."""

    C: float
    lambda_upper: float
    lambda_lower: float

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        for lam in (self.lambda_upper, self.lambda_lower):
            if not 0.0 < lam < 1.0:
                raise ValueError("decay rates must lie in (0, 1)")

    def envelope(self, n):
        """Dense n-by-n matrix of entrywise bounds."""
        d = np.subtract.outer(np.arange(n), np.arange(n))  # i - j
        up = self.C * self.lambda_upper ** np.maximum(-d, 0)
        lo = self.C * self.lambda_lower ** np.maximum(d, 0)
        return np.where(d < 0, up, lo)


def max_decay_violation(M, profile):
    """Largest ratio |M_ij| / envelope_ij; <= 1 means the profile holds."""
    M = np.asarray(M)
    return float(np.max(np.abs(M) / profile.envelope(M.shape[0])))


def max_distance_decay_violation(M, C, lam, dist):
    """Largest ratio |M_ij| / (C * lam^{d(i,j)}) for a caller-provided distance
    table; d = inf marks entries that must be exactly zero."""
    M = np.asarray(M, dtype=np.float64)
    dist = np.asarray(dist, dtype=np.float64)
    bound = np.where(np.isinf(dist), 0.0, C * lam ** np.where(np.isinf(dist), 0, dist))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(M) / bound
    ratio = np.where((bound == 0) & (np.abs(M) == 0), 0.0, ratio)
    return float(np.max(ratio))


# ---------------------------------------------------------------------------
# black-box operator
# ---------------------------------------------------------------------------

class _AtomicCounter:
    def __init__(self):
        self._value = 0
        self._lock = threading.Lock()

    def add(self, k):
        with self._lock:
            self._value += k

    @property
    def value(self):
        with self._lock:
            return self._value


class LinearOperator:
    """Square black-box operator x -> Bx; the only access to B.

    Every apply increments matvec_count by 1 (by s for a block of s columns);
    the counter is safe to bump from concurrent workers.
    """

    def __init__(self, n, apply_fn, symmetric=False, explicit=None):
        if n <= 0:
            raise ValueError("operator dimension must be positive")
        self.n = int(n)
        self._apply = apply_fn
        self.symmetric_hint = bool(symmetric)
        self.explicit = explicit  # scipy.sparse matrix when B is available
        self._count = _AtomicCounter()

    @property
    def matvec_count(self):
        return self._count.value

    def reset_count(self):
        self._count = _AtomicCounter()

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {x.shape}")
        self._count.add(1)
        return np.asarray(self._apply(x), dtype=np.float64)

    def apply_block(self, X):
        """Apply to the s columns of X; costs exactly s matvecs."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise ValueError(f"expected block of shape ({self.n}, s)")
        self._count.add(X.shape[1])
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            out[:, j] = self._apply(X[:, j])
        return out

    @classmethod
    def from_dense(cls, M, symmetric=None):
        M = np.asarray(M, dtype=np.float64)
        if symmetric is None:
            symmetric = np.array_equal(M, M.T)
        return cls(M.shape[0], lambda x: M @ x, symmetric=symmetric,
                   explicit=sp.csr_matrix(M))

    @classmethod
    def from_sparse(cls, M, symmetric=None):
        """M may be a SparseMatrix, BandedMatrix or scipy sparse matrix."""
        if isinstance(M, (SparseMatrix, BandedMatrix)):
            S = M.to_scipy()
        else:
            S = sp.csr_matrix(M)
        if S.shape[0] != S.shape[1]:
            raise ValueError("operator requires a square matrix")
        if symmetric is None:
            symmetric = (S != S.T).nnz == 0
        return cls(S.shape[0], lambda x: S @ x, symmetric=symmetric, explicit=S)


# ---------------------------------------------------------------------------
# norms and scaling
# ---------------------------------------------------------------------------

def _as_dense_or_scipy(M):
    if isinstance(M, (SparseMatrix, BandedMatrix)):
        return M.to_scipy()
    if sp.issparse(M):
        return M
    return np.asarray(M, dtype=np.float64)

def norm_2_power(M, tol=1e-6, max_iters=500, seed=0):
    """Power iteration on M^T M; returns (estimate, converged flag)."""
    A = _as_dense_or_scipy(M)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iters):
        w = A @ v
        z = A.T @ w
        znorm = np.linalg.norm(z)
        if znorm == 0.0:
            return 0.0, True
        sigma_new = np.sqrt(znorm)  # ||A^T A v||^(1/2) with unit v
        v = z / znorm
        if abs(sigma_new - sigma) <= tol * max(sigma_new, 1e-300):
            return float(sigma_new), True
        sigma = sigma_new
    return float(sigma), False


def operator_norm_2(M, mode="exact"):
    """Spectral norm of a dense/sparse/banded matrix.

    mode="exact" uses a dense SVD and is limited to dimensions <= 4096;
    mode="power_iteration" runs to tolerance 1e-6 with at most 500 iterations
    and returns its best iterate.
    """
    A = _as_dense_or_scipy(M)
    if mode == "exact":
        if min(A.shape) > DENSE_NORM_LIMIT or \
                A.shape[0] * A.shape[1] > DENSE_NORM_LIMIT ** 2:
            raise ValueError(
                f"exact mode limited to dimension {DENSE_NORM_LIMIT}; "
                "use power_iteration"
            )
        dense = A.toarray() if sp.issparse(A) else A
        if dense.size == 0:
            return 0.0
        return float(np.linalg.svd(dense, compute_uv=False)[0])
    if mode == "power_iteration":
        return norm_2_power(A)[0]
    raise ValueError(f"unknown mode {mode!r}")


def scale_to_norm(M, target):
    """Rescale M so that its 2-norm equals target (to 1e-6 relative)."""
    if target <= 0:
        raise ValueError("target norm must be positive")
    mode = "exact" if max(M.shape) <= DENSE_NORM_LIMIT else "power_iteration"
    current = operator_norm_2(M, mode=mode)
    if current == 0.0:
        raise ValueError("cannot rescale the zero matrix")
    alpha = target / current
    if isinstance(M, SparseMatrix):
        return M.scaled(alpha)
    if isinstance(M, BandedMatrix):
        return BandedMatrix(M.n, M.k1, M.k2, M.data * alpha)
    if sp.issparse(M):
        return M * alpha
    return np.asarray(M, dtype=np.float64) * alpha


# ---------------------------------------------------------------------------
# MatrixMarket coordinate I/O
# ---------------------------------------------------------------------------

def matrix_market_read(path):
    """Read a MatrixMarket coordinate real {general|symmetric} file.

    Symmetric storage is expanded to general on read; 1-based file indices
    are converted to 0-based.  Raises MatrixMarketError with a line number
    on malformed input.
    """
    with open(path, "r") as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)

    header = lines[0].strip().split()
    if len(header) != 5 or header[0] != "%%MatrixMarket":
        raise MatrixMarketError("missing %%MatrixMarket header", 1)
    _, obj, fmt, field, symmetry = (t.lower() for t in header)
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format '{obj} {fmt}'", 1)
    if field != "real":
        raise MatrixMarketError(f"unsupported field '{field}' (real only)", 1)
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(
            f"unsupported symmetry '{symmetry}' (general or symmetric)", 1)

    lineno = 1
    size = None
    for lineno in range(2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise MatrixMarketError("size line must have 3 fields", lineno)
        try:
            n_rows, n_cols, nnz = (int(p) for p in parts)
        except ValueError:
            raise MatrixMarketError("size line must be integers", lineno) from None
        size = (n_rows, n_cols, nnz)
        break
    if size is None:
        raise MatrixMarketError("missing size line", len(lines))
    n_rows, n_cols, nnz = size
    if n_rows <= 0 or n_cols <= 0 or nnz < 0:
        raise MatrixMarketError("invalid dimensions on size line", lineno)

    rows, cols, vals = [], [], []
    seen = 0
    for lineno in range(lineno + 1, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise MatrixMarketError("entry line must have 3 fields", lineno)
        try:
            i = int(parts[0])
            j = int(parts[1])
            v = float(parts[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry '{text}'", lineno) from None
        if not (1 <= i <= n_rows) or not (1 <= j <= n_cols):
            raise MatrixMarketError(
                f"index ({i},{j}) out of range for {n_rows}x{n_cols}", lineno)
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
        if symmetry == "symmetric" and i != j:
            rows.append(j - 1)
            cols.append(i - 1)
            vals.append(v)
        seen += 1
    if seen != nnz:
        raise MatrixMarketError(
            f"expected {nnz} entries, found {seen}", len(lines))
    return SparseMatrix.from_coo(n_rows, n_cols, rows, cols, vals)


def matrix_market_write(path, M, comment=None):
    """Write a SparseMatrix as MatrixMarket coordinate real general."""
    if not isinstance(M, SparseMatrix):
        M = SparseMatrix.from_scipy(_as_dense_or_scipy(M))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{M.n_rows} {M.n_cols} {M.nnz}\n")
        coo = M.to_scipy().tocoo()
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
