"""Compressed-sensing measurement ensembles with forward (Y w) and adjoint
(Y^T v) application.

Three kinds are supported:
  * gaussian          -- i.i.d. N(0, 1/s) entries
  * subsampled_dct    -- s distinct columns of the orthonormal DCT-II matrix,
                         scaled by sqrt(n/s), applied via fast transforms
  * sparse_rademacher -- exactly xi nonzeros per row, values +-xi^{-1/2},
                         per-row supports drawn without replacement

Construction is a pure function of (n, s, kind, seed[, xi]).
"""

import numpy as np
import scipy.fft
import scipy.sparse as sp

KINDS = ("gaussian", "subsampled_dct", "sparse_rademacher")


class SensingOperator:
    """Measurement operator Y in R^{n x s}; immutable after build."""

    def __init__(self, n, s, kind, seed, xi=None):
        if not 1 <= s <= n:
            raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
        if kind not in KINDS:
            raise ValueError(f"unknown sensing kind {kind!r}")
        self.n = int(n)
        self.s = int(s)
        self.kind = kind
        self.seed = int(seed)
        self.xi = None
        rng = np.random.default_rng(self.seed)

        if kind == "gaussian":
            self._dense = rng.standard_normal((self.n, self.s)) / np.sqrt(self.s)
        elif kind == "subsampled_dct":
            self._cols = rng.choice(self.n, size=self.s, replace=False)
            self._scale = np.sqrt(self.n / self.s)
            self._dense = None
        else:  # sparse_rademacher
            if xi is None:
                xi = min(8, self.s)
            xi = int(xi)
            if not 1 <= xi <= self.s:
                raise ValueError(f"need 1 <= xi <= s, got xi={xi}, s={self.s}")
            self.xi = xi
            # per-row support without replacement, then per-entry signs
            order = np.argsort(rng.random((self.n, self.s)), axis=1, kind="stable")
            support = order[:, :xi]
            signs = rng.integers(0, 2, size=(self.n, xi)) * 2 - 1
            vals = signs.astype(np.float64) / np.sqrt(xi)
            indptr = np.arange(self.n + 1, dtype=np.int64) * xi
            csr = sp.csr_matrix(
                (vals.ravel(), support.ravel(), indptr), shape=(self.n, self.s))
            csr.sort_indices()
            self._sparse = csr
            self._dense = None

    # -- application ------------------------------------------------------

    def adjoint_apply(self, v):
        """Measurements y = Y^T v of a length-n vector."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {v.shape}")
        if self.kind == "gaussian":
            return self._dense.T @ v
        if self.kind == "subsampled_dct":
            # Y^T v = scale * (D2^T v)[cols]; D2^T is the orthonormal DCT-III
            full = scipy.fft.dct(v, type=3, norm="ortho")
            return self._scale * full[self._cols]
        return self._sparse.T @ v

    def forward_apply(self, w):
        """Y w for a length-s vector (adjoint of adjoint_apply)."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.s,):
            raise ValueError(f"expected vector of length {self.s}, got {w.shape}")
        if self.kind == "gaussian":
            return self._dense @ w
        if self.kind == "subsampled_dct":
            u = np.zeros(self.n)
            u[self._cols] = w
            return self._scale * scipy.fft.dct(u, type=2, norm="ortho")
        return self._sparse @ w

    def adjoint_apply_sparse(self, idx, vals):
        """Y^T v for v supported on idx with values vals; O(|idx| * s) worst
        case, used by solvers that keep sparse iterates."""
        idx = np.asarray(idx, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if idx.size == 0:
            return np.zeros(self.s)
        if self.kind == "gaussian":
            return self._dense[idx, :].T @ vals
        if self.kind == "subsampled_dct":
            # explicit DCT-II entries D2[r, c]
            r = idx[:, None].astype(np.float64)
            c = self._cols[None, :].astype(np.float64)
            block = np.cos(np.pi * r * (2.0 * c + 1.0) / (2.0 * self.n))
            block *= np.where(idx[:, None] == 0, np.sqrt(1.0 / self.n),
                              np.sqrt(2.0 / self.n))
            return self._scale * (block.T @ vals)
        return self._sparse[idx, :].T @ vals

    # -- materialization ----------------------------------------------------

    def to_dense(self):
        """Materialize Y as an (n, s) array."""
        if self.kind == "gaussian":
            return self._dense.copy()
        if self.kind == "subsampled_dct":
            scatter = np.zeros((self.n, self.s))
            scatter[self._cols, np.arange(self.s)] = 1.0
            return self._scale * scipy.fft.dct(scatter, type=2, norm="ortho", axis=0)
        return self._sparse.toarray()

    def column(self, j):
        """Column j of Y (one probe vector)."""
        e = np.zeros(self.s)
        e[j] = 1.0
        return self.forward_apply(e)


def sensing_build(n, s, kind, seed, xi=None):
    """Construct a sensing operator; deterministic given (n, s, kind, seed, xi)."""
    return SensingOperator(n, s, kind, seed, xi=xi)
