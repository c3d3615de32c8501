"""Recovery of Kronecker sums A1 (+) A2 = A1 x I + I x A2 of banded factors,
and of exp(A1 (+) A2) = exp(A1) x exp(A2), from matvecs with the big n^2
operator.

The perfect shuffle aligns the A1 leg with a banded block: P (A1 x I) P^T =
I x A1, so two probe families (one shuffled) expose both factors through
their top-left n x n blocks.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .banded_recovery import _reconstruct
from .core import BandedMatrix


class ShufflePermutation:
    """Perfect shuffle on length-n^2 vectors: P vec(M) = vec(M^T).

    For the square case P is symmetric and involutive, so P = P^T = P^{-1};
    it is kept as an index permutation, never materialized densely.
    """

    def __init__(self, n):
        if n <= 0:
            raise ValueError("n must be positive")
        self.n = int(n)
        a = np.arange(n * n, dtype=np.int64)
        self.perm = (a // n) + (a % n) * n

    def apply(self, v):
        return np.asarray(v)[self.perm]

    def apply_rows(self, X):
        return np.asarray(X)[self.perm, :]


def _block_dimension(op):
    n = math.isqrt(op.n)
    if n * n != op.n:
        raise ValueError(f"operator dimension {op.n} is not a perfect square")
    return n


def _top_block_probe(op, n, s, shuffle=None):
    """Apply op to [I_n^(s); 0] (optionally shuffled) and return the top
    n x s block (shuffled back when needed).  s may exceed n, in which case
    the trailing probe columns are zero but still count toward the budget."""
    probes = np.zeros((op.n, s))
    rows = np.arange(n)
    probes[rows, rows % s] = 1.0
    if shuffle is not None:
        probes = shuffle.apply_rows(probes)
    W = op.apply_block(probes)
    if shuffle is not None:
        W = shuffle.apply_rows(W)
    return W[:n, :]


@dataclass
class KronSumRecovery:
    """Exact reconstruction of A1 (+) A2 from 2 + 2k1 + 2k2 matvecs.

    factor1_shifted = A1 + A2[0,0] I and factor2_shifted = A2 + A1[0,0] I;
    the scalar c = A1[0,0] + A2[0,0] resolves every diagonal entry via
    diag_grid[i, j] = A1[i,i] + A2[j,j].
    """

    factor1_shifted: BandedMatrix
    factor2_shifted: BandedMatrix
    diag_grid: np.ndarray
    matvecs_used: int
    n: int

    def materialize(self):
        """The full n^2 x n^2 Kronecker sum as a scipy CSR matrix."""
        n = self.n
        eye = sp.identity(n, format="csr")
        c = self.factor2_shifted.get(0, 0)
        out = sp.kron(self.factor1_shifted.to_scipy(), eye, format="csr") \
            + sp.kron(eye, self.factor2_shifted.to_scipy(), format="csr") \
            - c * sp.identity(n * n, format="csr")
        return out


def kron_sum_recover(op, k1, k2):
    """Recover A1 (+) A2 for symmetric-bandwidth-(k1, k2) factors exactly.

    The top-left block A1[0,0] I + A2 is k2-banded, so the unshuffled probe
    family recovers it exactly; the shuffled family does the same for
    A2[0,0] I + A1.  Diagonal entries follow from the shift-cancelling
    identity on the two recovered diagonals.
    """
    n = _block_dimension(op)
    if k1 >= n or k2 >= n:
        raise ValueError("bandwidth too large for the block dimension")
    s1, s2 = 1 + 2 * k1, 1 + 2 * k2
    shuffle = ShufflePermutation(n)
    top2 = _top_block_probe(op, n, s2)                  # (A1_00 I + A2) I_n^(s2)
    top1 = _top_block_probe(op, n, s1, shuffle=shuffle)  # (A2_00 I + A1) I_n^(s1)
    M2 = _reconstruct(top2, k2, k2)
    M1 = _reconstruct(top1, k1, k1)
    c = M2.get(0, 0)
    d1 = M1.to_scipy().diagonal()
    d2 = M2.to_scipy().diagonal()
    diag_grid = d1[:, None] + d2[None, :] - c
    return KronSumRecovery(M1, M2, diag_grid, s1 + s2, n)


@dataclass
class KronExpFactors:
    """Banded factors whose Kronecker product approximates exp(A1 (+) A2).

    The two recovered blocks are only determined up to reciprocal scalars;
    the right factor is normalized by its (0,0) entry, which pins the
    product (left x right) to exp(A1) x exp(A2).
    """

    left: BandedMatrix
    right: BandedMatrix
    matvecs_used: int
    n: int

    def matvec(self, v):
        """(left x right) v via the two tensor legs."""
        X = np.asarray(v, dtype=np.float64).reshape(self.n, self.n, order="F")
        out = self.right.to_scipy() @ X @ self.left.to_dense().T
        return out.flatten(order="F")

    def materialize(self):
        return np.kron(self.left.to_dense(), self.right.to_dense())


def kron_exp_recover(op, s1, s2):
    """Approximate exp(A1 (+) A2) = exp(A1) x exp(A2) in factored form from
    s1 + s2 matvecs with the exponential of the Kronecker sum.

    s1 and s2 are odd block sizes large enough to capture the dominant
    entries of exp(A1) and exp(A2) near their diagonals.
    """
    n = _block_dimension(op)
    for s in (s1, s2):
        if s % 2 == 0:
            raise ValueError("block sizes must be odd")
    shuffle = ShufflePermutation(n)
    b1 = min((s1 - 1) // 2, n - 1)  # block sizes past 2n-1 add zero probes
    b2 = min((s2 - 1) // 2, n - 1)
    top2 = _top_block_probe(op, n, s2)                   # ~ E1[0,0] * E2
    top1 = _top_block_probe(op, n, s1, shuffle=shuffle)  # ~ E2[0,0] * E1
    B2 = _reconstruct(top2, b2, b2)
    B1 = _reconstruct(top1, b1, b1)
    pivot = B2.get(0, 0)
    if pivot == 0.0:
        raise ValueError("degenerate recovery: vanishing (0,0) entry")
    right = BandedMatrix(n, B2.k1, B2.k2, B2.data / pivot)
    return KronExpFactors(B1, right, s1 + s2, n)
