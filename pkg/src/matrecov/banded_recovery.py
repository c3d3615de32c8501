"""Banded-matrix recovery from deterministic periodic-identity probes.

The probe set stacks s x s identity blocks, so probe column j hits exactly
the rows congruent to j mod s.  Applying B to the s probes folds each row of
B into s aliased sums; reconstruction assigns every sum to the alias nearest
the diagonal (exact for banded B with s = 1 + k1 + k2, and accurate to the
off-diagonal decay otherwise).
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import BandedMatrix, operator_norm_2


def probing_matrix(n, s):
    """The n x s probe block: column j indicates rows r with r = j (mod s)."""
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    out = np.zeros((n, s))
    rows = np.arange(n)
    out[rows, rows % s] = 1.0
    return out


def probe_apply(op, s):
    """B applied to all s probe columns; costs exactly s matvecs."""
    return op.apply_block(probing_matrix(op.n, s))


# ---------------------------------------------------------------------------
# alias shifts (0-based rows/columns; probe column j in [0, s))
# ---------------------------------------------------------------------------

def alias_shift_banded(i, j, s, k1, k2, n):
    """The unique integer t with -k2 <= j + s*t - i <= k1 and 0 <= j + s*t < n,
    or None when no alias lands inside the band and the index range."""
    if s != 1 + k1 + k2:
        raise ValueError("banded aliasing requires s = 1 + k1 + k2")
    t_min = math.ceil((i - k2 - j) / s)
    t_max = math.floor((i + k1 - j) / s)
    if t_min > t_max:
        return None
    t = t_max  # window width s-1 admits at most one integer
    c = j + s * t
    if not 0 <= c < n:
        return None
    return t


def _feasible_range(j, s, n):
    return math.ceil(-j / s), math.floor((n - 1 - j) / s)


def alias_shift_symmetric(i, j, s, n):
    """The valid t minimizing |j + s*t - i|; unique because s is odd."""
    if s % 2 == 0:
        raise ValueError("symmetric aliasing requires odd s")
    t_lo, t_hi = _feasible_range(j, s, n)
    t = math.floor((i - j) / s + 0.5)
    return min(max(t, t_lo), t_hi)


def alias_shift_asymmetric(i, j, s, lambda1, lambda2, n):
    """Decay-aware alias shift: minimizes the distance of j + s*t to a target
    displaced from the diagonal toward the slow-decay side.

    lambda1 is the decay rate above the diagonal, lambda2 below.  Coincides
    with alias_shift_symmetric when lambda1 == lambda2.  Ties break toward
    smaller |t|, then smaller t.
    """
    for lam in (lambda1, lambda2):
        if not 0.0 < lam < 1.0:
            raise ValueError("decay rates must lie in (0, 1)")
    l1 = math.log(1.0 / lambda1)
    l2 = math.log(1.0 / lambda2)
    target = i + 0.5 * (s - 1) * (l2 - l1) / (l1 + l2)
    t_lo, t_hi = _feasible_range(j, s, n)
    base = math.floor((target - j) / s)
    candidates = {min(max(t, t_lo), t_hi) for t in (base, base + 1)}
    return min(candidates,
               key=lambda t: (abs(j + s * t - target), abs(t), t))


# ---------------------------------------------------------------------------
# recovery
# ---------------------------------------------------------------------------

class BandSpec:
    """Reconstruction window: how many matvecs to spend and where to place
    each aliased sum.

    modes:
      exact_banded(k1, k2)    s = 1 + k1 + k2, exact for (k1, k2)-banded B
      symmetric_decay(s0)     s = 2*s0 + 1, output s0-banded
      asymmetric_decay(...)   s = b1 + b2 + 1 with b1 = floor(c / log(1/l1)),
                              b2 = floor(c / log(1/l2))
    """

    def __init__(self, mode, upper, lower, adjusted=False,
                 lambda1=None, lambda2=None):
        if upper < 0 or lower < 0:
            raise ValueError("bandwidths must be nonnegative")
        self.mode = mode
        self.upper = int(upper)
        self.lower = int(lower)
        self.adjusted = bool(adjusted)
        self.lambda1 = lambda1
        self.lambda2 = lambda2

    @property
    def s(self):
        return 1 + self.upper + self.lower

    @classmethod
    def exact_banded(cls, k1, k2):
        return cls("exact_banded", k1, k2)

    @classmethod
    def symmetric_decay(cls, s0):
        if s0 < 0:
            raise ValueError("s0 must be nonnegative")
        return cls("symmetric_decay", s0, s0)

    @classmethod
    def symmetric_from_block_size(cls, s):
        """Symmetric-decay spec from a requested matvec count; even s is
        rounded up to the next odd value and flagged."""
        if s < 1:
            raise ValueError("s must be positive")
        adjusted = s % 2 == 0
        if adjusted:
            warnings.warn(f"even block size {s} rounded up to {s + 1}")
            s += 1
        spec = cls("symmetric_decay", (s - 1) // 2, (s - 1) // 2,
                   adjusted=adjusted)
        return spec

    @classmethod
    def asymmetric_decay(cls, lambda1, lambda2, c):
        """Bandwidths from the decay rates and an accuracy constant c > 0."""
        for lam in (lambda1, lambda2):
            if not 0.0 < lam < 1.0:
                raise ValueError("decay rates must lie in (0, 1)")
        if c <= 0:
            raise ValueError("c must be positive")
        b1 = math.floor(c / math.log(1.0 / lambda1))
        b2 = math.floor(c / math.log(1.0 / lambda2))
        return cls("asymmetric_decay", b1, b2, lambda1=lambda1, lambda2=lambda2)

    @classmethod
    def asymmetric_bandwidths(cls, b1, b2, lambda1=None, lambda2=None):
        return cls("asymmetric_decay", b1, b2, lambda1=lambda1, lambda2=lambda2)

    def transposed(self):
        return BandSpec(self.mode, self.lower, self.upper,
                        adjusted=self.adjusted,
                        lambda1=self.lambda2, lambda2=self.lambda1)


@dataclass
class BandedRecoveryReport:
    matvecs_used: int
    s: int
    mode: str
    upper: int
    lower: int
    block_size_adjusted: bool = False


def _reconstruct(Bs, upper, lower):
    """Scatter probe sums into the band: entry (i, c) with -lower <= c-i <=
    upper takes the probe column c mod s.  Each in-band entry is hit by
    exactly one probe entry."""
    n, s = Bs.shape
    out = BandedMatrix(n, upper, lower)
    for d in range(-lower, upper + 1):
        cols = np.arange(max(0, d), n + min(0, d))
        out.data[upper - d, cols] = Bs[cols - d, cols % s]
    return out


def bamram_recover(op, spec, from_transpose=False):
    """Recover a banded approximation of B from s = spec.s matvecs.

    exact_banded mode returns B exactly when B is (k1, k2)-banded; the decay
    modes return the (upper, lower)-banded matrix whose in-band entries are
    the aliased probe sums.  With from_transpose=True the operator is treated
    as x -> B^T x and columns are recovered from the transpose product.

    Returns (BandedMatrix, BandedRecoveryReport).
    """
    if from_transpose:
        bh_t, rep = bamram_recover(op, spec.transposed(), from_transpose=False)
        out = _transpose_banded(bh_t)
        return out, BandedRecoveryReport(rep.matvecs_used, rep.s, spec.mode,
                                         spec.upper, spec.lower,
                                         rep.block_size_adjusted)
    s = spec.s
    if s > op.n:
        raise ValueError(f"block size s={s} exceeds dimension n={op.n}")
    Bs = probe_apply(op, s)
    out = _reconstruct(Bs, spec.upper, spec.lower)
    report = BandedRecoveryReport(s, s, spec.mode, spec.upper, spec.lower,
                                  spec.adjusted)
    return out, report


def _transpose_banded(B):
    out = BandedMatrix(B.n, B.k2, B.k1)
    for d in range(-B.k2, B.k1 + 1):
        cols = np.arange(max(0, d), B.n + min(0, d))
        # old entry (c-d, c) on diagonal d becomes (c, c-d) on diagonal -d
        out.data[B.k2 + d, cols - d] = B.data[B.k1 - d, cols]
    return out


def bamram_error_estimate(B_hat, op, n_probes=5, seed=0):
    """A-posteriori relative error from a few fresh Gaussian probes:
    ||B_hat X - mvp(X)||_2 / ||mvp(X)||_2, costing n_probes extra matvecs."""
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((op.n, n_probes))
    M = op.apply_block(X)
    approx = B_hat.to_scipy() @ X
    den = operator_norm_2(M)
    num = operator_norm_2(approx - M)
    if den == 0.0:
        if num == 0.0:
            return 0.0
        warnings.warn("probe product vanished but approximation did not")
        return math.inf
    return num / den
