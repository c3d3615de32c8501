"""Row-wise recovery of a matrix with few dominant entries per row from s
matrix-vector products: measure F_s = B Y against a shared sensing operator,
then solve one small compressed-sensing problem per row.
"""

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _niht_kernel
from .core import SparseMatrix, operator_norm_2
from .greedy import CsSolution, NihtConfig, niht_solve
from .sensing import sensing_build

_CACHE_MAGIC = b"MRCVMEA1"
_ROW_BLOCK = 512  # fixed row blocking so results never depend on worker count
_USE_KERNEL = True  # compiled row kernel when numba is importable


def default_measurement_count(n, k):
    """Recommended measurement count ceil(2 k log(n/k)) (natural log),
    clamped into [k, n]."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    s = math.ceil(2.0 * k * math.log(n / k)) if k < n else k
    return max(k, min(n, s))


def recovery_error_bound(n, k, C, lam, d):
    """A-priori 2-norm error bound 9 C (n + n^{3/2}/sqrt(k)) lam^{d+1} for
    matrices with |B_ij| < C lam^{d(i,j)} and k = max_i |{j : d(i,j) <= d}|."""
    return 9.0 * C * (n + n ** 1.5 / math.sqrt(k)) * lam ** (d + 1)


@dataclass
class SpamramConfig:
    """Row-recovery parameters.

    s defaults to ceil(2 k log(n/k)) at recovery time.  fresh_probes > 0
    spends that many extra Gaussian matvecs on an error estimate that is
    independent of the recovery measurements.
    """

    k: int
    s: int | None = None
    sensing_kind: str = "gaussian"
    seed: int = 0
    xi: int | None = None
    niht: NihtConfig | None = None
    fresh_probes: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.s is not None and self.s < self.k:
            raise ValueError("need s >= k")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.niht is not None and self.niht.k != self.k:
            raise ValueError("niht.k must match k")


@dataclass
class RecoveryReport:
    """Recovered matrix plus accounting: every row of B_hat has at most k
    nonzeros; matvecs_used counts outer applies only."""

    B_hat: SparseMatrix
    matvecs_used: int
    delta_RE: float
    per_row_residuals: np.ndarray
    per_row_converged: np.ndarray
    s: int
    k: int

    rows_failed: int = field(init=False)

    def __post_init__(self):
        self.rows_failed = int(np.count_nonzero(~self.per_row_converged))


def spamram_recover(op, cfg, from_transpose=False):
    """Recover all rows of B (or columns, with from_transpose=True) using
    exactly s matvecs plus cfg.fresh_probes optional probe matvecs.

    Row solves never abort the recovery: a degenerate row keeps its best
    iterate and is recorded in per_row_residuals / per_row_converged.
    """
    if from_transpose:
        rep = spamram_recover(op, cfg, from_transpose=False)
        return RecoveryReport(rep.B_hat.transpose(), rep.matvecs_used,
                              rep.delta_RE, rep.per_row_residuals,
                              rep.per_row_converged, rep.s, rep.k)

    n = op.n
    k = cfg.k
    s = cfg.s if cfg.s is not None else default_measurement_count(n, k)
    if not k <= s <= n:
        raise ValueError(f"need k <= s <= n, got k={k}, s={s}, n={n}")
    Y = sensing_build(n, s, cfg.sensing_kind, cfg.seed, xi=cfg.xi)
    F = op.apply_block(Y.to_dense())
    niht_cfg = cfg.niht if cfg.niht is not None else NihtConfig(k=k)

    solutions = _solve_all_rows(Y, F, niht_cfg, cfg.workers)

    indptr = np.zeros(n + 1, dtype=np.int64)
    indices, values = [], []
    residuals = np.zeros(n)
    converged = np.zeros(n, dtype=bool)
    for i, sol in enumerate(solutions):
        nz = np.flatnonzero(sol.v_hat)
        indices.append(nz)
        values.append(sol.v_hat[nz])
        indptr[i + 1] = indptr[i] + nz.size
        residuals[i] = sol.residual_norm
        converged[i] = sol.converged
    B_hat = SparseMatrix(n, n, indptr,
                         np.concatenate(indices) if indices else [],
                         np.concatenate(values) if values else [])

    matvecs = s
    if cfg.fresh_probes > 0:
        rng = np.random.default_rng([cfg.seed, 0x5EED])
        X = rng.standard_normal((n, cfg.fresh_probes))
        M = op.apply_block(X)
        matvecs += cfg.fresh_probes
        delta = _relative_norm_ratio(B_hat.matmat(X) - M, M)
    else:
        delta = spamram_error_estimate(B_hat, Y, F)
    return RecoveryReport(B_hat, matvecs, delta, residuals, converged, s, k)


def _solve_all_rows(Y, F, niht_cfg, workers):
    """Solve the n row problems against the shared operator.

    With numba installed this runs a compiled per-row kernel (parallel over
    rows; results are identical for any worker count because rows never
    interact).  Otherwise rows go through a vectorized numpy driver in fixed
    blocks.  Both paths follow the greedy.niht_solve iteration.
    """
    Yd = np.ascontiguousarray(Y.to_dense())
    if _USE_KERNEL and _niht_kernel.HAVE_NUMBA:
        return _solve_rows_compiled(Yd, F, niht_cfg, workers)
    n_rows = F.shape[0]
    blocks = [(lo, min(lo + _ROW_BLOCK, n_rows))
              for lo in range(0, n_rows, _ROW_BLOCK)]

    def solve_block(bounds):
        lo, hi = bounds
        return _niht_solve_block(Yd, F[lo:hi], niht_cfg)

    if workers == 1 or len(blocks) == 1:
        chunks = [solve_block(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(solve_block, blocks))
    return [sol for chunk in chunks for sol in chunk]


def _solve_rows_compiled(Yd, F, cfg, workers):
    """Drive the numba kernel; Gram = (Y^T)^T (Y^T) is built once per call."""
    import numba

    n = Yd.shape[0]
    if not cfg.k <= Yd.shape[1]:
        raise ValueError(f"need k <= s, got k={cfg.k}, s={Yd.shape[1]}")
    Gram = np.ascontiguousarray(Yd @ Yd.T)
    old_threads = numba.get_num_threads()
    numba.set_num_threads(max(1, min(workers, old_threads)))
    try:
        idx, val, nnz, iters, res, conv = _niht_kernel.solve_rows_kernel(
            Yd, Gram, np.ascontiguousarray(F), cfg.k, cfg.max_iters,
            cfg.residual_tol, cfg.stagnation_tol,
            cfg.backtrack_c, cfg.backtrack_shrink)
    finally:
        numba.set_num_threads(old_threads)
    solutions = []
    for r in range(F.shape[0]):
        v = np.zeros(n)
        m = nnz[r]
        v[idx[r, :m]] = val[r, :m]
        solutions.append(CsSolution(v, int(iters[r]), float(res[r]),
                                    bool(conv[r])))
    return solutions


def _topk_rows(W, k):
    """Row-wise hard-threshold index set: k largest magnitudes, ties broken
    toward the lowest index (same rule as hard_threshold).

    argpartition does the heavy lifting; rows with magnitude ties across the
    selection boundary fall back to the stable-sort rule."""
    A = np.abs(W)
    n = A.shape[1]
    if k >= n:
        return np.broadcast_to(np.arange(n), A.shape).copy()
    part = np.argpartition(-A, k - 1, axis=1)[:, :k]
    vals = np.take_along_axis(A, part, axis=1)
    thresh = vals.min(axis=1)
    eq_total = np.count_nonzero(A == thresh[:, None], axis=1)
    eq_kept = np.count_nonzero(vals == thresh[:, None], axis=1)
    tied = np.flatnonzero(eq_total > eq_kept)
    if tied.size:
        part[tied] = np.argsort(-A[tied], axis=1, kind="stable")[:, :k]
    return part


def _support_sets(idx, values, n):
    """Sorted supports of the rows 'values at idx', padded with sentinel n."""
    out = np.where(values != 0.0, idx, n)
    out.sort(axis=1)
    return out


def _gather_rows(Yd, idx):
    """Yd rows at a padded (R, k) index array; sentinel rows read as zero."""
    n = Yd.shape[0]
    safe = np.minimum(idx, n - 1)
    rows = Yd[safe]
    rows[idx == n] = 0.0
    return rows


def _measure(Yd, idx, vals):
    """Y^T v for rows v supported on idx with values vals (padded)."""
    return np.einsum("rk,rks->rs", vals, _gather_rows(Yd, idx))


def _gathered_values(M, idx, n):
    vals = np.take_along_axis(M, np.minimum(idx, n - 1), axis=1)
    vals[idx == n] = 0.0
    return vals


def _niht_solve_block(Yd, F, cfg):
    """Vectorized NIHT over a block of rows; per-row behavior mirrors
    greedy.niht_solve (stepsize, backtracking, stopping, best iterate).

    State arrays stay compacted to the still-active rows, so late iterations
    only pay for the rows that have not converged yet.
    """
    n, s = Yd.shape
    R = F.shape[0]
    k = cfg.k
    if not k <= s:
        raise ValueError(f"need k <= s, got k={k}, s={s}")
    ynorm = np.linalg.norm(F, axis=1)

    solutions = [None] * R
    for i in np.flatnonzero(ynorm == 0.0):
        solutions[i] = CsSolution(np.zeros(n), 0, 0.0, True)

    idx = np.flatnonzero(ynorm > 0.0)   # original row numbers, compacted
    Y_meas = F[idx].copy()
    ynorm_a = ynorm[idx]
    Ra = idx.size
    V = np.zeros((Ra, n))
    SUP = np.full((Ra, k), n, dtype=np.int64)   # sorted, sentinel-padded
    RES = Y_meas.copy()
    best_V = np.zeros((Ra, n))
    best_R = ynorm_a.copy()

    def finish(mask, iteration, converged_mask):
        nonlocal idx, Y_meas, ynorm_a, V, SUP, RES, best_V, best_R
        for pos in np.flatnonzero(mask):
            solutions[idx[pos]] = CsSolution(
                best_V[pos].copy(), iteration, float(best_R[pos]),
                bool(converged_mask[pos]))
        keep = ~mask
        idx, Y_meas, ynorm_a = idx[keep], Y_meas[keep], ynorm_a[keep]
        V, SUP, RES = V[keep], SUP[keep], RES[keep]
        best_V, best_R = best_V[keep], best_R[keep]

    it = 0
    for it in range(1, cfg.max_iters + 1):
        if idx.size == 0:
            break
        G = RES @ Yd.T
        gamma = SUP.copy()
        fresh = SUP[:, 0] == n
        if np.any(fresh):
            gamma[fresh] = np.sort(_topk_rows(G[fresh], k), axis=1)
        gvals = _gathered_values(G, gamma, n)
        denom = np.sum(_measure(Yd, gamma, gvals) ** 2, axis=1)
        degenerate = denom == 0.0
        if np.any(degenerate):
            # degenerate operator row: keep best iterate, converged = False
            finish(degenerate, it, np.zeros(idx.size, dtype=bool))
            if idx.size == 0:
                break
            G, gamma, gvals = G[~degenerate], gamma[~degenerate], gvals[~degenerate]
            denom = denom[~degenerate]
        mu = np.sum(gvals * gvals, axis=1) / denom

        W = V + mu[:, None] * G
        keep_idx = _topk_rows(W, k)
        V_new = np.zeros_like(W)
        np.put_along_axis(V_new, keep_idx,
                          np.take_along_axis(W, keep_idx, axis=1), axis=1)
        new_sup = _support_sets(keep_idx.copy(),
                                np.take_along_axis(V_new, keep_idx, axis=1), n)

        pending = np.flatnonzero(~np.all(new_sup == gamma, axis=1))
        for _ in range(100):
            if pending.size == 0:
                break
            d_on_g = _gathered_values(V_new[pending], gamma[pending], n) \
                - _gathered_values(V[pending], gamma[pending], n)
            d_on_k = np.take_along_axis(V_new[pending] - V[pending],
                                        keep_idx[pending], axis=1)
            dup = (keep_idx[pending][:, :, None]
                   == gamma[pending][:, None, :]).any(axis=2)
            d_on_k[dup] = 0.0
            dnorm2 = np.sum(d_on_g ** 2, axis=1) + np.sum(d_on_k ** 2, axis=1)
            phi_d = _measure(Yd, gamma[pending], d_on_g) \
                + _measure(Yd, keep_idx[pending], d_on_k)
            phinorm2 = np.sum(phi_d ** 2, axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                omega = (1.0 - cfg.backtrack_c) * dnorm2 / phinorm2
            reject = (dnorm2 > 0.0) & (phinorm2 > 0.0) & (mu[pending] > omega)
            pending = pending[reject]
            if pending.size == 0:
                break
            mu[pending] /= cfg.backtrack_shrink
            W_p = V[pending] + mu[pending, None] * G[pending]
            keep_p = _topk_rows(W_p, k)
            Vp = np.zeros_like(W_p)
            np.put_along_axis(Vp, keep_p,
                              np.take_along_axis(W_p, keep_p, axis=1), axis=1)
            V_new[pending] = Vp
            keep_idx[pending] = keep_p
            new_sup[pending] = _support_sets(
                keep_p.copy(), np.take_along_axis(Vp, keep_p, axis=1), n)
            pending = pending[~np.all(new_sup[pending] == gamma[pending], axis=1)]

        assert np.all(np.count_nonzero(V_new, axis=1) <= k)
        vals_new = _gathered_values(V_new, new_sup, n)
        RES = Y_meas - _measure(Yd, new_sup, vals_new)
        rnorm = np.linalg.norm(RES, axis=1)
        improved = rnorm < best_R
        best_R[improved] = rnorm[improved]
        best_V[improved] = V_new[improved]
        step = np.linalg.norm(V_new - V, axis=1)
        V, SUP = V_new, new_sup
        done = (rnorm <= cfg.residual_tol * ynorm_a) | \
            (step <= cfg.stagnation_tol * np.linalg.norm(V_new, axis=1))
        if np.any(done):
            finish(done, it, done)

    if idx.size:
        finish(np.ones(idx.size, dtype=bool), it, np.zeros(idx.size, dtype=bool))
    return solutions


def solve_rows(Y, F, rows, k, niht=None):
    """Re-solve selected rows from stored measurements; returns
    {row: CsSolution}.  Useful with save_measurements/load_measurements."""
    cfg = niht if niht is not None else NihtConfig(k=k)
    return {int(i): niht_solve(Y, F[int(i)], cfg) for i in rows}


def _relative_norm_ratio(E, M):
    mode = "exact" if M.shape[0] * M.shape[1] <= 4096 ** 2 else "power_iteration"
    den = operator_norm_2(M, mode=mode)
    if den == 0.0:
        return 0.0
    return operator_norm_2(E, mode=mode) / den


def spamram_error_estimate(B_hat, Y, F):
    """Relative error of the recovery quantified through the measurements:
    ||B_hat Y - F||_2 / ||F||_2 (0 when F vanishes)."""
    F = np.asarray(F, dtype=np.float64)
    approx = B_hat.matmat(Y.to_dense())
    return _relative_norm_ratio(approx - F, F)


# ---------------------------------------------------------------------------
# measurement persistence: flat binary of float64, row-major, small header
# ---------------------------------------------------------------------------

def save_measurements(path, F, seed, kind, xi=None):
    """Persist measurements so individual rows can be re-solved later."""
    F = np.ascontiguousarray(F, dtype=np.float64)
    n, s = F.shape
    kind_bytes = kind.encode("ascii")
    if len(kind_bytes) > 16:
        raise ValueError("kind name too long")
    header = _CACHE_MAGIC + struct.pack(
        "<QQq16sQ", n, s, seed, kind_bytes.ljust(16, b"\0"), xi or 0)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(F.tobytes(order="C"))


def load_measurements(path):
    """Read measurements saved by save_measurements; returns (F, meta)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _CACHE_MAGIC:
            raise ValueError(f"{path}: not a measurement cache file")
        n, s, seed, kind_raw, xi = struct.unpack("<QQq16sQ", fh.read(48))
        data = np.frombuffer(fh.read(), dtype=np.float64)
    if data.size != n * s:
        raise ValueError(f"{path}: expected {n * s} values, found {data.size}")
    meta = {"n": int(n), "s": int(s), "seed": int(seed),
            "kind": kind_raw.rstrip(b"\0").decode("ascii"),
            "xi": int(xi) or None}
    return data.reshape(int(n), int(s)).copy(), meta
