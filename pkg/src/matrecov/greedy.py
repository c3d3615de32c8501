"""Normalized iterative hard thresholding (NIHT) for the l0 recovery problem

    min ||z||_0  subject to  y = Y^T z,

behind a small pluggable solver interface.  The stepsize is the optimal
restricted step ||g_G||^2 / ||Y^T g_G||^2 with backtracking when the support
changes; see Blumensath & Davies for the scheme the parameters follow.
"""

from dataclasses import dataclass, field

import numpy as np


def hard_threshold(v, k):
    """Keep a set of k largest-magnitude entries of v, zeroing the rest.

    Ties are broken toward the lowest index, making the operator
    deterministic.  Retained values are unchanged.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if k == n:
        return v.copy()
    keep = np.argsort(-np.abs(v), kind="stable")[:k]
    out = np.zeros_like(v)
    out[keep] = v[keep]
    return out


def best_k_term(v, k):
    """Best k-sparse approximation of v; same map as hard_threshold, exposed
    separately for analysis code."""
    return hard_threshold(v, k)


def compression_error(v, k):
    """eps_k = ||v - v^k||_2 + ||v - v^k||_1 / sqrt(k), the tail size entering
    the recovery guarantee."""
    tail = np.asarray(v, dtype=np.float64) - best_k_term(v, k)
    return float(np.linalg.norm(tail) + np.linalg.norm(tail, 1) / np.sqrt(k))


@dataclass
class NihtConfig:
    """Solver parameters; defaults follow standard practice where the
    guarantee's stopping rule is uncomputable."""

    k: int
    max_iters: int = 100
    residual_tol: float = 1e-10      # relative to ||y||
    stagnation_tol: float = 1e-14    # relative to ||v||
    backtrack_shrink: float = 2.0
    backtrack_c: float = 0.01

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.residual_tol < 0 or self.stagnation_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.backtrack_shrink <= 1.0:
            raise ValueError("backtrack_shrink must exceed 1")
        if not 0.0 < self.backtrack_c < 1.0:
            raise ValueError("backtrack_c must lie in (0, 1)")


@dataclass
class CsSolution:
    """k-sparse solver output with the best residual seen."""

    v_hat: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool

    sparsity: int = field(init=False)

    def __post_init__(self):
        self.sparsity = int(np.count_nonzero(self.v_hat))


def _adjoint_sparse(Y, v, support):
    return Y.adjoint_apply_sparse(support, v[support])


def niht_solve(Y, y, cfg):
    """Recover a k-sparse vector from measurements y = Y^T v.

    Returns a CsSolution whose iterate attains the minimum residual over all
    iterates visited.  A vanishing restricted gradient with nonzero residual
    signals a degenerate operator; the current best iterate is returned with
    converged=False.
    """
    y = np.asarray(y, dtype=np.float64)
    n, s = Y.n, Y.s
    if y.shape != (s,):
        raise ValueError(f"measurement vector must have length {s}")
    if not cfg.k <= s:
        raise ValueError(f"need k <= s, got k={cfg.k}, s={s}")

    ynorm = np.linalg.norm(y)
    if ynorm == 0.0:
        return CsSolution(np.zeros(n), 0, 0.0, True)

    k = cfg.k
    v = np.zeros(n)
    support = np.empty(0, dtype=np.int64)
    res = y.copy()
    best_v, best_res = v, ynorm
    iterations = 0
    converged = False

    for iterations in range(1, cfg.max_iters + 1):
        g = Y.forward_apply(res)
        gamma = support if support.size else \
            np.sort(np.argsort(-np.abs(g), kind="stable")[:k])
        g_restricted = g[gamma]
        denom = np.linalg.norm(_adjoint_sparse(Y, g, gamma)) ** 2
        if denom == 0.0:
            break  # degenerate operator; keep best iterate, converged=False
        mu = float(np.dot(g_restricted, g_restricted)) / denom

        v_new = hard_threshold(v + mu * g, k)
        new_support = np.flatnonzero(v_new)
        for _ in range(100):
            if np.array_equal(new_support, gamma):
                break
            dv = v_new - v
            dv_support = np.flatnonzero(dv)
            dnorm2 = float(np.dot(dv[dv_support], dv[dv_support]))
            if dnorm2 == 0.0:
                break
            omega = (1.0 - cfg.backtrack_c) * dnorm2 / \
                np.linalg.norm(_adjoint_sparse(Y, dv, dv_support)) ** 2
            if mu <= omega:
                break
            mu /= cfg.backtrack_shrink
            v_new = hard_threshold(v + mu * g, k)
            new_support = np.flatnonzero(v_new)

        assert np.count_nonzero(v_new) <= k
        res = y - _adjoint_sparse(Y, v_new, new_support)
        rnorm = np.linalg.norm(res)
        if rnorm < best_res:
            best_res, best_v = rnorm, v_new
        step = np.linalg.norm(v_new - v)
        v, support = v_new, new_support
        if rnorm <= cfg.residual_tol * ynorm:
            converged = True
            break
        if step <= cfg.stagnation_tol * np.linalg.norm(v):
            converged = True
            break

    return CsSolution(best_v.copy(), iterations, float(best_res), converged)
