"""Compiled per-row NIHT kernel for the row-recovery hot path.

Same iteration as greedy.niht_solve with the gradient computed in Gram form
(Phi^T y - (Phi^T Phi) v, exploiting the k-sparse iterate); the residual
used by the stopping rule stays in measurement form.  Rows are independent,
so the parallel schedule cannot change any result.
"""

import numpy as np

try:
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - covered by the numpy fallback path
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

    prange = range


@njit(cache=True)
def _select_topk(w, k, out_idx, scratch):
    """Indices of the k largest |w| into out_idx (sorted ascending), ties
    toward the lowest index; equivalent to keeping the k largest pairs
    (|w_i|, -i).  Returns the count (k, or n when n < k)."""
    n = w.shape[0]
    count = 0
    min_pos = 0
    for i in range(n):
        aw = abs(w[i])
        if count < k:
            out_idx[count] = i
            scratch[count] = aw
            count += 1
            if count == k:
                min_pos = 0
                for j in range(1, k):
                    if (scratch[j] < scratch[min_pos]) or \
                       (scratch[j] == scratch[min_pos]
                            and out_idx[j] > out_idx[min_pos]):
                        min_pos = j
        elif (aw > scratch[min_pos]) or \
                (aw == scratch[min_pos] and i < out_idx[min_pos]):
            scratch[min_pos] = aw
            out_idx[min_pos] = i
            min_pos = 0
            for j in range(1, k):
                if (scratch[j] < scratch[min_pos]) or \
                   (scratch[j] == scratch[min_pos]
                        and out_idx[j] > out_idx[min_pos]):
                    min_pos = j
    sub = out_idx[:count]
    sub.sort()
    return count


@njit(cache=True)
def _solve_one_row(Yd, Gram, y, k, max_iters, residual_tol, stagnation_tol,
                   backtrack_c, backtrack_shrink, out_idx, out_val,
                   w, gfull, tmp_s, gam_idx, sel_scratch,
                   cur_idx, cur_val, new_idx, new_val):
    """NIHT for one row; fills out_idx/out_val with the best iterate and
    returns (nnz, iterations, residual_norm, converged)."""
    n, s = Yd.shape
    ynorm2 = 0.0
    for col in range(s):
        ynorm2 += y[col] * y[col]
    ynorm = np.sqrt(ynorm2)
    if ynorm == 0.0:
        return 0, 0, 0.0, True

    g0 = np.dot(Yd, y)  # Phi^T y, fixed for the whole solve

    m_cur = 0
    best_nnz = 0
    best_res = ynorm
    converged = False
    iterations = 0
    m_new = 0

    for it in range(1, max_iters + 1):
        iterations = it

        # full gradient g = g0 - Gram v (k rows of Gram, contiguous)
        for i in range(n):
            gfull[i] = g0[i]
        for l in range(m_cur):
            vl = cur_val[l]
            row = Gram[cur_idx[l]]
            for i in range(n):
                gfull[i] -= vl * row[i]

        # mu-support gamma: current support, or top-k of |g| at the start
        if m_cur > 0:
            m_gam = m_cur
            for j in range(m_gam):
                gam_idx[j] = cur_idx[j]
        else:
            m_gam = _select_topk(gfull, k, gam_idx, sel_scratch)

        gnorm2 = 0.0
        for j in range(m_gam):
            gj = gfull[gam_idx[j]]
            gnorm2 += gj * gj
        for col in range(s):
            tmp_s[col] = 0.0
        for j in range(m_gam):
            gj = gfull[gam_idx[j]]
            yrow = Yd[gam_idx[j]]
            for col in range(s):
                tmp_s[col] += gj * yrow[col]
        denom = 0.0
        for col in range(s):
            denom += tmp_s[col] * tmp_s[col]
        if denom == 0.0:
            converged = False
            break
        mu = gnorm2 / denom

        # proposal + backtracking (g is fixed within the iteration)
        for _bt in range(100):
            for i in range(n):
                w[i] = mu * gfull[i]
            for l in range(m_cur):
                w[cur_idx[l]] += cur_val[l]
            m_keep = _select_topk(w, k, new_idx, sel_scratch)
            m_new = 0
            for j in range(m_keep):
                val = w[new_idx[j]]
                if val != 0.0:
                    new_idx[m_new] = new_idx[j]
                    new_val[m_new] = val
                    m_new += 1
            same = m_new == m_gam
            if same:
                for j in range(m_new):
                    if new_idx[j] != gam_idx[j]:
                        same = False
                        break
            if same:
                break
            # support changed: omega test on the union-supported step
            for col in range(s):
                tmp_s[col] = 0.0
            for j in range(m_new):
                vj = new_val[j]
                yrow = Yd[new_idx[j]]
                for col in range(s):
                    tmp_s[col] += vj * yrow[col]
            for l in range(m_cur):
                vl = cur_val[l]
                yrow = Yd[cur_idx[l]]
                for col in range(s):
                    tmp_s[col] -= vl * yrow[col]
            phinorm2 = 0.0
            for col in range(s):
                phinorm2 += tmp_s[col] * tmp_s[col]
            dnorm2 = 0.0
            for j in range(m_new):
                dv = new_val[j]
                for l in range(m_cur):
                    if cur_idx[l] == new_idx[j]:
                        dv -= cur_val[l]
                        break
                dnorm2 += dv * dv
            for l in range(m_cur):
                found = False
                for j in range(m_new):
                    if new_idx[j] == cur_idx[l]:
                        found = True
                        break
                if not found:
                    dnorm2 += cur_val[l] * cur_val[l]
            if dnorm2 == 0.0 or phinorm2 == 0.0:
                break
            if mu <= (1.0 - backtrack_c) * dnorm2 / phinorm2:
                break
            mu /= backtrack_shrink

        # step size for the stagnation rule
        step2 = 0.0
        for j in range(m_new):
            dv = new_val[j]
            for l in range(m_cur):
                if cur_idx[l] == new_idx[j]:
                    dv -= cur_val[l]
                    break
            step2 += dv * dv
        for l in range(m_cur):
            found = False
            for j in range(m_new):
                if new_idx[j] == cur_idx[l]:
                    found = True
                    break
            if not found:
                step2 += cur_val[l] * cur_val[l]

        # measurement-form residual r = y - Y^T v_new
        for col in range(s):
            tmp_s[col] = y[col]
        for j in range(m_new):
            vj = new_val[j]
            yrow = Yd[new_idx[j]]
            for col in range(s):
                tmp_s[col] -= vj * yrow[col]
        rnorm2 = 0.0
        for col in range(s):
            rnorm2 += tmp_s[col] * tmp_s[col]
        rnorm = np.sqrt(rnorm2)

        if rnorm < best_res:
            best_res = rnorm
            best_nnz = m_new
            for j in range(m_new):
                out_idx[j] = new_idx[j]
                out_val[j] = new_val[j]

        vnorm2 = 0.0
        for j in range(m_new):
            vnorm2 += new_val[j] * new_val[j]
        m_cur = m_new
        for j in range(m_new):
            cur_idx[j] = new_idx[j]
            cur_val[j] = new_val[j]

        if rnorm <= residual_tol * ynorm:
            converged = True
            break
        if step2 <= (stagnation_tol * stagnation_tol) * vnorm2:
            converged = True
            break

    return best_nnz, iterations, best_res, converged


@njit(cache=True, parallel=True)
def solve_rows_kernel(Yd, Gram, F, k, max_iters, residual_tol, stagnation_tol,
                      backtrack_c, backtrack_shrink):
    """All rows of F against the shared sensing matrix; parallel over rows."""
    R = F.shape[0]
    n, s = Yd.shape
    out_idx = np.zeros((R, k), dtype=np.int64)
    out_val = np.zeros((R, k))
    out_nnz = np.zeros(R, dtype=np.int64)
    out_iters = np.zeros(R, dtype=np.int64)
    out_res = np.zeros(R)
    out_conv = np.zeros(R, dtype=np.uint8)
    for r in prange(R):
        w = np.empty(n)
        gfull = np.empty(n)
        tmp_s = np.empty(s)
        gam_idx = np.empty(k, dtype=np.int64)
        sel_scratch = np.empty(k)
        cur_idx = np.empty(k, dtype=np.int64)
        cur_val = np.empty(k)
        new_idx = np.empty(k, dtype=np.int64)
        new_val = np.empty(k)
        nnz, iters, res, conv = _solve_one_row(
            Yd, Gram, F[r], k, max_iters, residual_tol, stagnation_tol,
            backtrack_c, backtrack_shrink, out_idx[r], out_val[r],
            w, gfull, tmp_s, gam_idx, sel_scratch,
            cur_idx, cur_val, new_idx, new_val)
        out_nnz[r] = nnz
        out_iters[r] = iters
        out_res[r] = res
        out_conv[r] = 1 if conv else 0
    return out_idx, out_val, out_nnz, out_iters, out_res, out_conv
