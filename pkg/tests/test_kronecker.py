"""Perfect-shuffle identities and Kronecker-sum / Kronecker-exp recovery
against dense kron oracles."""

import numpy as np
import pytest
import scipy.linalg

import matrecov as mr


def random_banded_sym(n, k, seed, norm=0.5):
    rng = np.random.default_rng(seed)
    M = np.zeros((n, n))
    for off in range(k + 1):
        vals = rng.standard_normal(n - off)
        idx = np.arange(n - off)
        M[idx, idx + off] = vals
        M[idx + off, idx] = vals
    return M * (norm / np.linalg.norm(M, 2))


def kron_sum_dense(A1, A2):
    n = A1.shape[0]
    return np.kron(A1, np.eye(n)) + np.kron(np.eye(n), A2)


# ---------------------------------------------------------------------------
# shuffle permutation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_shuffle_transposes_vec(n):
    rng = np.random.default_rng(n)
    P = mr.ShufflePermutation(n)
    M = rng.standard_normal((n, n))
    vec = M.flatten(order="F")
    vec_t = M.T.flatten(order="F")
    assert np.array_equal(P.apply(vec), vec_t)


@pytest.mark.parametrize("n", [2, 4, 8])
def test_shuffle_conjugation_identity(n):
    rng = np.random.default_rng(10 + n)
    A = rng.standard_normal((n, n))
    Pd = np.zeros((n * n, n * n))
    P = mr.ShufflePermutation(n)
    Pd[np.arange(n * n), P.perm] = 1.0
    left = Pd @ np.kron(A, np.eye(n)) @ Pd.T
    assert np.allclose(left, np.kron(np.eye(n), A), atol=1e-14)
    assert np.allclose(Pd @ Pd.T, np.eye(n * n), atol=0)


def test_shuffle_is_involution():
    P = mr.ShufflePermutation(6)
    v = np.random.default_rng(1).standard_normal(36)
    assert np.array_equal(P.apply(P.apply(v)), v)


# ---------------------------------------------------------------------------
# Kronecker-sum recovery
# ---------------------------------------------------------------------------

def test_kron_sum_zero_matrices():
    n = 5
    op = mr.LinearOperator.from_dense(np.zeros((n * n, n * n)))
    rec = mr.kron_sum_recover(op, 0, 0)
    assert rec.matvecs_used == 2
    assert np.all(rec.materialize().toarray() == 0.0)
    assert np.all(rec.diag_grid == 0.0)


def test_kron_sum_tridiagonal_exact():
    n = 12
    A1 = random_banded_sym(n, 1, seed=1)
    A2 = random_banded_sym(n, 1, seed=2)
    K = kron_sum_dense(A1, A2)
    op = mr.LinearOperator.from_dense(K)
    rec = mr.kron_sum_recover(op, 1, 1)
    assert rec.matvecs_used == 6
    assert op.matvec_count == 6
    got = rec.materialize().toarray()
    assert np.max(np.abs(got - K)) <= 1e-13 * np.max(np.abs(K))


def test_kron_sum_off_diagonal_split_is_exact():
    n = 9
    A1 = random_banded_sym(n, 2, seed=3)
    A2 = random_banded_sym(n, 1, seed=4)
    op = mr.LinearOperator.from_dense(kron_sum_dense(A1, A2))
    rec = mr.kron_sum_recover(op, 2, 1)
    F1 = rec.factor1_shifted.to_dense()
    F2 = rec.factor2_shifted.to_dense()
    off = ~np.eye(n, dtype=bool)
    assert np.allclose(F1[off], A1[off], atol=1e-14)
    assert np.allclose(F2[off], A2[off], atol=1e-14)
    # diagonal grid reproduces A1_ii + A2_jj
    expect = np.add.outer(np.diag(A1), np.diag(A2))
    assert np.allclose(rec.diag_grid, expect, atol=1e-13)


@pytest.mark.parametrize("n,k1,k2", [(6, 0, 1), (10, 2, 2), (20, 3, 1)])
def test_kron_sum_budget_and_exactness_sweep(n, k1, k2):
    A1 = random_banded_sym(n, k1, seed=5 + n)
    A2 = random_banded_sym(n, k2, seed=6 + n)
    K = kron_sum_dense(A1, A2)
    op = mr.LinearOperator.from_dense(K)
    rec = mr.kron_sum_recover(op, k1, k2)
    assert rec.matvecs_used == 2 + 2 * k1 + 2 * k2
    rel = np.linalg.norm(rec.materialize().toarray() - K, "fro") \
        / np.linalg.norm(K, "fro")
    assert rel <= 1e-13


def test_kron_sum_rejects_non_square_dimension():
    op = mr.LinearOperator.from_dense(np.eye(12))
    with pytest.raises(ValueError, match="perfect square"):
        mr.kron_sum_recover(op, 1, 1)


# ---------------------------------------------------------------------------
# Kronecker exponential recovery
# ---------------------------------------------------------------------------

def test_kron_exp_zero_factors():
    n = 4
    op = mr.LinearOperator.from_dense(np.eye(n * n))  # exp(0 (+) 0) = I
    fac = mr.kron_exp_recover(op, 3, 3)
    assert fac.matvecs_used == 6
    assert np.allclose(fac.materialize(), np.eye(n * n), atol=1e-14)


def test_kron_exp_tridiagonal_factors():
    n = 10
    A1 = random_banded_sym(n, 1, seed=7, norm=0.5)
    A2 = random_banded_sym(n, 1, seed=8, norm=0.5)
    E = np.kron(scipy.linalg.expm(A1), scipy.linalg.expm(A2))
    op = mr.LinearOperator.from_dense(E)
    fac = mr.kron_exp_recover(op, 11, 11)
    assert fac.matvecs_used == 22
    rel = np.linalg.norm(fac.materialize() - E, 2) / np.linalg.norm(E, 2)
    assert rel <= 1e-6


def test_kron_exp_factored_matvec_matches_materialization():
    n = 8
    A1 = random_banded_sym(n, 1, seed=9, norm=0.4)
    A2 = random_banded_sym(n, 1, seed=10, norm=0.4)
    E = np.kron(scipy.linalg.expm(A1), scipy.linalg.expm(A2))
    fac = mr.kron_exp_recover(mr.LinearOperator.from_dense(E), 7, 7)
    dense = fac.materialize()
    rng = np.random.default_rng(11)
    for _ in range(5):
        v = rng.standard_normal(n * n)
        assert np.linalg.norm(fac.matvec(v) - dense @ v) \
            <= 1e-12 * np.linalg.norm(dense @ v)


def test_kron_exp_error_decays_with_block_size():
    n = 16
    A1 = random_banded_sym(n, 1, seed=12, norm=0.5)
    A2 = random_banded_sym(n, 1, seed=13, norm=0.5)
    E = np.kron(scipy.linalg.expm(A1), scipy.linalg.expm(A2))
    errs = []
    for s in (3, 7, 11):
        fac = mr.kron_exp_recover(mr.LinearOperator.from_dense(E), s, s)
        errs.append(np.linalg.norm(fac.materialize() - E, 2)
                    / np.linalg.norm(E, 2))
    assert errs[1] <= errs[0] * 0.1
    assert errs[2] <= errs[1] * 0.1


def test_kron_exp_rejects_even_block():
    op = mr.LinearOperator.from_dense(np.eye(16))
    with pytest.raises(ValueError, match="odd"):
        mr.kron_exp_recover(op, 4, 3)
