"""Krylov and contour f(A)b engines against dense oracles, plus functional
identities and the spectrum bracketing."""

import numpy as np
import pytest
import scipy.linalg

import matrecov as mr
from conftest import dense_matfun_sym, random_symmetric_banded


def random_spd(n, cond, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(np.linspace(0.0, np.log(cond), n))
    return (Q * w) @ Q.T, w


# ---------------------------------------------------------------------------
# Krylov
# ---------------------------------------------------------------------------

def test_krylov_diagonal_breakdown_path():
    A = np.diag([2.0, -1.0, 0.5, 3.0])
    op = mr.LinearOperator.from_dense(A)
    for i in range(4):
        b = np.zeros(4)
        b[i] = 1.0
        got = mr.krylov_apply(op, b, "exp", 10)
        expected = np.exp(A[i, i]) * b
        assert np.linalg.norm(got - expected) <= 1e-14 * np.exp(3.0)


def test_krylov_exp_matches_dense():
    A = random_symmetric_banded(200, 2, seed=1, norm=0.5)
    F = dense_matfun_sym(A, "exp")
    op = mr.LinearOperator.from_dense(A)
    rng = np.random.default_rng(2)
    for _ in range(3):
        b = rng.standard_normal(200)
        got = mr.krylov_apply(op, b, "exp", 20)
        assert np.linalg.norm(got - F @ b) <= 1e-12 * np.linalg.norm(F @ b)


def test_krylov_error_decreases_with_steps():
    A = random_symmetric_banded(300, 2, seed=3, norm=0.5)
    F = dense_matfun_sym(A, "exp")
    op = mr.LinearOperator.from_dense(A)
    b = np.random.default_rng(4).standard_normal(300)
    exact = F @ b
    errs = [np.linalg.norm(mr.krylov_apply(op, b, "exp", m) - exact)
            for m in (4, 6, 8)]
    assert errs[1] < errs[0] and errs[2] < errs[1]


def test_lanczos_basis_invariants():
    A = random_symmetric_banded(150, 3, seed=5, norm=1.0)
    op = mr.LinearOperator.from_dense(A)
    b = np.random.default_rng(6).standard_normal(150)
    basis = mr.lanczos(op, b, 30)
    m = basis.V.shape[1]
    assert np.max(np.abs(basis.V.T @ basis.V - np.eye(m))) <= 1e-10
    assert basis.beta == pytest.approx(np.linalg.norm(b))


def test_arnoldi_on_symmetric_is_tridiagonal_and_agrees():
    A = random_symmetric_banded(120, 2, seed=7, norm=0.8)
    op_sym = mr.LinearOperator.from_dense(A, symmetric=True)
    op_gen = mr.LinearOperator.from_dense(A, symmetric=False)
    b = np.random.default_rng(8).standard_normal(120)
    arn = mr.arnoldi(op_gen, b, 15)
    H = arn.H
    off = H.copy()
    for d in (-1, 0, 1):
        off -= np.diag(np.diagonal(H, d), d)
    assert np.max(np.abs(off)) <= 1e-12
    lan = mr.krylov_apply(op_sym, b, "exp", 15)
    gen = mr.krylov_apply(op_gen, b, "exp", 15)
    assert np.linalg.norm(lan - gen) <= 1e-10 * np.linalg.norm(lan)


def test_krylov_nonsymmetric_exp():
    rng = np.random.default_rng(9)
    A = rng.standard_normal((60, 60)) * 0.05
    op = mr.LinearOperator.from_dense(A, symmetric=False)
    b = rng.standard_normal(60)
    got = mr.krylov_apply(op, b, "exp", 30)
    exact = scipy.linalg.expm(A) @ b
    assert np.linalg.norm(got - exact) <= 1e-10 * np.linalg.norm(exact)
    with pytest.raises(mr.MatFunError):
        mr.krylov_apply(op, b, "sqrt", 30)


def test_krylov_domain_error_names_value():
    A = np.diag([1.0, -2.0, 3.0])
    op = mr.LinearOperator.from_dense(A)
    b = np.ones(3)
    with pytest.raises(mr.DomainError, match="-2"):
        mr.krylov_apply(op, b, "log", 3)
    with pytest.raises(mr.DomainError):
        mr.krylov_apply(op, b, "sqrt", 3)


def test_krylov_rejects_zero_vector():
    op = mr.LinearOperator.from_dense(np.eye(4))
    with pytest.raises(ValueError, match="nonzero"):
        mr.krylov_apply(op, np.zeros(4), "exp", 2)


def test_krylov_full_space_is_exact():
    A = random_symmetric_banded(16, 2, seed=10, norm=0.5)
    F = dense_matfun_sym(A, "exp")
    op = mr.LinearOperator.from_dense(A)
    b = np.random.default_rng(11).standard_normal(16)
    got = mr.krylov_apply(op, b, "exp", 25)  # m >= n reaches the full space
    assert np.linalg.norm(got - F @ b) <= 1e-13 * np.linalg.norm(F @ b)


def test_krylov_linearity():
    A = random_symmetric_banded(80, 2, seed=12, norm=0.5)
    op = mr.LinearOperator.from_dense(A)
    rng = np.random.default_rng(13)
    b1, b2 = rng.standard_normal(80), rng.standard_normal(80)
    a, c = 0.7, -1.3
    lhs = mr.krylov_apply(op, a * b1 + c * b2, "exp", 20)
    rhs = a * mr.krylov_apply(op, b1, "exp", 20) + \
        c * mr.krylov_apply(op, b2, "exp", 20)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(lhs)


# ---------------------------------------------------------------------------
# contour integration
# ---------------------------------------------------------------------------

def test_contour_diagonal_sqrt():
    A = np.diag([1.0, 4.0])
    op = mr.LinearOperator.from_dense(A)
    got = mr.contour_apply(op, np.ones(2), "sqrt", 50, (1.0, 4.0))
    assert np.linalg.norm(got - np.array([1.0, 2.0])) <= 1e-12


def test_contour_log_matches_dense():
    A = random_symmetric_banded(100, 2, seed=14, norm=0.5)
    S = np.eye(100) + A  # SPD, spectrum in [0.5, 1.5]
    F = dense_matfun_sym(S, "log")
    op = mr.LinearOperator.from_dense(S)
    b = np.random.default_rng(15).standard_normal(100)
    got = mr.contour_apply(op, b, "log", 50, (0.45, 1.55))
    assert np.linalg.norm(got - F @ b) <= 1e-10 * np.linalg.norm(F @ b)


def test_contour_converges_geometrically():
    A, w = random_spd(40, 100.0, seed=16)
    op = mr.LinearOperator.from_dense(A)
    b = np.random.default_rng(17).standard_normal(40)
    exact = dense_matfun_sym(A, "sqrt") @ b
    errs = []
    for N in (5, 10, 20, 40):
        got = mr.contour_apply(op, b, "sqrt", N, (w[0], w[-1]))
        errs.append(np.linalg.norm(got - exact) / np.linalg.norm(exact))
    # halving rate at least ~100x per doubling for cond 100
    assert errs[1] <= errs[0] * 1e-1
    assert errs[2] <= errs[1] * 1e-2
    assert errs[3] <= 1e-13


def test_contour_matvec_only_path_uses_cg():
    A, w = random_spd(50, 30.0, seed=18)
    op = mr.LinearOperator(50, lambda x: A @ x, symmetric=True)  # no explicit
    assert op.explicit is None
    b = np.random.default_rng(19).standard_normal(50)
    exact = dense_matfun_sym(A, "sqrt") @ b
    got = mr.contour_apply(op, b, "sqrt", 40, (w[0], w[-1]))
    assert np.linalg.norm(got - exact) <= 1e-10 * np.linalg.norm(exact)
    assert op.matvec_count > 0  # inner solves consumed matvecs of A


def test_contour_interval_validation():
    op = mr.LinearOperator.from_dense(np.eye(3))
    with pytest.raises(ValueError):
        mr.contour_apply(op, np.ones(3), "sqrt", 10, (-1.0, 2.0))
    with pytest.raises(ValueError):
        mr.contour_apply(op, np.ones(3), "exp", 10, (0.5, 2.0))


def test_cocg_reports_nonconvergence():
    A, w = random_spd(40, 1e4, seed=20)
    op = mr.LinearOperator(40, lambda x: A @ x, symmetric=True)
    b = np.ones(40)
    with pytest.raises(mr.ConvergenceError, match="residual"):
        mr.contour_apply(op, b, "sqrt", 10, (w[0], w[-1]), max_iters=3)


# ---------------------------------------------------------------------------
# spectrum estimation
# ---------------------------------------------------------------------------

def test_spectrum_interval_diagonal():
    A = np.diag(np.linspace(0.5, 7.0, 40))
    op = mr.LinearOperator.from_dense(A)
    est = mr.estimate_spectrum_interval(op, probe_steps=40, seed=0)
    assert est.low <= 0.5 and est.high >= 7.0
    assert est.converged


def test_spectrum_interval_brackets_dense_oracle():
    A, w = random_spd(200, 50.0, seed=21)
    op = mr.LinearOperator.from_dense(0.5 * (A + A.T), symmetric=True)
    est = mr.estimate_spectrum_interval(op, probe_steps=30, seed=1)
    assert est.low <= w[0]
    assert est.high >= w[-1]


def test_spectrum_interval_requires_symmetry():
    op = mr.LinearOperator.from_dense(np.triu(np.ones((4, 4))), symmetric=False)
    with pytest.raises(ValueError, match="symmetric"):
        mr.estimate_spectrum_interval(op)


def test_spectrum_interval_gr_30_30():
    from conftest import require_data
    path = require_data("gr_30_30.mtx")
    M = mr.matrix_market_read(path)
    op = mr.LinearOperator.from_sparse(M.to_scipy())
    est = mr.estimate_spectrum_interval(op, probe_steps=60, seed=0)
    assert est.low <= 0.06 and est.high >= 11.96


# ---------------------------------------------------------------------------
# the f(A) operator wrapper
# ---------------------------------------------------------------------------

def test_matfun_operator_exp():
    A = random_symmetric_banded(150, 2, seed=22, norm=0.5)
    F = dense_matfun_sym(A, "exp")
    inner = mr.LinearOperator.from_dense(A)
    op = mr.matfun_operator(inner, mr.MatFunSpec("exp", krylov_steps=20))
    b = np.random.default_rng(23).standard_normal(150)
    got = op.apply(b)
    assert np.linalg.norm(got - F @ b) <= 1e-12 * np.linalg.norm(F @ b)
    assert op.matvec_count == 1        # outer applies
    assert inner.matvec_count == 20    # inner Krylov matvecs, counted apart


def test_matfun_operator_sqrt1p_is_shifted_sqrt():
    A = random_symmetric_banded(80, 2, seed=24, norm=0.5)
    inner = mr.LinearOperator.from_dense(A)
    spec = mr.MatFunSpec("sqrt1p", method="contour", contour_points=50,
                         spectrum_interval=(-0.5, 0.5))
    op = mr.matfun_operator(inner, spec)
    b = np.random.default_rng(25).standard_normal(80)
    got = op.apply(b)
    oracle = dense_matfun_sym(np.eye(80) + A, "sqrt") @ b
    assert np.linalg.norm(got - oracle) <= 1e-10 * np.linalg.norm(oracle)


def test_matfun_operator_log1p():
    A = random_symmetric_banded(80, 2, seed=26, norm=0.5)
    inner = mr.LinearOperator.from_dense(A)
    spec = mr.MatFunSpec("log1p", method="contour", contour_points=50)
    op = mr.matfun_operator(inner, spec)  # interval estimated internally
    b = np.random.default_rng(27).standard_normal(80)
    oracle = dense_matfun_sym(np.eye(80) + A, "log") @ b
    assert np.linalg.norm(op.apply(b) - oracle) <= 1e-9 * np.linalg.norm(oracle)


def test_functional_identities():
    # sqrt route: A accessed as M(Mx) for SPD M, so sqrt(A) b must return Mb
    rng = np.random.default_rng(29)
    M, w = random_spd(150, 30.0, seed=28)
    A_op = mr.LinearOperator(150, lambda x: M @ (M @ x), symmetric=True)
    b = rng.standard_normal(150)
    got = mr.contour_apply(A_op, b, "sqrt", 50, (0.99 * w[0] ** 2, 1.01 * w[-1] ** 2))
    assert np.linalg.norm(got - M @ b) <= 1e-8 * np.linalg.norm(M @ b)
    # log route: A = exp(L), so log(A) b must return L b
    L = random_symmetric_banded(150, 3, seed=30, norm=1.0)
    A = dense_matfun_sym(L, "exp")
    op = mr.LinearOperator.from_dense(A)
    got = mr.contour_apply(op, b, "log", 50,
                           (0.99 * np.exp(-1.0), 1.01 * np.exp(1.0)))
    assert np.linalg.norm(got - L @ b) <= 1e-8 * np.linalg.norm(L @ b)


def test_matfun_spec_validation():
    with pytest.raises(ValueError):
        mr.MatFunSpec("cos")
    with pytest.raises(ValueError):
        mr.MatFunSpec("exp", method="contour")
    with pytest.raises(ValueError):
        mr.MatFunSpec("sqrt", method="contour", spectrum_interval=(2.0, 1.0))


def test_matfun_operator_nonpositive_interval_rejected():
    A = np.diag([-0.5, 0.2, 0.4])
    inner = mr.LinearOperator.from_dense(A)
    spec = mr.MatFunSpec("sqrt", method="contour")
    with pytest.raises(mr.DomainError, match="positive"):
        mr.matfun_operator(inner, spec)
