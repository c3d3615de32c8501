"""Shared builders and independent oracles for the test suite."""

import os

import numpy as np
import pytest

import matrecov as mr

DATA_DIR = os.environ.get("MATRECOV_DATA_DIR", os.path.join(os.path.dirname(__file__), "data"))


def data_file(name):
    return os.path.join(DATA_DIR, name)


def require_data(name):
    path = data_file(name)
    if not os.path.exists(path):
        pytest.skip(f"dataset {name} not available (set MATRECOV_DATA_DIR)")
    return path


def exact_decay_matrix(n, C, lam):
    """Dense B with B_ij = C * lam^{|i-j|} exactly."""
    d = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return C * lam ** d


def random_banded_dense(n, k1, k2, seed):
    """Dense (k1, k2)-banded matrix with standard normal in-band entries."""
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    d = np.subtract.outer(np.arange(n), np.arange(n))  # i - j
    M[(d > k2) | (-d > k1)] = 0.0
    return M


def random_symmetric_banded(n, k, seed, norm=None):
    rng = np.random.default_rng(seed)
    M = np.zeros((n, n))
    for off in range(k + 1):
        vals = rng.standard_normal(n - off)
        idx = np.arange(n - off)
        M[idx, idx + off] = vals
        M[idx + off, idx] = vals
    if norm is not None:
        M *= norm / np.linalg.norm(M, 2)
    return M


def dense_matfun_sym(A, f):
    """Dense oracle f(A) for symmetric A via eigendecomposition."""
    w, V = np.linalg.eigh(A)
    fw = {
        "exp": np.exp,
        "sqrt": np.sqrt,
        "log": np.log,
        "sqrt1p": lambda x: np.sqrt(1 + x),
        "log1p": np.log1p,
    }[f](w)
    return (V * fw) @ V.T


def operator_from_dense(M, symmetric=None):
    return mr.LinearOperator.from_dense(M, symmetric=symmetric)


def rel2(E, F):
    return np.linalg.norm(E, 2) / np.linalg.norm(F, 2)
