"""The f(A)b engine: polynomial Krylov (Lanczos/Arnoldi with full
reorthogonalization) for entire functions, and quadrature on an
elliptic-function contour for sqrt/log, whose branch cut on (-inf, 0] rules
out polynomial approximation near 0.

sqrt1p/log1p are evaluated as sqrt/log of the shifted operator x -> x + Ax.
"""

import math
import threading
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import ellipj, ellipkm1

from .core import LinearOperator

FUNCTIONS = ("exp", "sqrt", "log", "sqrt1p", "log1p")
CONTOUR_FUNCTIONS = ("sqrt", "log", "sqrt1p", "log1p")


class MatFunError(RuntimeError):
    """Base class for matrix-function evaluation failures."""


class DomainError(MatFunError):
    """f is undefined on (part of) the projected spectrum."""


class ConvergenceError(MatFunError):
    """An inner iterative solve failed to reach its tolerance."""


@dataclass
class MatFunSpec:
    """Which function to apply and how.

    spectrum_interval, when given, refers to the spectrum of A itself; the
    sqrt1p/log1p engines shift it by +1 internally.
    """

    f: str
    method: str = "poly_krylov"
    krylov_steps: int = 20
    contour_points: int = 50
    spectrum_interval: tuple | None = None

    def __post_init__(self):
        if self.f not in FUNCTIONS:
            raise ValueError(f"unknown function {self.f!r}")
        if self.method not in ("poly_krylov", "contour"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "contour" and self.f not in CONTOUR_FUNCTIONS:
            raise ValueError("contour integration supports sqrt/log variants only")
        if self.krylov_steps < 1 or self.contour_points < 1:
            raise ValueError("step/point counts must be >= 1")
        if self.spectrum_interval is not None:
            lo, hi = self.spectrum_interval
            if not lo <= hi:
                raise ValueError("spectrum interval must satisfy low <= high")


# ---------------------------------------------------------------------------
# Krylov bases
# ---------------------------------------------------------------------------

@dataclass
class KrylovBasis:
    """Orthonormal basis V, projection H = V^T A V, starting norm beta, and
    the residual coefficient next_beta (0 on breakdown)."""

    V: np.ndarray
    H: np.ndarray
    beta: float
    next_beta: float
    breakdown: bool


def _reorthogonalize(w, V, j):
    for _ in range(2):  # two classical Gram-Schmidt passes
        w -= V[:, :j + 1] @ (V[:, :j + 1].T @ w)
    return w


def lanczos(op, b, m):
    """Symmetric Krylov basis with full reorthogonalization; stops early on
    breakdown (invariant subspace found)."""
    b = np.asarray(b, dtype=np.float64)
    beta = np.linalg.norm(b)
    if beta == 0.0:
        raise ValueError("starting vector must be nonzero")
    m = min(m, op.n)
    V = np.zeros((op.n, m + 1))
    V[:, 0] = b / beta
    alphas = np.zeros(m)
    betas = np.zeros(m)
    scale = 0.0
    k = 0
    breakdown = False
    for j in range(m):
        w = op.apply(V[:, j])
        alphas[j] = V[:, j] @ w
        w = w - alphas[j] * V[:, j]
        if j > 0:
            w = w - betas[j - 1] * V[:, j - 1]
        w = _reorthogonalize(w, V, j)
        betas[j] = np.linalg.norm(w)
        scale = max(scale, abs(alphas[j]), betas[j])
        k = j + 1
        if betas[j] <= 1e-13 * max(scale, 1e-300):
            breakdown = True
            betas[j] = 0.0
            break
        if j + 1 < m + 1:
            V[:, j + 1] = w / betas[j]
    H = np.diag(alphas[:k])
    if k > 1:
        H += np.diag(betas[:k - 1], 1) + np.diag(betas[:k - 1], -1)
    return KrylovBasis(V[:, :k], H, beta, float(betas[k - 1]), breakdown)


def arnoldi(op, b, m):
    """General Krylov basis via modified Gram-Schmidt with a
    reorthogonalization pass."""
    b = np.asarray(b, dtype=np.float64)
    beta = np.linalg.norm(b)
    if beta == 0.0:
        raise ValueError("starting vector must be nonzero")
    m = min(m, op.n)
    V = np.zeros((op.n, m + 1))
    V[:, 0] = b / beta
    H = np.zeros((m + 1, m))
    k = 0
    breakdown = False
    for j in range(m):
        w = op.apply(V[:, j])
        for i in range(j + 1):
            H[i, j] = V[:, i] @ w
            w = w - H[i, j] * V[:, i]
        corr = V[:, :j + 1].T @ w
        H[:j + 1, j] += corr
        w = w - V[:, :j + 1] @ corr
        H[j + 1, j] = np.linalg.norm(w)
        k = j + 1
        if H[j + 1, j] <= 1e-13 * max(np.abs(H).max(), 1e-300):
            breakdown = True
            H[j + 1, j] = 0.0
            break
        V[:, j + 1] = w / H[j + 1, j]
    return KrylovBasis(V[:, :k], H[:k, :k], beta, float(H[k, k - 1]), breakdown)


def _scalar_function(f):
    return {
        "exp": np.exp,
        "sqrt": np.sqrt,
        "log": np.log,
        "sqrt1p": lambda x: np.sqrt(1.0 + x),
        "log1p": np.log1p,
    }[f]


def _check_domain(f, values):
    if f == "exp":
        return
    lower = {"sqrt": 0.0, "log": 0.0, "sqrt1p": -1.0, "log1p": -1.0}[f]
    strict = f in ("log", "log1p")
    bad = values <= lower if strict else values < lower
    if np.any(bad):
        worst = float(values[bad].min())
        raise DomainError(f"{f} undefined at projected eigenvalue {worst:.6g}")


def krylov_apply(op, b, f, m):
    """Approximate f(A) b as beta * V f(H) e1 after m Krylov steps.

    Symmetric operators evaluate f(H) through the eigendecomposition of the
    tridiagonal projection (with domain checks on the Ritz values);
    nonsymmetric operators support f = exp via a dense evaluation.  Early
    breakdown returns the exact result in the generated invariant subspace.
    """
    if f not in FUNCTIONS:
        raise ValueError(f"unknown function {f!r}")
    if op.symmetric_hint:
        basis = lanczos(op, b, m)
        w, U = np.linalg.eigh(basis.H)
        _check_domain(f, w)
        e1 = U[0, :]  # row: U^T e1
        y = U @ (_scalar_function(f)(w) * e1)
    else:
        if f != "exp":
            raise MatFunError(
                "nonsymmetric operators support exp only; sqrt/log need a "
                "symmetric positive definite operator (contour method)")
        basis = arnoldi(op, b, m)
        y = scipy.linalg.expm(basis.H)[:, 0]
    return basis.beta * (basis.V @ y)


# ---------------------------------------------------------------------------
# contour integration on [m_low, M_high]
# ---------------------------------------------------------------------------

class ContourQuadrature:
    """Midpoint rule on the image of a horizontal line under the
    elliptic-function map taking a rectangle onto the slit plane; the image
    is a closed contour separating [m_low, M_high] from (-inf, 0].

    Each of the n_points nodes costs one shifted solve; conjugate symmetry
    supplies the other half of the contour.
    """

    def __init__(self, m_low, M_high, n_points):
        if not 0.0 < m_low <= M_high:
            raise ValueError("need 0 < m_low <= M_high")
        if n_points < 1:
            raise ValueError("n_points must be >= 1")
        self.m_low = float(m_low)
        self.M_high = float(M_high)
        self.n_points = int(n_points)

        r = math.sqrt(M_high / m_low)
        kappa = (r - 1.0) / (r + 1.0)
        mell = kappa * kappa
        mpell = 4.0 * r / (r + 1.0) ** 2  # 1 - kappa^2, stable near cond 1
        K = ellipkm1(mpell)
        Kp = ellipkm1(mell)
        u = -K + (np.arange(n_points) + 0.5) * (2.0 * K / n_points)
        s, c, d, _ = ellipj(u, mell)
        s1, c1, d1, _ = ellipj(Kp / 2.0, mpell)
        denom = c1 ** 2 + mell * (s * s1) ** 2
        sn = (s * d1 + 1j * c * d * s1 * c1) / denom
        cn = (c * c1 - 1j * s * d * s1 * d1) / denom
        dn = (d * c1 * d1 - 1j * mell * s * c * s1) / denom
        kinv = 1.0 / kappa
        geo = math.sqrt(m_low * M_high)
        self.nodes = geo * (kinv + sn) / (kinv - sn)
        self._dzdt = 2.0 * geo * kinv * cn * dn / (kinv - sn) ** 2
        self._h = 2.0 * K / n_points

    def weights(self, f):
        """Quadrature weights including the function values; the transform
        result is Im(sum_j w_j x_j) with x_j the shifted solves."""
        fz = _scalar_function(f)(self.nodes.astype(complex))
        return -(self._h / math.pi) * fz * self._dzdt


def cocg_solve(op, shift, b, tol=1e-12, max_iters=1000):
    """Conjugate-gradient iteration for the complex symmetric system
    (shift I - A) x = b using unconjugated inner products; A is accessed
    through 2 real matvecs per step."""
    b = np.asarray(b, dtype=np.float64).astype(complex)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)

    def matvec(v):
        av = op.apply(v.real) + 1j * op.apply(v.imag)
        return shift * v - av

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rho = np.dot(r, r)
    for _ in range(max_iters):
        q = matvec(p)
        pq = np.dot(p, q)
        if pq == 0.0:
            break
        alpha = rho / pq
        x += alpha * p
        r -= alpha * q
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        rho_new = np.dot(r, r)
        if rho == 0.0:
            break
        p = r + (rho_new / rho) * p
        rho = rho_new
    raise ConvergenceError(
        f"shifted solve at z={shift:.6g} stalled with relative residual "
        f"{np.linalg.norm(r) / bnorm:.3e}")


class _ContourEngine:
    """Nodes, weights and (optionally cached LU) solvers for one f/interval."""

    def __init__(self, op, f, n_points, interval, tol=1e-12, max_iters=1000):
        m_low, M_high = interval
        self.op = op
        self.f = f
        self.quad = ContourQuadrature(m_low, M_high, n_points)
        self.w = self.quad.weights(f)
        self.tol = tol
        self.max_iters = max_iters
        self._lus = None
        self._lock = threading.Lock()

    def _factorize(self):
        with self._lock:
            if self._lus is None and self.op.explicit is not None:
                n = self.op.n
                eye = sp.identity(n, format="csc", dtype=complex)
                A = self.op.explicit.tocsc().astype(complex)
                self._lus = [spla.splu(z * eye - A) for z in self.quad.nodes]

    def apply(self, b):
        b = np.asarray(b, dtype=np.float64)
        if self.op.explicit is not None:
            self._factorize()
            acc = np.zeros(self.op.n, dtype=complex)
            bc = b.astype(complex)
            for lu, wj in zip(self._lus, self.w):
                acc += wj * lu.solve(bc)
            return acc.imag
        acc = np.zeros(self.op.n, dtype=complex)
        worst = None
        for z, wj in zip(self.quad.nodes, self.w):
            try:
                acc += wj * cocg_solve(self.op, z, b, self.tol, self.max_iters)
            except ConvergenceError as err:
                worst = err
        if worst is not None:
            raise worst
        return acc.imag


def contour_apply(op, b, f, n_points, interval, tol=1e-12, max_iters=1000):
    """Evaluate f(A) b, f in {sqrt, log}, for a symmetric positive definite
    operator with spectrum inside interval = (m_low, M_high).

    Each quadrature node costs one shifted solve: a cached sparse
    factorization when the matrix is explicitly available, otherwise a
    conjugate-gradient iteration on the shifted system.
    """
    if f not in ("sqrt", "log"):
        raise ValueError("contour_apply supports f in {'sqrt', 'log'}")
    engine = _ContourEngine(op, f, n_points, interval, tol, max_iters)
    return engine.apply(b)


# ---------------------------------------------------------------------------
# spectrum estimation and the operator wrapper
# ---------------------------------------------------------------------------

SpectrumInterval = namedtuple("SpectrumInterval", "low high converged")


def estimate_spectrum_interval(op, probe_steps=30, seed=0):
    """Bracket the spectrum of a symmetric operator with Lanczos extremal
    Ritz values, widened by 10% safety factors; the flag reports whether the
    extremal pairs look converged."""
    if not op.symmetric_hint:
        raise ValueError("spectrum estimation requires a symmetric operator")
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(op.n)
    basis = lanczos(op, b, probe_steps)
    w, U = np.linalg.eigh(basis.H)
    last = U[-1, :]
    res_low = basis.next_beta * abs(last[0])
    res_high = basis.next_beta * abs(last[-1])
    scale = max(abs(w[0]), abs(w[-1]), 1e-300)
    converged = bool(max(res_low, res_high) <= 1e-6 * scale or basis.breakdown)
    low = 0.9 * w[0] if w[0] >= 0 else 1.1 * w[0]
    high = 1.1 * w[-1] if w[-1] >= 0 else 0.9 * w[-1]
    return SpectrumInterval(float(low), float(high), converged)


def _shifted_by_one(op):
    """Operator x -> x + A x; inner matvecs still count on A."""
    explicit = None
    if op.explicit is not None:
        explicit = (sp.identity(op.n, format="csr") + op.explicit).tocsr()
    shifted = LinearOperator(op.n, lambda x: x + op.apply(x),
                             symmetric=op.symmetric_hint)
    shifted.explicit = explicit
    return shifted


def matfun_operator(A, spec):
    """Wrap f(A) as a LinearOperator so recovery algorithms consume it as a
    plain matvec.

    Outer applies count on the returned operator; the inner Krylov/CG
    matvecs accrue on A's own counter (direct shifted factorizations use no
    inner matvecs).
    """
    if spec.method == "poly_krylov":
        m = spec.krylov_steps
        fun = spec.f

        def apply_krylov(x):
            return krylov_apply(A, x, fun, m)

        return LinearOperator(A.n, apply_krylov, symmetric=A.symmetric_hint)

    # contour
    if spec.f in ("sqrt1p", "log1p"):
        inner = _shifted_by_one(A)
        base_f = "sqrt" if spec.f == "sqrt1p" else "log"
        shift = 1.0
    else:
        inner = A
        base_f = spec.f
        shift = 0.0
    if spec.spectrum_interval is not None:
        lo, hi = spec.spectrum_interval
    else:
        est = estimate_spectrum_interval(A)
        lo, hi = est.low, est.high
    interval = (lo + shift, hi + shift)
    if interval[0] <= 0:
        raise DomainError(
            f"{base_f} needs a positive spectrum; estimated interval "
            f"{interval} touches (-inf, 0]")
    engine = _ContourEngine(inner, base_f, spec.contour_points, interval)
    return LinearOperator(A.n, engine.apply, symmetric=A.symmetric_hint)
