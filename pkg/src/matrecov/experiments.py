"""Experiment runner: synthetic banded/sparse matrices (or MatrixMarket
files), a function of the matrix, a recovery algorithm, and an s-sweep,
emitting one CSV row per sweep point:

    s, relative_error, delta_RE, matvecs, seconds

The relative error is measured against a dense oracle (n <= 4096) and left
blank when the oracle is disabled; timing excludes matrix synthesis, oracle
evaluation and file I/O.
"""

import csv
import io
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .banded_recovery import BandSpec, bamram_error_estimate, bamram_recover
from .core import (
    DENSE_NORM_LIMIT,
    LinearOperator,
    SparseMatrix,
    matrix_market_read,
    operator_norm_2,
    scale_to_norm,
)
from .matfun import MatFunSpec, estimate_spectrum_interval, matfun_operator
from .sparse_recovery import SpamramConfig, spamram_recover

FUNCTIONS = ("identity", "exp", "sqrt", "log", "sqrt1p", "log1p")
CSV_COLUMNS = ("s", "relative_error", "delta_RE", "matvecs", "seconds")


@dataclass(frozen=True)
class BandedSource:
    n: int
    k: int
    norm: float


@dataclass(frozen=True)
class SparseSource:
    n: int
    density: float
    norm: float


@dataclass(frozen=True)
class FileSource:
    path: str


def parse_matrix_spec(text):
    """Parse 'banded:n,k,norm' | 'sparse:n,density,norm' | 'mm:PATH'."""
    kind, _, rest = text.partition(":")
    if not rest:
        raise ValueError(f"malformed matrix spec {text!r}")
    if kind == "banded":
        n, k, norm = rest.split(",")
        return BandedSource(int(n), int(k), float(norm))
    if kind == "sparse":
        n, density, norm = rest.split(",")
        return SparseSource(int(n), float(density), float(norm))
    if kind == "mm":
        return FileSource(rest)
    raise ValueError(f"unknown matrix source {kind!r}")


def synthesize_matrix(source, seed=0):
    """Build the experiment matrix; synthetic outputs are symmetric and
    rescaled to the requested 2-norm."""
    if isinstance(source, FileSource):
        return matrix_market_read(source.path)
    rng = np.random.default_rng(seed)
    if isinstance(source, BandedSource):
        n, k = source.n, source.k
        if not 1 <= k < n:
            raise ValueError("need 1 <= k < n")
        rows, cols, vals = [], [], []
        for off in range(k + 1):
            d = rng.standard_normal(n - off)
            idx = np.arange(n - off)
            rows.append(idx)
            cols.append(idx + off)
            vals.append(d)
            if off > 0:
                rows.append(idx + off)
                cols.append(idx)
                vals.append(d)
        M = SparseMatrix.from_coo(n, n, np.concatenate(rows),
                                  np.concatenate(cols), np.concatenate(vals))
        return scale_to_norm(M, source.norm)
    if isinstance(source, SparseSource):
        n, density = source.n, source.density
        if not 0.0 < density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        target = max(1, round(density * n * n / 2))
        rows = rng.integers(0, n, size=target)
        cols = rng.integers(0, n, size=target)
        vals = rng.standard_normal(target)
        lo = np.minimum(rows, cols)
        hi = np.maximum(rows, cols)
        off = lo != hi
        all_rows = np.concatenate([lo, hi[off]])
        all_cols = np.concatenate([hi, lo[off]])
        all_vals = np.concatenate([vals, vals[off]])
        M = SparseMatrix.from_coo(n, n, all_rows, all_cols, all_vals)
        return scale_to_norm(M, source.norm)
    raise TypeError(f"unknown source {source!r}")


@dataclass
class ExperimentSpec:
    """One experiment: matrix source, function, algorithm and an s-sweep."""

    source: object
    function: str
    algorithm: str
    sweep: list
    seed: int = 0
    krylov_steps: int = 20
    contour_points: int = 50
    k_override: int | None = None
    sensing_kind: str = "gaussian"
    oracle: str = "dense"
    workers: int = 1

    def __post_init__(self):
        if self.function not in FUNCTIONS:
            raise ValueError(f"unknown function {self.function!r}")
        if self.algorithm not in ("spamram", "bamram"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.oracle not in ("dense", "none"):
            raise ValueError("oracle must be 'dense' or 'none'")
        self.sweep = [int(s) for s in self.sweep]
        if not self.sweep or any(b <= a for a, b in zip(self.sweep, self.sweep[1:])):
            raise ValueError("sweep must be nonempty and strictly increasing")


def _dense_oracle(A_dense, function, symmetric):
    if function == "identity":
        return A_dense
    if symmetric:
        w, V = np.linalg.eigh(A_dense)
        from .matfun import _check_domain, _scalar_function
        _check_domain(function, w)
        return (V * _scalar_function(function)(w)) @ V.T
    if function == "exp":
        return scipy.linalg.expm(A_dense)
    raise ValueError(f"dense oracle for {function} requires a symmetric matrix")


def run_experiment(spec):
    """Run the sweep and return one row dict per sweep point."""
    A = synthesize_matrix(spec.source, spec.seed)
    n = A.n_rows
    if any(s > n for s in spec.sweep):
        raise ValueError("sweep contains s > n")
    S = A.to_scipy()
    symmetric = (S != S.T).nnz == 0
    A_op = LinearOperator.from_sparse(S, symmetric=symmetric)

    oracle = None
    if spec.oracle == "dense":
        if n > DENSE_NORM_LIMIT:
            raise ValueError(
                f"dense oracle infeasible for n={n}; pass oracle='none'")
        oracle = _dense_oracle(S.toarray(), spec.function, symmetric)
        oracle_norm = operator_norm_2(oracle)

    interval = None
    if spec.function in ("sqrt", "log", "sqrt1p", "log1p"):
        est = estimate_spectrum_interval(A_op, seed=spec.seed)
        interval = (est.low, est.high)

    rows = []
    for index, s in enumerate(spec.sweep):
        if spec.function == "identity":
            op = LinearOperator.from_sparse(S, symmetric=symmetric)
        else:
            method = "poly_krylov" if spec.function == "exp" else "contour"
            mf = MatFunSpec(spec.function, method=method,
                            krylov_steps=spec.krylov_steps,
                            contour_points=spec.contour_points,
                            spectrum_interval=interval)
            op = matfun_operator(A_op, mf)

        t0 = time.perf_counter()
        if spec.algorithm == "bamram":
            band = BandSpec.symmetric_from_block_size(s)
            B_hat, report = bamram_recover(op, band)
            matvecs = report.matvecs_used
            delta = bamram_error_estimate(
                B_hat, op, n_probes=5, seed=spec.seed + 7919 + index)
        else:
            k = spec.k_override if spec.k_override else max(1, s // 8)
            cfg = SpamramConfig(k=k, s=s, sensing_kind=spec.sensing_kind,
                                seed=spec.seed, workers=spec.workers)
            report = spamram_recover(op, cfg)
            B_hat = report.B_hat
            matvecs = report.matvecs_used
            delta = report.delta_RE
        seconds = time.perf_counter() - t0

        err = None
        if oracle is not None:
            err = operator_norm_2(B_hat.to_dense() - oracle) / oracle_norm
        rows.append({"s": s, "relative_error": err, "delta_RE": delta,
                     "matvecs": matvecs, "seconds": seconds})
    return rows


def format_csv(rows):
    """Serialize experiment rows with the fixed column set."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        err = "" if row["relative_error"] is None else \
            np.format_float_scientific(row["relative_error"], precision=17)
        writer.writerow([
            row["s"], err,
            np.format_float_scientific(row["delta_RE"], precision=17),
            row["matvecs"], f"{row['seconds']:.6f}",
        ])
    return buf.getvalue()


def write_csv(rows, path):
    with open(path, "w") as fh:
        fh.write(format_csv(rows))
