"""matrecov: recover sparse or banded matrices -- and matrix functions f(A)
with off-diagonal decay -- from black-box matrix-vector products."""

from .banded_recovery import (
    BandSpec,
    BandedRecoveryReport,
    alias_shift_asymmetric,
    alias_shift_banded,
    alias_shift_symmetric,
    bamram_error_estimate,
    bamram_recover,
    probe_apply,
    probing_matrix,
)
from .core import (
    BandedMatrix,
    DecayProfile,
    LinearOperator,
    MatrixMarketError,
    SparseMatrix,
    matrix_market_read,
    matrix_market_write,
    operator_norm_2,
    scale_to_norm,
)
from .greedy import (
    CsSolution,
    NihtConfig,
    best_k_term,
    compression_error,
    hard_threshold,
    niht_solve,
)
from .kronecker import (
    KronExpFactors,
    KronSumRecovery,
    ShufflePermutation,
    kron_exp_recover,
    kron_sum_recover,
)
from .matfun import (
    ConvergenceError,
    ContourQuadrature,
    DomainError,
    KrylovBasis,
    MatFunError,
    MatFunSpec,
    arnoldi,
    contour_apply,
    estimate_spectrum_interval,
    krylov_apply,
    lanczos,
    matfun_operator,
)
from .sensing import SensingOperator, sensing_build
from .sparse_recovery import (
    RecoveryReport,
    SpamramConfig,
    default_measurement_count,
    load_measurements,
    recovery_error_bound,
    save_measurements,
    solve_rows,
    spamram_error_estimate,
    spamram_recover,
)
from .experiments import (
    BandedSource,
    ExperimentSpec,
    FileSource,
    SparseSource,
    parse_matrix_spec,
    run_experiment,
    synthesize_matrix,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
