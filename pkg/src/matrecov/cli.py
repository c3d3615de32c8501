"""Command-line runner: `recover --algo ... --matrix ... --sweep ... --out FILE`.

Exit codes: 0 success, 1 input error, 2 numerical failure.  The environment
variable RECOVER_WORKERS sets the row-recovery worker count.
"""

import argparse
import os
import sys

import numpy as np

from .experiments import ExperimentSpec, parse_matrix_spec, run_experiment, write_csv
from .matfun import MatFunError

_FUNCTION_ALIASES = {"id": "identity"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="recover",
                description="Recover a matrix or matrix function from matvecs")
    p.add_argument("--algo", required=True, choices=["spamram", "bamram"])
    p.add_argument("--matrix", required=True,
                   help="banded:n,k,norm | sparse:n,density,norm | mm:PATH")
    p.add_argument("--function", default="id",
                   choices=["id", "exp", "sqrt", "log", "sqrt1p", "log1p"])
    p.add_argument("--sweep", required=True,
                   help="comma-separated measurement counts, e.g. 5,9,13")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--krylov-steps", type=int, default=20)
    p.add_argument("--contour-points", type=int, default=50)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--k", type=int, default=None,
                   help="per-row sparsity override (spamram; default s/8)")
    p.add_argument("--sensing", default="gaussian",
                   choices=["gaussian", "dct", "sparse"])
    p.add_argument("--oracle", default="dense", choices=["dense", "none"])
    return p


_SENSING = {"gaussian": "gaussian", "dct": "subsampled_dct",
            "sparse": "sparse_rademacher"}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        workers = int(os.environ.get("RECOVER_WORKERS", "1"))
        sweep = [int(tok) for tok in args.sweep.split(",") if tok]
        spec = ExperimentSpec(
            source=parse_matrix_spec(args.matrix),
            function=_FUNCTION_ALIASES.get(args.function, args.function),
            algorithm=args.algo,
            sweep=sweep,
            seed=args.seed,
            krylov_steps=args.krylov_steps,
            contour_points=args.contour_points,
            k_override=args.k,
            sensing_kind=_SENSING[args.sensing],
            oracle=args.oracle,
            workers=max(1, workers),
        )
    except (ValueError, OSError) as err:
        print(f"recover: input error: {err}", file=sys.stderr)
        return 1
    try:
        rows = run_experiment(spec)
    except (ValueError, OSError) as err:
        print(f"recover: input error: {err}", file=sys.stderr)
        return 1
    except (MatFunError, np.linalg.LinAlgError) as err:
        print(f"recover: numerical failure: {err}", file=sys.stderr)
        return 2
    try:
        write_csv(rows, args.out)
    except OSError as err:
        print(f"recover: input error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
