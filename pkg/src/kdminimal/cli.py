"""Command-line entry point: ``kdminimal <subcommand> ...``.

Exit status is 0 on success, 1 when ``--strict`` is set and some verdict is
indeterminate, and 2 on bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core_types import (
    MATRIX_FILE_SCHEMA,
    KDError,
    Seed,
    haar_sample,
    matrix_to_json,
    random_density_matrix,
    read_matrix,
    validate_density,
    validate_unitary,
)
from .experiments import (
    OracleMismatch,
    dumps,
    records_to_csv,
    records_to_jsonl,
    run_cross_validate,
    run_haar_scan,
    run_perturbation,
    run_structured_scan,
    structured_unitary,
)
from .kd import is_kd_positive, kd_marginals, kd_symbol
from .minimality import goodness_polynomial, is_minimal
from .polytope import membership
from .rank import RankPolicy

SEED_ENV = "KDG_DEFAULT_SEED"

log = logging.getLogger("kdminimal")


class UsageError(Exception):
    pass


def parse_range(text: str) -> list[int]:
    """``"2..5"`` -> [2, 3, 4, 5]; ``"2,4,7"`` -> [2, 4, 7]; ``"3"`` -> [3]."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dimension range {text!r}; use e.g. 2..5 or 2,3,4")
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"dimension range {text!r} must list positive integers")
    return out


def parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    def default(value):
        return argparse.SUPPRESS if suppress else value

    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=default(None),
                   help=f"master seed (default: ${SEED_ENV}, else 0)")
    g.add_argument("--tol-omega", type=float, default=default(RankPolicy.tol_omega),
                   help="entries with |U_ij| <= this count as zero")
    g.add_argument("--rank-safety", type=float, default=default(RankPolicy.rank_safety),
                   help="safety factor c in the rank threshold c * eps * max(sigma_max, 1) * d^2")
    g.add_argument("--gap-min", type=float, default=default(RankPolicy.gap_min),
                   help="minimum singular-value gap for a confident verdict")
    g.add_argument("--out", type=Path, default=default(None), help="write records here")
    g.add_argument("--format", choices=("jsonl", "csv"), default=default("jsonl"))
    g.add_argument("--jobs", type=int, default=default(1), help="worker processes for scans")
    g.add_argument("--strict", action="store_true", default=default(False),
                   help="exit 1 if any verdict is indeterminate")
    g.add_argument("--timing", action="store_true", default=default(False),
                   help="record wall time per trial (makes output non-reproducible)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdminimal",
        description="Test whether the Kirkwood-Dirac-positive states of a basis pair "
        "form the minimal polytope conv(A u B).",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan-haar", parents=[common], help="Monte Carlo over Haar unitaries")
    p.add_argument("--d", type=parse_range, required=True)
    p.add_argument("--trials", type=int, default=100)

    p = sub.add_parser("scan-structured", parents=[common], help="scan a structured family")
    p.add_argument("--family", choices=("dft", "witness", "identity"), required=True)
    p.add_argument("--d", type=parse_range, required=True)

    p = sub.add_parser("perturb", parents=[common], help="openness probe around a unitary")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--family", choices=("dft", "witness", "identity"))
    src.add_argument("--matrix", type=Path)
    p.add_argument("--d", type=int, help="dimension for --family")
    p.add_argument("--eps", type=parse_floats, default=[1e-3])
    p.add_argument("--trials", type=int, default=100)

    p = sub.add_parser("cross-validate", parents=[common],
                       help="compare the C^U kernel with the direct Im Q kernel")
    p.add_argument("--d", type=parse_range, required=True)
    p.add_argument("--trials", type=int, default=100)

    p = sub.add_parser("check", parents=[common], help="minimality report for a unitary file")
    p.add_argument("matrix", type=Path)

    p = sub.add_parser("membership", parents=[common], help="is a state in conv(A u B)?")
    p.add_argument("state", type=Path)
    p.add_argument("matrix", type=Path)
    p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("kd", parents=[common], help="KD distribution and positivity of a state")
    p.add_argument("state", type=Path)
    p.add_argument("matrix", type=Path)
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("emit", parents=[common], help="write a unitary or state matrix file")
    p.add_argument("kind", choices=("witness", "dft", "identity", "haar", "mixed", "random-state"))
    p.add_argument("--d", type=int, required=True)
    return parser


def resolve_seed(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}")
    return 0


def _emit(args, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)


def _emit_records(args, records) -> None:
    if args.format == "csv":
        text = records_to_csv(records)
    else:
        text = records_to_jsonl(records)
    _emit(args, text)


def _complex_grid(M) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(M)]


def _strict_fail(args, verdicts) -> bool:
    return bool(args.strict and any(v == "indeterminate" for v in verdicts))


def run(args) -> int:
    policy = RankPolicy(args.tol_omega, args.rank_safety, args.gap_min)
    seed = resolve_seed(args.seed)
    cmd = args.command

    if cmd == "scan-haar":
        if args.trials < 1:
            raise UsageError("--trials must be >= 1")
        summary, records = run_haar_scan(args.d, args.trials, seed, policy, args.jobs, args.timing)
        if args.out is not None:
            _emit_records(args, records)
        print(summary.to_json())
        return 1 if _strict_fail(args, [r.verdict for r in records]) else 0

    if cmd == "scan-structured":
        records = run_structured_scan(args.family, args.d, policy, args.timing)
        _emit_records(args, records)
        return 1 if _strict_fail(args, [r.verdict for r in records]) else 0

    if cmd == "perturb":
        if args.matrix is not None:
            U = validate_unitary(read_matrix(args.matrix))
        else:
            if args.d is None:
                raise UsageError("perturb --family needs --d")
            U = structured_unitary(args.family, args.d)
        records, summary = run_perturbation(U, args.eps, args.trials, seed, policy, args.timing)
        if args.out is not None:
            _emit_records(args, records)
        print(dumps(summary))
        return 1 if _strict_fail(args, [r.verdict for r in records]) else 0

    if cmd == "cross-validate":
        records = []
        for d in args.d:
            records.extend(run_cross_validate(d, args.trials, seed, policy))
        _emit(args, records_to_jsonl(records))
        return 0

    if cmd == "check":
        U = validate_unitary(read_matrix(args.matrix))
        report = is_minimal(U, policy)
        out = report.to_dict()
        if U.d >= 2:
            g = goodness_polynomial(U.entries)
            out.update(c_value=g.value, c_log_abs=g.log_abs, c_sign=g.sign)
        _emit(args, dumps(out) + "\n")
        return 1 if _strict_fail(args, [report.verdict]) else 0

    if cmd == "membership":
        rho = validate_density(read_matrix(args.state))
        U = validate_unitary(read_matrix(args.matrix))
        _emit(args, dumps(membership(rho.entries, U.entries, tol=args.tol).to_dict()) + "\n")
        return 0

    if cmd == "kd":
        rho = validate_density(read_matrix(args.state))
        U = validate_unitary(read_matrix(args.matrix))
        Q = kd_symbol(rho, U.entries)
        pos = is_kd_positive(rho, U.entries, args.tol)
        marg = kd_marginals(Q, rho.entries, U.entries)
        out = {
            "d": U.d,
            "Q": _complex_grid(Q.entries),
            "is_kd_positive": pos.is_kd_positive,
            "max_imag": pos.max_imag,
            "min_real": pos.min_real,
            "tol": pos.tol,
            "marginal_residuals": {
                "rows": marg.row_residual,
                "columns": marg.column_residual,
                "total": marg.total_residual,
            },
        }
        _emit(args, dumps(out) + "\n")
        return 0

    if cmd == "emit":
        d = args.d
        if d < 1:
            raise UsageError("--d must be >= 1")
        if args.kind in ("witness", "dft", "identity"):
            M = structured_unitary(args.kind, d).entries
        elif args.kind == "haar":
            M = haar_sample(d, Seed(seed, 0)).entries
        elif args.kind == "mixed":
            M = np.eye(d) / d
        else:
            M = random_density_matrix(d, Seed(seed, 0)).entries
        _emit(args, matrix_to_json(M))
        return 0

    raise UsageError(f"unknown command {cmd!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except OracleMismatch as exc:
        print(f"kdminimal: {exc}", file=sys.stderr)
        print(exc.record.to_json(), file=sys.stderr)
        return 1
    except (KDError, UsageError) as exc:
        print(f"kdminimal: error: {exc}", file=sys.stderr)
        print("matrix/state files use this schema:", file=sys.stderr)
        print(json.dumps(MATRIX_FILE_SCHEMA, indent=2), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
