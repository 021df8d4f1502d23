"""Monte Carlo and structured scans of the minimality verdict, with JSONL/CSV records.

Every trial derives its randomness from ``Seed(seed, trial_index)`` alone, so
results do not depend on execution order or on the number of worker processes.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Literal, Sequence

import numpy as np

from .core_types import Seed, dft_unitary, haar_sample, min_abs_entry, random_hermitian, validate_unitary
from .kd import kd_real_dimension_direct
from .minimality import goodness_polynomial, is_minimal, kernel_dimension, restricted_margin, witness_unitary
from .rank import RankPolicy

log = logging.getLogger(__name__)

__all__ = [
    "TrialRecord",
    "ScanSummary",
    "CrossValidationRecord",
    "OracleMismatch",
    "evaluate",
    "run_haar_scan",
    "run_structured_scan",
    "run_perturbation",
    "perturb",
    "fit_drift_constant",
    "run_cross_validate",
    "cross_check",
    "summarize",
    "structured_unitary",
    "records_to_jsonl",
    "records_to_csv",
    "record_from_json",
    "TRIAL_RECORD_SCHEMA",
]

Family = Literal["haar", "dft", "witness", "identity", "perturbed", "file"]
VERDICTS = ("minimal", "non_minimal", "indeterminate", "not_applicable")


class OracleMismatch(RuntimeError):
    def __init__(self, record: "CrossValidationRecord"):
        super().__init__(
            f"kernel dimension via C^U ({record.c_route_dim}) disagrees with the direct "
            f"route ({record.direct_dim}) at d={record.d}, stream {record.stream_index}"
        )
        self.record = record


# -- JSON helpers ----------------------------------------------------------------


def _encode(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, (list, tuple)):
        return [_encode(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _encode(v) for k, v in x.items()}
    if isinstance(x, np.generic):
        return _encode(x.item())
    if isinstance(x, np.ndarray):
        return _encode(x.tolist())
    return x


def _decode_float(x):
    if isinstance(x, str):
        return float(x)
    return x


def dumps(obj) -> str:
    """Strict JSON; non-finite floats become the strings "inf", "-inf", "nan"."""
    return json.dumps(_encode(obj), allow_nan=False)


@dataclass
class TrialRecord:
    d: int
    seed: int | None
    stream_index: int | None
    family: str
    m_min: float
    in_omega: bool
    kernel_dim: int
    gap_ratio: float
    margin: float
    verdict: str
    c_sign: int | None
    c_log_abs: float | None
    sv_spectrum: list[float] = field(default_factory=list)
    epsilon: float | None = None
    margin_drift: float | None = None
    wall_time_ms: float | None = None

    def to_json(self) -> str:
        return dumps(asdict(self))


_FLOAT_FIELDS = {"m_min", "gap_ratio", "margin", "c_log_abs", "epsilon", "margin_drift", "wall_time_ms"}


def record_from_json(line: str) -> TrialRecord:
    obj = json.loads(line)
    for k in _FLOAT_FIELDS:
        if obj.get(k) is not None:
            obj[k] = _decode_float(obj[k])
    obj["sv_spectrum"] = [_decode_float(v) for v in obj.get("sv_spectrum", [])]
    return TrialRecord(**obj)


_num_or_special = {
    "oneOf": [{"type": "number"}, {"type": "string", "enum": ["inf", "-inf", "nan"]}]
}
_nullable = lambda schema: {"oneOf": [schema, {"type": "null"}]}  # noqa: E731

TRIAL_RECORD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": [f.name for f in fields(TrialRecord)],
    "properties": {
        "d": {"type": "integer", "minimum": 1},
        "seed": _nullable({"type": "integer", "minimum": 0}),
        "stream_index": _nullable({"type": "integer", "minimum": 0}),
        "family": {"enum": ["haar", "dft", "witness", "identity", "perturbed", "file"]},
        "m_min": {"type": "number", "minimum": 0},
        "in_omega": {"type": "boolean"},
        "kernel_dim": {"type": "integer", "minimum": 0},
        "gap_ratio": _num_or_special,
        "margin": _num_or_special,
        "verdict": {"enum": list(VERDICTS)},
        "c_sign": _nullable({"enum": [-1, 0, 1]}),
        "c_log_abs": _nullable(_num_or_special),
        "sv_spectrum": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "epsilon": _nullable({"type": "number", "minimum": 0}),
        "margin_drift": _nullable({"type": "number"}),
        "wall_time_ms": _nullable({"type": "number", "minimum": 0}),
    },
}


def records_to_jsonl(records: Iterable) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def records_to_csv(records: Sequence[TrialRecord]) -> str:
    """Flat CSV; each spectrum is cut to its three smallest and three largest values."""
    names = [f.name for f in fields(TrialRecord) if f.name != "sv_spectrum"]
    sv_cols = ["sv_max1", "sv_max2", "sv_max3", "sv_min3", "sv_min2", "sv_min1"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names + sv_cols)
    for r in records:
        row = [_encode(getattr(r, n)) for n in names]
        s = list(r.sv_spectrum)
        top = (s[:3] + [None] * 3)[:3]
        bottom = ([None] * 3 + s[-3:])[-3:]
        writer.writerow(["" if v is None else v for v in row + top + bottom])
    return buf.getvalue()


# -- single evaluations ----------------------------------------------------------


def evaluate(
    U,
    family: str,
    policy: RankPolicy,
    seed: Seed | None = None,
    timing: bool = False,
) -> TrialRecord:
    """Run the full minimality check on one unitary and package it as a record."""
    t0 = time.perf_counter()
    U = validate_unitary(U)
    rep = is_minimal(U, policy)
    if U.d >= 2:
        g = goodness_polynomial(U.entries)
        c_sign, c_log = g.sign, g.log_abs
    else:
        c_sign, c_log = None, None
    wall = (time.perf_counter() - t0) * 1e3 if timing else None
    return TrialRecord(
        d=U.d,
        seed=None if seed is None else seed.seed,
        stream_index=None if seed is None else seed.stream_index,
        family=family,
        m_min=rep.m_min,
        in_omega=rep.in_omega,
        kernel_dim=rep.kernel_dim,
        gap_ratio=rep.gap_ratio,
        margin=rep.margin,
        verdict=rep.verdict,
        c_sign=c_sign,
        c_log_abs=c_log,
        sv_spectrum=[float(x) for x in rep.sv_spectrum],
        wall_time_ms=wall,
    )


def _haar_task(args) -> TrialRecord:
    d, seed, index, policy, timing = args
    s = Seed(seed, index)
    return evaluate(haar_sample(d, s), "haar", policy, s, timing)


def _pool_map(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


# -- summaries -------------------------------------------------------------------


@dataclass
class ScanSummary:
    per_d: dict
    trials: int
    fraction_minimal: float
    min_margin: float
    config: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return dumps(self.to_dict())


def summarize(records: Sequence[TrialRecord], config: dict | None = None) -> ScanSummary:
    per_d: dict = {}
    for r in records:
        s = per_d.setdefault(
            str(r.d),
            {
                "trials": 0,
                "counts": {v: 0 for v in VERDICTS},
                "all_in_omega": True,
                "kernel_dims": [],
                "min_gap_ratio": math.inf,
                "min_margin": math.inf,
            },
        )
        s["trials"] += 1
        s["counts"][r.verdict] += 1
        s["all_in_omega"] = s["all_in_omega"] and r.in_omega
        if r.kernel_dim not in s["kernel_dims"]:
            s["kernel_dims"] = sorted(s["kernel_dims"] + [r.kernel_dim])
        s["min_gap_ratio"] = min(s["min_gap_ratio"], r.gap_ratio)
        s["min_margin"] = min(s["min_margin"], r.margin)
    for s in per_d.values():
        s["fraction_minimal"] = s["counts"]["minimal"] / s["trials"]
    n = len(records)
    n_min = sum(r.verdict == "minimal" for r in records)
    return ScanSummary(
        per_d=per_d,
        trials=n,
        fraction_minimal=n_min / n if n else 0.0,
        min_margin=min((r.margin for r in records), default=math.inf),
        config=dict(config or {}),
    )


# -- scans -----------------------------------------------------------------------


def run_haar_scan(
    d_list: Sequence[int],
    trials: int,
    seed: int = 0,
    policy: RankPolicy | None = None,
    jobs: int = 1,
    timing: bool = False,
) -> tuple[ScanSummary, list[TrialRecord]]:
    """Minimality of Haar-random transition matrices; trial t at every d uses ``Seed(seed, t)``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    policy = policy or RankPolicy()
    tasks = [(d, seed, t, policy, timing) for d in d_list for t in range(trials)]
    records = _pool_map(_haar_task, tasks, jobs)
    config = {"d_list": list(d_list), "trials": trials, "seed": seed, "policy": policy.as_dict()}
    return summarize(records, config), records


def structured_unitary(family: str, d: int):
    if family == "dft":
        return dft_unitary(d)
    if family == "witness":
        return witness_unitary(d)
    if family == "identity":
        return validate_unitary(np.eye(d))
    raise ValueError(f"unknown structured family {family!r}")


def run_structured_scan(
    family: str, d_range: Sequence[int], policy: RankPolicy | None = None, timing: bool = False
) -> list[TrialRecord]:
    if not d_range:
        raise ValueError("d_range must be nonempty")
    policy = policy or RankPolicy()
    return [evaluate(structured_unitary(family, d), family, policy, timing=timing) for d in d_range]


def perturb(U, epsilon: float, H) -> np.ndarray:
    """``U exp(i eps H)`` with the exponential taken through the eigendecomposition of H."""
    lam, V = np.linalg.eigh(H)
    return np.asarray(U) @ (V * np.exp(1j * epsilon * lam)) @ V.conj().T


def run_perturbation(
    U_source,
    epsilon_list: Sequence[float],
    trials: int,
    seed: int = 0,
    policy: RankPolicy | None = None,
    timing: bool = False,
) -> tuple[list[TrialRecord], dict]:
    """Verdicts for ``U exp(i eps H_t)``, H_t random Hermitian with unit HS norm.

    The direction H_t depends only on ``Seed(seed, t)``, so the same directions
    are reused across every epsilon. Returns the records and a summary holding
    the minimal fraction per epsilon and the least-squares slope of
    |margin drift| against epsilon.
    """
    policy = policy or RankPolicy()
    U = validate_unitary(U_source)
    if any(e < 0 for e in epsilon_list):
        raise ValueError("epsilon values must be nonnegative")
    base_margin = restricted_margin(U.entries)
    directions = [random_hermitian(U.d, Seed(seed, t)) for t in range(trials)]
    records = []
    for eps in epsilon_list:
        for t, H in enumerate(directions):
            rec = evaluate(perturb(U.entries, eps, H), "perturbed", policy, Seed(seed, t), timing)
            rec.epsilon = float(eps)
            rec.margin_drift = rec.margin - base_margin
            records.append(rec)
    per_eps = {}
    for eps in epsilon_list:
        rs = [r for r in records if r.epsilon == float(eps)]
        per_eps[repr(float(eps))] = {
            "trials": len(rs),
            "fraction_minimal": sum(r.verdict == "minimal" for r in rs) / len(rs) if rs else 0.0,
            "max_abs_drift": max((abs(r.margin_drift) for r in rs), default=0.0),
        }
    summary = {
        "base_margin": base_margin,
        "per_epsilon": per_eps,
        "drift_constant": fit_drift_constant(records),
        "config": {"epsilons": [float(e) for e in epsilon_list], "trials": trials, "seed": seed,
                   "policy": policy.as_dict()},
    }
    return records, summary


def fit_drift_constant(records: Sequence[TrialRecord]) -> float:
    """Least-squares C in ``|margin drift| ~ C * eps`` (through the origin)."""
    eps = np.array([r.epsilon for r in records if r.epsilon])
    drift = np.array([abs(r.margin_drift) for r in records if r.epsilon])
    if eps.size == 0:
        return 0.0
    return float(eps @ drift / (eps @ eps))


# -- cross validation ------------------------------------------------------------


@dataclass
class CrossValidationRecord:
    d: int
    seed: int | None
    stream_index: int | None
    resamples: int
    c_route_dim: int
    direct_dim: int
    agree: bool
    c_spectrum: list[float] | None = None
    direct_spectrum: list[float] | None = None

    def to_json(self) -> str:
        return dumps(asdict(self))


def cross_check(U, policy: RankPolicy | None = None) -> tuple[int, int, np.ndarray, np.ndarray]:
    """Kernel dimension of C^U and dim V_KDr computed directly; they must agree."""
    policy = policy or RankPolicy()
    U = np.asarray(U, dtype=complex)
    c_dim, c_s, _ = kernel_dimension(U, policy)
    direct_dim, direct_s = kd_real_dimension_direct(U, policy)
    return c_dim, direct_dim, c_s, direct_s


def run_cross_validate(
    d: int, trials: int, seed: int = 0, policy: RankPolicy | None = None, max_resamples: int = 100
) -> list[CrossValidationRecord]:
    """Compare the two kernel-dimension routes on Haar unitaries; raise on the first mismatch."""
    if d < 2:
        raise ValueError("cross validation needs d >= 2")
    policy = policy or RankPolicy()
    records = []
    for t in range(trials):
        s = Seed(seed, t)
        for attempt in range(max_resamples + 1):
            rng = s.generator() if attempt == 0 else s.generator(attempt)
            U = haar_sample(d, rng).entries
            if min_abs_entry(U, policy.tol_omega)[1]:
                break
        else:
            raise RuntimeError(f"no unitary without zero entries after {max_resamples} resamples")
        if attempt:
            log.info("trial %d: resampled %d time(s) to land in Omega", t, attempt)
        c_dim, direct_dim, c_s, direct_s = cross_check(U, policy)
        rec = CrossValidationRecord(d, seed, t, attempt, c_dim, direct_dim, c_dim == direct_dim)
        if not rec.agree:
            rec.c_spectrum = [float(x) for x in c_s]
            rec.direct_spectrum = [float(x) for x in direct_s]
            raise OracleMismatch(rec)
        records.append(rec)
    return records
