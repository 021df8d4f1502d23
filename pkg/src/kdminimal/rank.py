"""Thresholded numerical rank with an explicit confidence gap."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core_types import TOL_OMEGA

__all__ = ["RankPolicy", "rank_threshold", "numerical_rank", "gap_ratio"]


@dataclass(frozen=True)
class RankPolicy:
    """Tolerances behind every rank and verdict decision.

    A singular value counts as zero when it is at most
    ``rank_safety * eps * max(sigma_max, 1) * d**2``. The floor keeps pure
    roundoff from being read as rank when the map is zero in exact arithmetic;
    for unitary input both maps have an O(1) scale. A verdict is only called when the
    smallest kept singular value exceeds the largest discarded one by at
    least ``gap_min``.
    """

    tol_omega: float = TOL_OMEGA
    rank_safety: float = 100.0
    gap_min: float = 1e3

    def as_dict(self) -> dict:
        return asdict(self)


def rank_threshold(s, d: int, policy: RankPolicy) -> float:
    s = np.asarray(s)
    sigma_max = float(s.max()) if s.size else 0.0
    return policy.rank_safety * np.finfo(float).eps * max(sigma_max, 1.0) * d * d


def numerical_rank(s, d: int, policy: RankPolicy) -> int:
    s = np.asarray(s)
    return int(np.count_nonzero(s > rank_threshold(s, d, policy)))


def gap_ratio(s, rank: int) -> float:
    """Smallest kept over largest discarded singular value of a descending spectrum.

    Infinite when nothing is discarded, nothing is kept, or every discarded value is exactly 0.
    """
    s = np.asarray(s)
    if rank == 0 or rank >= s.size:
        return math.inf
    discarded = float(s[rank])
    if discarded == 0.0:
        return math.inf
    return float(s[rank - 1]) / discarded
