"""Three-step reliability filter applied to each frame's TDOA measurement."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .correlator import CorrelationFunction, TdoaMeasurement
from .geometry import Direction
from .lattice import MappingLattice, nns_lookup

STAGES = ("none", "activity", "dominance", "coherence")


@dataclass(frozen=True)
class FilterThresholds:
    T_R: float = 1e-2
    T_beta: float = 0.5
    T_q: float = 5e-5

    def __post_init__(self):
        if min(self.T_R, self.T_beta, self.T_q) <= 0:
            raise ValueError("thresholds must be positive")
        if self.T_beta > 1:
            raise ValueError("T_beta must lie in (0, 1]")


@dataclass(frozen=True)
class FilterVerdict:
    accepted: bool
    failed_stage: str
    direction: Optional[Direction]
    nns_error: Optional[float]
    betas: tuple

    def __post_init__(self):
        if self.failed_stage not in STAGES:
            raise ValueError(f"unknown stage {self.failed_stage!r}")
        if self.accepted != (self.failed_stage == "none"):
            raise ValueError("accepted verdicts carry failed_stage 'none' and only those")


def compute_beta(corr: CorrelationFunction) -> float:
    """Peak dominance ``1 - mean(max(0, R(l))) / R(l_max)`` over the other lags."""
    if corr.max_lag == 0:
        return 1.0
    peak = corr.peak_value
    others = np.delete(corr.values, corr.peak_lag + corr.max_lag)
    eta = float(np.maximum(others, 0.0).mean())
    return 1.0 - eta / peak


def apply_gate(m: TdoaMeasurement, lat: MappingLattice, th: FilterThresholds) -> FilterVerdict:
    """Run activity, dominance and coherence checks in order.

    Any pair failing the first two rejects the whole triple. Betas are only
    computed once every peak clears ``T_R``.
    """
    if any(p.peak_value <= th.T_R for p in m.pairs):
        return FilterVerdict(False, "activity", None, None, ())
    betas = tuple(compute_beta(p.corr) for p in m.pairs)
    if any(b <= th.T_beta for b in betas):
        return FilterVerdict(False, "dominance", None, None, betas)
    direction, err = nns_lookup(lat, m.q)
    if not err < th.T_q:
        return FilterVerdict(False, "coherence", None, err, betas)
    return FilterVerdict(True, "none", direction, err, betas)
