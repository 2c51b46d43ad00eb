"""Recency- and frequency-aware exponential filter clustering.

A fixed bank of clusters holds unit-hemisphere centroids and confidences in
[0, 1]. A measurement refreshes the most confident cluster within ``d_min``
(exponential filter, confidence +1/N_s) or overwrites the least confident
one; every other cluster loses ``dt/T_win`` confidence and is emptied at 0.
A cluster counts as a detected source once its confidence reaches 1, until
it falls to ``T_a`` or below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .geometry import point_to_direction

# confidence within this of 1 counts as full (absorbs accumulation round-off)
FULL_CONFIDENCE_EPS = 1e-9


@dataclass(frozen=True)
class TrackerParams:
    N_c: int = 10
    dt: float = 1024 / (2 * 48000)
    d_min: float = 0.25
    N_s: int = 5
    alpha: float = 0.75
    T_win: float = 5.0
    T_a: float = 0.5

    def __post_init__(self):
        if self.N_c < 1 or self.N_s < 1:
            raise ValueError("N_c and N_s must be positive integers")
        if min(self.dt, self.d_min, self.T_win) <= 0:
            raise ValueError("dt, d_min and T_win must be positive")
        if not (0 < self.alpha < 1 and 0 < self.T_a < 1):
            raise ValueError("alpha and T_a must lie in (0, 1)")
        if self.dt >= self.T_win:
            raise ValueError("dt must be shorter than T_win")

    @classmethod
    def for_stream(cls, L: int, fs: float, **kw) -> "TrackerParams":
        return cls(dt=L / (2 * fs), **kw)

    @property
    def decay(self) -> float:
        return self.dt / self.T_win


class Cluster(NamedTuple):
    id: int
    centroid: Optional[tuple]
    rho: float = 0.0
    detected: bool = False

    @property
    def active(self) -> bool:
        return self.centroid is not None


class TrackerEvent(NamedTuple):
    kind: str  # source_appeared | source_lost | cluster_forgotten
    cluster: int
    time: float


@dataclass(frozen=True)
class TrackerState:
    clusters: tuple
    frame_count: int = 0

    @classmethod
    def empty(cls, p: TrackerParams) -> "TrackerState":
        return cls(tuple(Cluster(i, None) for i in range(p.N_c)), 0)


def _check_measurement(s) -> tuple:
    x, y, z = (float(v) for v in s)
    if abs(math.sqrt(x * x + y * y + z * z) - 1) > 1e-6:
        raise ValueError("measurement must be a unit vector")
    if z < -1e-9:
        raise ValueError("measurement below the array plane")
    return (x, y, z)


def _chord(a, b) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def rfefc_step(state: TrackerState, measurement, p: TrackerParams):
    """Advance the tracker by one hop.

    ``measurement`` is a unit hemisphere point or ``None`` for a rejected
    frame. Returns the new state and the events emitted at this step.
    """
    t = state.frame_count * p.dt
    clusters = list(state.clusters)
    events: list[TrackerEvent] = []
    updated = -1

    if measurement is not None:
        s = _check_measurement(measurement)
        best = -1
        for c in clusters:
            if c.active and _chord(c.centroid, s) < p.d_min:
                if best < 0 or c.rho > clusters[best].rho:
                    best = c.id
        if best >= 0:
            c = clusters[best]
            a = p.alpha
            v = [a * c.centroid[i] + (1 - a) * s[i] for i in range(3)]
            n = math.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
            rho = min(1.0, c.rho + 1.0 / p.N_s)
            clusters[best] = c._replace(centroid=(v[0] / n, v[1] / n, v[2] / n), rho=rho)
            updated = best
        else:
            low = min(clusters, key=lambda c: (c.rho, c.id))
            if low.detected:
                events.append(TrackerEvent("source_lost", low.id, t))
            clusters[low.id] = Cluster(low.id, s, 1.0 / p.N_s, False)
            updated = low.id

    for c in clusters:
        if c.id == updated or not c.active:
            continue
        rho = max(0.0, c.rho - p.decay)
        if rho == 0.0:
            clusters[c.id] = c._replace(centroid=None, rho=0.0)
        else:
            clusters[c.id] = c._replace(rho=rho)

    for c in clusters:
        if c.rho >= 1.0 - FULL_CONFIDENCE_EPS and c.active:
            if not c.detected:
                events.append(TrackerEvent("source_appeared", c.id, t))
            clusters[c.id] = c._replace(rho=1.0, detected=True)
        elif c.detected and c.rho <= p.T_a:
            events.append(TrackerEvent("source_lost", c.id, t))
            clusters[c.id] = c._replace(detected=False)
        if not clusters[c.id].active and state.clusters[c.id].active and c.id != updated:
            events.append(TrackerEvent("cluster_forgotten", c.id, t))

    return TrackerState(tuple(clusters), state.frame_count + 1), events


def active_sources(state: TrackerState, p: Optional[TrackerParams] = None) -> list:
    """Detected clusters as ``(id, Direction, rho)``."""
    return [
        (c.id, point_to_direction(c.centroid), c.rho)
        for c in state.clusters if c.detected and c.active
    ]
