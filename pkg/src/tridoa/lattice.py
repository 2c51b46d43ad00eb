"""Direction lattices, TDOA mapping tables and nearest-neighbour inference."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    DEFAULT_FAR_FIELD_R,
    ArrayGeometry,
    Direction,
    direction_tdoas,
    direction_to_point,
    wrap_angle,
)
from .kdtree import KDTree, linear_scan

GOLDEN_RATIO = (1 + math.sqrt(5)) / 2

EXACT_HIT_CHORD = 1e-9
IDW_POWER = 2
IDW_NEIGHBORS = 4
AFFINE_NEIGHBORS = (8, 16, 32)  # widened when a ring-only neighbourhood is coplanar
MIN_RINGS = 3
MIN_AZIMUTHS_PER_RING = 8


def fibonacci_lattice(n: int) -> np.ndarray:
    """Hemispherical Fibonacci lattice as an ``(n, 2)`` array of ``(theta, phi)``.

    Point ``k`` (1-based) has azimuth ``2*pi*(k-1)/golden_ratio`` and elevation
    ``pi/2 - arccos(1 - (2k-1)/(2n))``, so z strictly decreases with ``k``.
    """
    if n < 1:
        raise ValueError("lattice needs at least one point")
    k = np.arange(1, n + 1, dtype=float)
    theta = wrap_angle(2 * np.pi * (k - 1) / GOLDEN_RATIO)
    phi = np.pi / 2 - np.arccos(1 - (2 * k - 1) / (2 * n))
    return np.stack([theta, phi], axis=1)


def latlong_lattice(u: int) -> np.ndarray:
    """Latitude-longitude lattice with ``u**2 + 1`` points.

    ``2u`` meridians spaced ``pi/u`` apart starting at -pi, ``u/2`` parallels
    at ``phi = j*pi/u`` (the horizon ring included) and the pole last.
    """
    if u < 2 or u % 2:
        raise ValueError(f"u must be an even integer >= 2, got {u}")
    delta = np.pi / u
    theta = -np.pi + delta * np.arange(2 * u)
    phi = delta * np.arange(u // 2)
    pp, tt = np.meshgrid(phi, theta, indexing="ij")
    grid = np.stack([tt.ravel(), pp.ravel()], axis=1)
    return np.vstack([grid, [[0.0, np.pi / 2]]])


class MappingLattice:
    """Paired direction / TDOA table with a k-d index over the TDOAs.

    Entry ``n`` of ``directions`` (radians) corresponds to entry ``n`` of
    ``tdoas`` (meters, columns ``r12, r13, r23``). Arrays are read-only.
    """

    def __init__(self, directions, tdoas, geometry: Optional[ArrayGeometry] = None,
                 r: Optional[float] = None):
        d = np.array(directions, dtype=np.float64).reshape(-1, 2)
        q = np.array(tdoas, dtype=np.float64).reshape(-1, 3)
        if len(d) != len(q) or len(d) == 0:
            raise ValueError("directions and tdoas must be non-empty and the same length")
        d.flags.writeable = False
        q.flags.writeable = False
        self.directions = d
        self.tdoas = q
        self.geometry = geometry
        self.r = r
        self.index = KDTree(q)

    @property
    def N(self) -> int:
        return len(self.directions)

    def __len__(self) -> int:
        return self.N

    def __eq__(self, other):
        if not isinstance(other, MappingLattice):
            return NotImplemented
        return (self.geometry == other.geometry and self.r == other.r
                and np.array_equal(self.directions, other.directions)
                and np.array_equal(self.tdoas, other.tdoas))

    def lookup(self, q) -> tuple[int, float]:
        """Index of the nearest stored TDOA triple and its squared error (m^2)."""
        return self.index.query(q)

    def lookup_many(self, qs) -> tuple[np.ndarray, np.ndarray]:
        return self.index.query_many(qs)

    def linear_lookup(self, q) -> tuple[int, float]:
        return linear_scan(self.tdoas, q)

    def points(self) -> np.ndarray:
        return direction_to_point(self.directions)


def nns_lookup(lat: MappingLattice, q) -> tuple[Direction, float]:
    """Direction whose stored TDOAs are nearest to ``q``, plus the squared error."""
    n, err = lat.lookup(q)
    theta, phi = lat.directions[n]
    return Direction(float(theta), float(phi)), err


def synthesize_mappings(directions, g: ArrayGeometry, r: float = DEFAULT_FAR_FIELD_R) -> MappingLattice:
    """Mapping table from the geometric TDOA model at radius ``r``."""
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    return MappingLattice(d, direction_tdoas(g, d, r), geometry=g, r=r)


@dataclass
class FieldDataset:
    """Labelled TDOA measurements taken at known directions.

    ``distance`` holds the source distance per record when it was recorded.
    """

    theta: np.ndarray
    phi: np.ndarray
    tdoas: np.ndarray
    distance: Optional[np.ndarray] = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).ravel()
        self.phi = np.asarray(self.phi, dtype=float).ravel()
        self.tdoas = np.asarray(self.tdoas, dtype=float).reshape(-1, 3)
        if self.distance is not None:
            self.distance = np.asarray(self.distance, dtype=float).ravel()
        n = len(self.theta)
        if len(self.phi) != n or len(self.tdoas) != n or (
                self.distance is not None and len(self.distance) != n):
            raise ValueError("dataset columns have different lengths")

    def __len__(self) -> int:
        return len(self.theta)

    @property
    def directions(self) -> np.ndarray:
        return np.stack([self.theta, self.phi], axis=1)

    @classmethod
    def from_geometry(cls, directions, g: ArrayGeometry, distance: Optional[float] = None,
                      noise_std: float = 0.0, rng=None) -> "FieldDataset":
        """Synthetic dataset from the geometric model, optionally with TDOA noise."""
        d = np.atleast_2d(np.asarray(directions, dtype=float))
        r = DEFAULT_FAR_FIELD_R if distance is None else distance
        q = direction_tdoas(g, d, r)
        if noise_std > 0:
            rng = np.random.default_rng(rng)
            q = q + rng.normal(0.0, noise_std, q.shape)
        dist = None if distance is None else np.full(len(d), float(distance))
        return cls(d[:, 0], d[:, 1], q, dist)

    def density_report(self) -> dict:
        """Ring and azimuth counts used by the interpolation density check."""
        rings: dict[float, set] = {}
        for th, ph in zip(np.round(self.theta, 9), np.round(self.phi, 9)):
            rings.setdefault(float(ph), set()).add(float(th))
        per_ring = {ph: len(ths) for ph, ths in sorted(rings.items())}
        dense = [ph for ph, n in per_ring.items() if n >= MIN_AZIMUTHS_PER_RING]
        return {
            "records": len(self),
            "rings": len(per_ring),
            "dense_rings": len(dense),
            "azimuths_per_ring": per_ring,
            "ok": len(dense) >= MIN_RINGS,
        }


class DatasetTooSparse(ValueError):
    def __init__(self, report: dict):
        self.report = report
        super().__init__(
            f"field dataset too sparse: {report['dense_rings']} rings with >= "
            f"{MIN_AZIMUTHS_PER_RING} azimuths (need {MIN_RINGS}); report={report}"
        )


def idw_weights(chords, power: int = IDW_POWER) -> np.ndarray:
    w = 1.0 / np.asarray(chords, dtype=float) ** power
    return w / w.sum(axis=-1, keepdims=True)


def interpolate_field_dataset(ds: FieldDataset, directions, method: str = "affine",
                              geometry: Optional[ArrayGeometry] = None,
                              r: Optional[float] = None) -> MappingLattice:
    """Resample a field dataset onto target directions.

    ``method="affine"`` fits ``q = a + B s`` (``s`` the unit direction vector)
    by inverse-distance-weighted least squares over the 8 nearest samples by
    chord distance, widening to 16 or 32 when those are coplanar; ``method="idw"`` is plain inverse-distance weighting of
    the 4 nearest samples. Targets within 1e-9 chord of a sample copy it.
    """
    if method not in ("affine", "idw"):
        raise ValueError(f"unknown interpolation method {method!r}")
    report = ds.density_report()
    if not report["ok"]:
        raise DatasetTooSparse(report)
    targets = np.atleast_2d(np.asarray(directions, dtype=float))
    src = direction_to_point(ds.directions)
    dst = direction_to_point(targets)
    k = min(AFFINE_NEIGHBORS[-1] if method == "affine" else IDW_NEIGHBORS, len(ds))
    out = np.empty((len(dst), 3))
    chunk = 1024
    for lo in range(0, len(dst), chunk):
        block = dst[lo:lo + chunk]
        chord = np.linalg.norm(block[:, None, :] - src[None, :, :], axis=2)
        nbr = np.argsort(chord, axis=1, kind="stable")[:, :k]
        nd = np.take_along_axis(chord, nbr, axis=1)
        for t in range(len(block)):
            out[lo + t] = _interpolate_one(block[t], src[nbr[t]], nd[t], ds.tdoas[nbr[t]], method)
    return MappingLattice(targets, out, geometry=geometry, r=r)


def _interpolate_one(p, nbr_pts, chords, nbr_q, method):
    if chords[0] < EXACT_HIT_CHORD:
        return nbr_q[0]
    if method == "affine":
        for k in AFFINE_NEIGHBORS:
            fitted = _affine_fit(p, nbr_pts[:k], chords[:k], nbr_q[:k])
            if fitted is not None:
                return fitted
            if k >= len(chords):
                break
    m = min(IDW_NEIGHBORS, len(chords))
    return idw_weights(chords[:m]) @ nbr_q[:m]


def _affine_fit(p, nbr_pts, chords, nbr_q):
    # local frame: two tangent axes plus the normal, scaled for conditioning
    e1 = np.cross([0.0, 0.0, 1.0], p)
    if np.linalg.norm(e1) < 1e-9:
        e1 = np.array([1.0, 0.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(p, e1)
    h = chords.mean()
    x = nbr_pts - p
    design = np.column_stack([np.ones(len(x)), x @ e1 / h, x @ e2 / h, x @ p / (h * h)])
    sw = np.sqrt(idw_weights(chords))[:, None]
    a = design * sw
    if np.linalg.matrix_rank(a, tol=1e-8 * np.abs(a).max()) < design.shape[1]:
        return None
    coef, *_ = np.linalg.lstsq(a, nbr_q * sw, rcond=None)
    return coef[0]
