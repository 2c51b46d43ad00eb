"""Array geometry, angle conventions and the closed-form TDOA inversion.

Conventions used throughout the package:

* Microphone 1 sits at the origin, microphone 2 at ``(b, 0, 0)`` and
  microphone 3 at ``(c_x, c_y, 0)``.
* Azimuth ``theta`` is measured from +x toward +y, wrapped to ``[-pi, pi)``.
* Elevation ``phi`` is measured up from the array plane, ``phi`` in
  ``[0, pi/2]``; only the upper hemisphere (z >= 0) is represented.
* At the pole the azimuth is undefined and is reported as 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DEFAULT_FAR_FIELD_R = 100.0
SPEED_OF_SOUND = 343.0

# Slack on |(s_x, s_y)| before a closed-form solution is flagged inconsistent.
CF_INCONSISTENCY_SLACK = 0.05


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to ``[-pi, pi)``."""
    return (theta + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class ArrayGeometry:
    """Canonical 3-microphone placement, all lengths in meters."""

    b: float
    c_x: float
    c_y: float

    def __post_init__(self):
        if not (self.b > 0):
            raise ValueError(f"b must be positive, got {self.b}")
        if self.c_y == 0:
            raise ValueError("c_y must be nonzero (collinear array)")
        if min(self.spacings) <= 0:
            raise ValueError("microphones must not coincide")

    @property
    def mics(self) -> np.ndarray:
        return np.array([[0.0, 0.0, 0.0], [self.b, 0.0, 0.0], [self.c_x, self.c_y, 0.0]])

    @property
    def spacings(self) -> tuple[float, float, float]:
        """Pair distances ``(d12, d13, d23)``."""
        return (
            self.b,
            math.hypot(self.c_x, self.c_y),
            math.hypot(self.c_x - self.b, self.c_y),
        )

    @property
    def max_spacing(self) -> float:
        return max(self.spacings)

    def as_vector(self) -> np.ndarray:
        return np.array([self.b, self.c_x, self.c_y])

    @classmethod
    def from_vector(cls, x) -> "ArrayGeometry":
        return cls(float(x[0]), float(x[1]), float(x[2]))


class Direction(NamedTuple):
    theta: float
    phi: float

    @classmethod
    def make(cls, theta: float, phi: float) -> "Direction":
        if not (-1e-12 <= phi <= math.pi / 2 + 1e-12):
            raise ValueError(f"elevation {phi} outside [0, pi/2]")
        return cls(float(wrap_angle(theta)), float(min(max(phi, 0.0), math.pi / 2)))

    @classmethod
    def from_degrees(cls, theta_deg: float, phi_deg: float) -> "Direction":
        return cls.make(math.radians(theta_deg), math.radians(phi_deg))


class TdoaTriple(NamedTuple):
    """TDOAs in meters, ``r_ij = |s - m_i| - |s - m_j|``."""

    r12: float
    r13: float
    r23: float


@dataclass(frozen=True)
class CfResult:
    point: np.ndarray
    clamped: bool
    inconsistent: bool

    @property
    def ok(self) -> bool:
        return not (self.clamped or self.inconsistent)


def check_far_field(r: float, g: ArrayGeometry) -> float:
    if r < 100 * g.b:
        raise ValueError(f"far-field radius {r} m too small for d12={g.b} m")
    return r


def direction_to_point(d) -> np.ndarray:
    """Unit hemisphere point for a direction (or an ``(..., 2)`` array of them)."""
    d = np.asarray(d, dtype=float)
    theta, phi = d[..., 0], d[..., 1]
    cp = np.cos(phi)
    return np.stack([cp * np.cos(theta), cp * np.sin(theta), np.sin(phi)], axis=-1)


def point_to_direction(p) -> Direction:
    x, y, z = (float(v) for v in p)
    norm = math.sqrt(x * x + y * y + z * z)
    if norm == 0:
        raise ValueError("zero vector has no direction")
    x, y, z = x / norm, y / norm, z / norm
    if z < -1e-9:
        raise ValueError("point below the array plane")
    rho = math.hypot(x, y)
    theta = 0.0 if rho == 0 else math.atan2(y, x)
    phi = math.atan2(max(z, 0.0), rho)
    return Direction(float(wrap_angle(theta)), phi)


def points_to_directions(p) -> np.ndarray:
    """Vectorised :func:`point_to_direction`; returns ``(n, 2)`` ``(theta, phi)``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    p = p / np.linalg.norm(p, axis=1, keepdims=True)
    rho = np.hypot(p[:, 0], p[:, 1])
    theta = np.where(rho == 0, 0.0, np.arctan2(p[:, 1], p[:, 0]))
    phi = np.arctan2(np.maximum(p[:, 2], 0.0), rho)
    return np.stack([wrap_angle(theta), phi], axis=1)


def tdoa_from_geometry(g: ArrayGeometry, source) -> TdoaTriple:
    """Direct-path TDOAs in meters for a source at a 3D position."""
    s = np.asarray(source, dtype=float)
    d1, d2, d3 = np.linalg.norm(s - g.mics, axis=1)
    r12 = d1 - d2
    r23 = d2 - d3
    # r13 written as r12 + r23 keeps the triangle identity exact in floating point
    return TdoaTriple(float(r12), float(r12 + r23), float(r23))


def tdoas_from_geometry(g: ArrayGeometry, sources) -> np.ndarray:
    """Vectorised TDOAs, ``(n, 3)`` columns ``r12, r13, r23``."""
    s = np.atleast_2d(np.asarray(sources, dtype=float))
    dist = np.linalg.norm(s[:, None, :] - g.mics[None, :, :], axis=2)
    r12 = dist[:, 0] - dist[:, 1]
    r23 = dist[:, 1] - dist[:, 2]
    return np.stack([r12, r12 + r23, r23], axis=1)


def direction_tdoas(g: ArrayGeometry, directions, r: float = DEFAULT_FAR_FIELD_R) -> np.ndarray:
    """TDOAs of sources placed at distance ``r`` along each direction."""
    return tdoas_from_geometry(g, direction_to_point(np.atleast_2d(directions)) * r)


def cf_map(r12: float, r13: float, g: ArrayGeometry, r: float = DEFAULT_FAR_FIELD_R) -> CfResult:
    """Closed-form source position on the unit hemisphere from two TDOAs.

    The source is placed on a sphere of radius ``r``; the result is divided by
    ``r``. A negative radicand for ``s_z`` is clamped to the horizon.
    """
    if abs(r12) >= 2 * r:
        raise ValueError("|r12| must be below 2r")
    b, cx, cy = g.b, g.c_x, g.c_y
    sx = (b * b + 2 * r12 * r - r12 * r12) / (2 * b)
    sy = (cx * cx + cy * cy - r13 * r13 + 2 * r13 * r - 2 * cx * sx) / (2 * cy)
    horiz = math.hypot(sx, sy)
    rad = r * r - sx * sx - sy * sy
    clamped = rad < 0
    sz = 0.0 if clamped else math.sqrt(rad)
    p = np.array([sx, sy, sz])
    p /= np.linalg.norm(p)
    return CfResult(p, clamped, horiz > r * (1 + CF_INCONSISTENCY_SLACK))


def cf_map_many(tdoas, g: ArrayGeometry, r: float = DEFAULT_FAR_FIELD_R) -> np.ndarray:
    """Vectorised :func:`cf_map` on an ``(n, >=2)`` array; returns unit points."""
    q = np.atleast_2d(np.asarray(tdoas, dtype=float))
    r12, r13 = q[:, 0], q[:, 1]
    b, cx, cy = g.b, g.c_x, g.c_y
    sx = (b * b + 2 * r12 * r - r12 * r12) / (2 * b)
    sy = (cx * cx + cy * cy - r13 * r13 + 2 * r13 * r - 2 * cx * sx) / (2 * cy)
    sz = np.sqrt(np.maximum(r * r - sx * sx - sy * sy, 0.0))
    p = np.stack([sx, sy, sz], axis=1)
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def angular_distance(a, b) -> float:
    """Great-circle angle in radians between two unit vectors."""
    c = float(np.clip(np.dot(a, b), -1.0, 1.0))
    return math.acos(c)
