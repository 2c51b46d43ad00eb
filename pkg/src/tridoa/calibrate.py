"""Levenberg-Marquardt fitting of the array geometry to labelled TDOAs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import DEFAULT_FAR_FIELD_R, ArrayGeometry, direction_to_point
from .lattice import FieldDataset

LAMBDA_MAX = 1e12
MIN_RECORDS = 10
MIN_AZIMUTH_SPAN = math.pi / 2


@dataclass(frozen=True)
class LmSettings:
    lambda0: float = 1e-3
    scale: float = 10.0
    max_iter: int = 200
    step_tol: float = 1e-10
    residual_tol: float = 1e-12

    def __post_init__(self):
        if min(self.lambda0, self.step_tol, self.residual_tol) <= 0 or self.max_iter < 1:
            raise ValueError("LM settings must be positive")
        if self.scale <= 1:
            raise ValueError("damping scale must exceed 1")


@dataclass
class LmResult:
    x: np.ndarray
    rms: float
    iterations: int
    converged: bool
    costs: list = field(default_factory=list)


@dataclass(frozen=True)
class CalibrationResult:
    geometry: ArrayGeometry
    rms_residual: float
    iterations: int
    converged: bool


def fd_step(x) -> np.ndarray:
    return np.maximum(1e-7, 1e-7 * np.abs(x))


def jacobian_fd(fun: Callable, x, central: bool = True, f0=None) -> np.ndarray:
    """Finite-difference Jacobian; forward differences when ``central`` is False."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x)
    if not central and f0 is None:
        f0 = np.asarray(fun(x), dtype=float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h[i]
        if central:
            cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h[i]))
        else:
            cols.append((np.asarray(fun(x + e)) - f0) / h[i])
    return np.column_stack(cols)


def lm_minimize(residual_fn: Callable, x0, s: LmSettings = LmSettings()) -> LmResult:
    """Minimise ``sum(residual_fn(x)**2)`` with Marquardt-scaled damping.

    The Jacobian is estimated by central differences. A trial step is taken
    when it lowers the cost (damping divided by ``scale``), otherwise damping
    is multiplied by ``scale``; damping beyond 1e12 aborts unconverged.
    """
    x = np.array(x0, dtype=float)
    r = np.asarray(residual_fn(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals not finite at the starting point")
    cost = float(r @ r)
    costs = [cost]
    lam = s.lambda0
    converged = cost == 0.0
    it = 0
    while not converged and it < s.max_iter:
        it += 1
        J = jacobian_fd(residual_fn, x)
        A = J.T @ J
        g = J.T @ r
        accepted = False
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(np.diag(A)), -g)
                ok = np.all(np.isfinite(step))
            except np.linalg.LinAlgError:
                ok = False
            if ok:
                x_new = x + step
                r_new = np.asarray(residual_fn(x_new), dtype=float)
                cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
                if cost_new < cost:
                    accepted = True
                    decrease = (cost - cost_new) / cost
                    x, r, cost = x_new, r_new, cost_new
                    costs.append(cost)
                    lam /= s.scale
                    if (np.linalg.norm(step) < s.step_tol or decrease < s.residual_tol
                            or cost == 0.0):
                        converged = True
                    break
                if np.linalg.norm(step) < s.step_tol:
                    # no representable improvement left near the optimum
                    converged = True
                    break
            lam *= s.scale
            if lam >= LAMBDA_MAX:
                break
        if not accepted and not converged:
            break
    rms = math.sqrt(cost / len(r)) if len(r) else 0.0
    return LmResult(x, rms, it, converged, costs)


def _model_tdoas(x, units, ranges) -> np.ndarray:
    b, cx, cy = x
    mics = np.array([[0.0, 0.0, 0.0], [b, 0.0, 0.0], [cx, cy, 0.0]])
    src = units * ranges[:, None]
    dist = np.linalg.norm(src[:, None, :] - mics[None, :, :], axis=2)
    r12 = dist[:, 0] - dist[:, 1]
    r23 = dist[:, 1] - dist[:, 2]
    return np.stack([r12, r12 + r23, r23], axis=1)


def azimuth_span(theta) -> float:
    """Smallest arc (radians) containing all azimuths."""
    t = np.sort(np.mod(np.asarray(theta, dtype=float), 2 * np.pi))
    if len(t) < 2:
        return 0.0
    gaps = np.diff(np.append(t, t[0] + 2 * np.pi))
    return float(2 * np.pi - gaps.max())


def calibration_residuals(ds: FieldDataset, r: float = DEFAULT_FAR_FIELD_R) -> Callable:
    """Residual function of ``(b, c_x, c_y)`` over every record and pair."""
    units = direction_to_point(ds.directions)
    ranges = ds.distance if ds.distance is not None else np.full(len(ds), float(r))
    target = ds.tdoas

    def residuals(x):
        return (_model_tdoas(x, units, ranges) - target).ravel()

    return residuals


def calibrate_geometry(ds: FieldDataset, init: ArrayGeometry, r: float = DEFAULT_FAR_FIELD_R,
                       s: LmSettings = LmSettings()) -> CalibrationResult:
    """Fit ``(b, c_x, c_y)`` so modelled TDOAs match the dataset.

    Records carrying a source distance are modelled at that distance, the
    rest at the far-field radius ``r``. The best iterate is returned even
    when LM does not converge.
    """
    if len(ds) < MIN_RECORDS:
        raise ValueError(f"calibration needs at least {MIN_RECORDS} records, got {len(ds)}")
    if azimuth_span(ds.theta) < MIN_AZIMUTH_SPAN - 1e-12:
        raise ValueError("calibration records must span at least 90 degrees of azimuth")
    res = lm_minimize(calibration_residuals(ds, r), init.as_vector(), s)
    return CalibrationResult(ArrayGeometry.from_vector(res.x), res.rms, res.iterations, res.converged)
