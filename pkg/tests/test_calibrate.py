import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tridoa.calibrate import (
    LmSettings,
    calibrate_geometry,
    calibration_residuals,
    jacobian_fd,
    lm_minimize,
)
from tridoa.geometry import ArrayGeometry
from tridoa.lattice import FieldDataset, latlong_lattice

G_TRUE = ArrayGeometry(0.1, 0.05, 0.12)


def perturbed(g, mm):
    return ArrayGeometry.from_vector(g.as_vector() + mm * 1e-3)


def test_settings_validation():
    with pytest.raises(ValueError):
        LmSettings(scale=1.0)
    with pytest.raises(ValueError):
        LmSettings(max_iter=0)


def test_linear_problem():
    A = np.array([[3.0, 1, 0], [1, 4, 1], [0, 1, 5], [1, 1, 1]])
    b = np.array([1.0, 2, 3, 4])
    res = lm_minimize(lambda x: A @ x - b, np.zeros(3))
    exact = np.linalg.lstsq(A, b, rcond=None)[0]
    assert res.x == pytest.approx(exact, abs=1e-9)


def test_linear_square_accepted_steps():
    A = np.array([[2.0, 0, 0], [0, 3, 0], [0, 0, 4]])
    res = lm_minimize(lambda x: A @ x - 1.0, np.zeros(3), LmSettings(lambda0=1e-9))
    assert res.x == pytest.approx([0.5, 1 / 3, 0.25], abs=1e-10)
    assert len(res.costs) - 1 <= 3


def test_scalar_fit():
    t, y = np.array([1.0, 2.0]), np.array([2.0, 4.0])
    res = lm_minimize(lambda a: a[0] * t - y, [0.0])
    assert res.x[0] == pytest.approx(2.0, abs=1e-10)


def test_rosenbrock():
    res = lm_minimize(lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]]), [-1.2, 1.0])
    assert res.converged
    assert res.x == pytest.approx([1.0, 1.0], abs=1e-8)
    assert all(b < a for a, b in zip(res.costs, res.costs[1:]))


def test_rejects_nonfinite_start():
    with pytest.raises(ValueError):
        lm_minimize(lambda x: np.array([np.nan]), [0.0])


def test_hopeless_problem_aborts():
    # constant residual: no step can lower the cost
    res = lm_minimize(lambda x: np.array([1.0, 1.0]) + 0 * x[0], [0.0])
    assert res.x[0] == 0.0 and res.rms == 1.0


def test_noiseless_recovery():
    ds = FieldDataset.from_geometry(latlong_lattice(36), G_TRUE)
    res = calibrate_geometry(ds, perturbed(G_TRUE, 5.0))
    assert res.converged
    assert np.abs(res.geometry.as_vector() - G_TRUE.as_vector()).max() < 1e-7  # 1e-4 mm


def test_start_at_truth():
    ds = FieldDataset.from_geometry(latlong_lattice(12), G_TRUE)
    res = calibrate_geometry(ds, G_TRUE)
    assert res.converged and res.iterations <= 1 and res.rms_residual < 1e-15


def test_noisy_recovery_20_seeds():
    init = perturbed(G_TRUE, 5.0)
    for seed in range(20):
        ds = FieldDataset.from_geometry(latlong_lattice(36), G_TRUE, noise_std=1e-4, rng=seed)
        res = calibrate_geometry(ds, init)
        assert np.abs(res.geometry.as_vector() - G_TRUE.as_vector()).max() < 5e-4
        assert 0.5e-4 < res.rms_residual < 2e-4  # the per-component noise level


def test_uses_recorded_distance():
    ds = FieldDataset.from_geometry(latlong_lattice(20), G_TRUE, distance=0.6)
    res = calibrate_geometry(ds, perturbed(G_TRUE, -5.0))
    assert np.abs(res.geometry.as_vector() - G_TRUE.as_vector()).max() < 1e-7
    # the far-field model cannot absorb a 0.6 m source
    far = FieldDataset(ds.theta, ds.phi, ds.tdoas)
    assert calibrate_geometry(far, perturbed(G_TRUE, -5.0)).rms_residual > 1e-5


def test_dataset_preconditions():
    d = latlong_lattice(36)
    with pytest.raises(ValueError):
        calibrate_geometry(FieldDataset.from_geometry(d[:9], G_TRUE), G_TRUE)
    narrow = d[(d[:, 0] >= 0) & (d[:, 0] < np.radians(60))]
    with pytest.raises(ValueError):
        calibrate_geometry(FieldDataset.from_geometry(narrow, G_TRUE), G_TRUE)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_cost_never_exceeds_init(seed, db, dcx, dcy):
    ds = FieldDataset.from_geometry(latlong_lattice(8), G_TRUE, noise_std=1e-4, rng=seed)
    init = ArrayGeometry.from_vector(G_TRUE.as_vector() + 1e-3 * np.array([db, dcx, dcy]))
    fn = calibration_residuals(ds)
    res = calibrate_geometry(ds, init)
    r0, r1 = fn(init.as_vector()), fn(res.geometry.as_vector())
    assert r1 @ r1 <= r0 @ r0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_jacobian_agrees_with_forward_differences(seed):
    rng = np.random.default_rng(seed)
    ds = FieldDataset.from_geometry(latlong_lattice(8), G_TRUE, noise_std=1e-4, rng=rng)
    fn = calibration_residuals(ds)
    x = G_TRUE.as_vector() + rng.uniform(-5e-3, 5e-3, 3)
    r = fn(x)
    Jc, Jf = jacobian_fd(fn, x), jacobian_fd(fn, x, central=False)
    for a, b in ((Jc.T @ Jc, Jf.T @ Jf), (Jc.T @ r, Jf.T @ r)):
        assert np.abs(a - b).max() <= 1e-4 * np.abs(a).max()
