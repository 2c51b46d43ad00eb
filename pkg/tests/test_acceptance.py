"""Acceptance gate: one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python tests/test_acceptance.py`` for the bare report.
"""
import math
import time

import numpy as np
import pytest

from tridoa.calibrate import calibrate_geometry
from tridoa.correlator import cross_correlate, refine_peak_qi
from tridoa.geometry import ArrayGeometry, angular_distance, cf_map, direction_to_point, tdoa_from_geometry
from tridoa.lattice import FieldDataset, fibonacci_lattice, latlong_lattice, synthesize_mappings
from tridoa.pipeline import PipelineConfig, bench, process_stream
from tridoa.simulate import (
    evaluate_tracking,
    experiment2_scene,
    experiment3_scene,
    fractional_delay_filter,
    random_directions,
    render_scene,
    rmse_loc,
    run_noise_sweep,
)
from tridoa.tracker import TrackerParams, TrackerState, rfefc_step

G = ArrayGeometry(0.1, 0.05, 0.12)
RESULTS: list = []


def check(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def lattice():
    return synthesize_mappings(fibonacci_lattice(10_000), G)


def test_cf_exactness():
    d = random_directions(1000, 1)
    t0 = time.perf_counter()
    worst = 0.0
    for row in d:
        p = direction_to_point(row)
        q = tdoa_from_geometry(G, p * 100.0)
        worst = max(worst, angular_distance(cf_map(q.r12, q.r13, G, 100.0).point, p))
    elapsed = time.perf_counter() - t0
    check("CF exactness", worst < 1e-6 and elapsed < 1.0,
          f"max angular error {worst:.2e} rad (< 1e-6), {elapsed:.3f} s (< 1 s)")


def test_nns_quantization_floor(lattice):
    d = random_directions(10_000, 2)
    q = np.array([tdoa_from_geometry(G, p * 100.0) for p in direction_to_point(d)])
    idx, _ = lattice.lookup_many(q)
    rmse = rmse_loc(direction_to_point(d), direction_to_point(lattice.directions[idx]))
    check("NNS quantization floor", rmse <= 0.05, f"RMSE_loc {rmse:.4f} (<= 0.05), N = 10^4")


def test_experiment1_noise_sweep(lattice):
    sigmas = [1e-4, 1e-3, 1e-2, 1e-1]
    t0 = time.perf_counter()
    rows, _ = run_noise_sweep(G, lattice, sigmas, M=10_000, seed=0)
    elapsed = time.perf_counter() - t0
    nns = [r.rmse_nns for r in rows]
    a = all(b >= 0.95 * a for a, b in zip(nns, nns[1:]))
    b = all(r.rmse_nns <= r.rmse_cf_miscal for r in rows if r.sigma <= 1e-3)
    c = all(r.rmse_cf_cal <= r.rmse_cf_miscal for r in rows)
    table = "; ".join(f"{r.sigma * 100:g} cm: nns {r.rmse_nns:.4f} miscal {r.rmse_cf_miscal:.4f} "
                      f"cal {r.rmse_cf_cal:.4f}" for r in rows)
    check("Experiment-1 (a) NNS non-decreasing", a, f"{[round(v, 4) for v in nns]}")
    check("Experiment-1 (b) NNS <= miscalibrated CF at sigma <= 0.1 cm", b, table)
    check("Experiment-1 (c) calibrated CF <= miscalibrated CF", c, table)
    check("Experiment-1 runtime", elapsed < 120, f"{elapsed:.1f} s (< 120 s), M = 10^4")


def _delayed_pair(rng, delay, L=1024, snr_db=30.0):
    x = rng.normal(size=L + 256)
    shift = math.floor(delay)
    a = np.convolve(x, fractional_delay_filter(31.0))[100:100 + L]
    b = np.convolve(x, fractional_delay_filter(31.0 + delay - shift))[100 - shift:100 - shift + L]
    out = []
    for s in (a, b):
        noise = rng.normal(0, math.sqrt(np.mean(s ** 2) / 10 ** (snr_db / 10)), L)
        out.append(s + noise)
    return out


def test_tdoa_accuracy():
    rng = np.random.default_rng(7)
    errors = []
    for _ in range(100):
        d = rng.uniform(-13, 13)
        a, b = _delayed_pair(rng, d)
        errors.append(abs(refine_peak_qi(cross_correlate(a, b, 15)) - d))
    ok = int(np.sum(np.array(errors) <= 0.1))
    check("TDOA accuracy", ok >= 95,
          f"{ok}/100 within 0.1 samples (>= 95), worst {max(errors):.3f}")


def test_kdtree_oracle_equality(lattice):
    rng = np.random.default_rng(3)
    qs = rng.uniform(-0.15, 0.15, (1000, 3))
    idx, _ = lattice.lookup_many(qs)
    same = sum(int(i) == lattice.linear_lookup(q)[0] for i, q in zip(idx, qs))
    check("k-d oracle equality", same == 1000, f"{same}/1000 identical indices")


def test_rfefc_state_machine():
    p = TrackerParams()
    u = (0.0, 0.0, 1.0)
    s, rhos, appeared = TrackerState.empty(p), [], None
    for step in range(1, 6):
        s, ev = rfefc_step(s, u, p)
        rhos.append(s.clusters[0].rho)
        if any(e.kind == "source_appeared" for e in ev):
            appeared = step
    inc_ok = np.allclose(rhos, [0.2, 0.4, 0.6, 0.8, 1.0], atol=1e-12)

    s1, _ = rfefc_step(s, None, p)
    decay = 1.0 - s1.clusters[0].rho
    decay_ok = abs(decay - 0.0021333) < 1e-7

    forgotten_at = None
    s2 = s
    for step in range(1, 600):
        s2, ev = rfefc_step(s2, None, p)
        if any(e.kind == "cluster_forgotten" for e in ev):
            forgotten_at = step
            break
    ok = inc_ok and decay_ok and appeared == 5 and forgotten_at == 469
    check("RFEFC state machine", ok,
          f"rho {[round(r, 6) for r in rhos]}, decay {decay:.7f}, detected at update {appeared}, "
          f"forgotten after {forgotten_at} idle hops")


def _run(spec, lat):
    audio, truth = render_scene(spec)
    return process_stream(audio, PipelineConfig(), lat), truth


def test_experiment2(lattice):
    events, truth = _run(experiment2_scene(G), lattice)
    rep = evaluate_tracking(events, truth, tol_deg=10.0, grace_s=2.5)
    errs = {i: s["mean_error_deg"] for i, s in rep["per_source"].items()}
    ok = (rep["detected_count"] == 2 and len(errs) == 2
          and all(e <= 10.0 for e in errs.values()) and rep["ghost_time_s"] < 1.0)
    check("Experiment-2 analog", ok,
          f"{rep['detected_count']} clusters (== 2), mean errors "
          f"{', '.join(f'{e:.2f}' for e in errs.values())} deg (<= 10), "
          f"ghost {rep['ghost_time_s']:.2f} s (< 1)")


def test_experiment3(lattice):
    events, truth = _run(experiment3_scene(G), lattice)
    rep = evaluate_tracking(events, truth, tol_deg=15.0)
    fr = {i: s["azimuth_fraction_within_tol"] for i, s in rep["per_source"].items()}
    ok = len(fr) == 2 and all(f >= 0.9 for f in fr.values())
    check("Experiment-3 analog", ok,
          f"azimuth within 15 deg on {', '.join(f'{100 * f:.1f}%' for f in fr.values())} "
          f"of detected frames (>= 90%)")


def test_calibration_recovery():
    init = ArrayGeometry.from_vector(G.as_vector() + 5e-3)
    grid = latlong_lattice(36)
    clean = calibrate_geometry(FieldDataset.from_geometry(grid, G), init)
    err0 = np.abs(clean.geometry.as_vector() - G.as_vector()).max() * 1e3
    worst = 0.0
    for seed in range(20):
        ds = FieldDataset.from_geometry(grid, G, noise_std=1e-4, rng=seed)
        res = calibrate_geometry(ds, init)
        worst = max(worst, np.abs(res.geometry.as_vector() - G.as_vector()).max() * 1e3)
    check("Calibration recovery", err0 < 1e-4 and worst < 0.5,
          f"noiseless {err0:.2e} mm (< 1e-4), sigma 0.1 mm worst of 20 seeds {worst:.4f} mm (< 0.5)")


def test_realtime_budget(lattice):
    rep = bench(lattice, PipelineConfig(), seconds=60.0)
    ok = rep["speedup"] >= 10 and rep["per_hop_ms"] < 1.07
    check("Real-time budget", ok,
          f"{rep['speedup']:.1f}x real time (>= 10), {rep['per_hop_ms']:.3f} ms per hop (< 1.07)")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
