"""Command-line entry point (``tridoa``)."""
from __future__ import annotations

import argparse
import csv
import json
import sys

from . import formats as fmt
from .calibrate import LmSettings, calibrate_geometry
from .geometry import DEFAULT_FAR_FIELD_R, ArrayGeometry
from .lattice import (
    DatasetTooSparse,
    FieldDataset,
    fibonacci_lattice,
    interpolate_field_dataset,
    latlong_lattice,
    synthesize_mappings,
)
from .pipeline import (
    PipelineConfig,
    bench,
    parse_config,
    parse_events,
    pcm_frames,
    process_frames,
    iter_frames,
)
from .simulate import evaluate_tracking, render_scene, run_noise_sweep

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_INPUT = 4
EXIT_INTERNAL = 1


def _out(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        fmt.write_text(path, text)


def _directions(args):
    if getattr(args, "directions", None):
        return fmt.parse_directions(fmt.read_text(args.directions))
    return fibonacci_lattice(args.n)


def cmd_lattice_gen(args):
    _out(args.out, fmt.dump_directions(fibonacci_lattice(args.n), "fibonacci") + "\n")


def cmd_lattice_latlong(args):
    _out(args.out, fmt.dump_directions(latlong_lattice(args.u), "latlong") + "\n")


def cmd_mappings_synth(args):
    g = fmt.parse_geometry(fmt.read_text(args.geometry))
    _out(args.out, fmt.dump_lattice(synthesize_mappings(_directions(args), g, args.r)) + "\n")


def cmd_mappings_interp(args):
    ds = fmt.parse_dataset(fmt.read_text(args.dataset))
    g = fmt.parse_geometry(fmt.read_text(args.geometry)) if args.geometry else None
    lat = interpolate_field_dataset(ds, _directions(args), method=args.method, geometry=g)
    _out(args.out, fmt.dump_lattice(lat) + "\n")


def cmd_dataset_synth(args):
    g = fmt.parse_geometry(fmt.read_text(args.geometry))
    ds = FieldDataset.from_geometry(latlong_lattice(args.u), g, args.distance,
                                    args.noise, args.seed)
    _out(args.out, fmt.dump_dataset(ds))


def cmd_calibrate(args):
    ds = fmt.parse_dataset(fmt.read_text(args.dataset))
    init = fmt.parse_geometry(fmt.read_text(args.init))
    res = calibrate_geometry(ds, init, args.r, LmSettings(max_iter=args.max_iter))
    _out(args.out, fmt.dump_geometry(res.geometry))
    report = (f"records: {len(ds)}\niterations: {res.iterations}\n"
              f"converged: {res.converged}\nrms_residual_m: {res.rms_residual!r}\n"
              f"initial: b={init.b!r} c_x={init.c_x!r} c_y={init.c_y!r}\n"
              f"fitted: b={res.geometry.b!r} c_x={res.geometry.c_x!r} c_y={res.geometry.c_y!r}\n")
    if args.report:
        fmt.write_text(args.report, report)
    else:
        sys.stderr.write(report)
    return 0 if res.converged else 5


def cmd_process(args):
    cfg = parse_config(fmt.read_text(args.config)) if args.config else PipelineConfig()
    lat = fmt.parse_lattice(fmt.read_text(args.mappings))
    if args.wav:
        audio, fs = fmt.read_wav(args.wav)
        if fs != cfg.fs:
            raise ValueError(f"WAV sample rate {fs} differs from config fs {cfg.fs}")
        frames = iter_frames(audio, cfg.L)
    else:
        if args.fs != cfg.fs:
            raise ValueError(f"--fs {args.fs} differs from config fs {cfg.fs}")
        frames = pcm_frames(sys.stdin.buffer, cfg, args.format)
    sink = sys.stdout if args.out in (None, "-") else open(args.out, "w")
    try:
        for ev in process_frames(frames, cfg, lat):
            sink.write(ev.to_json() + "\n")
            if args.wav is None:
                sink.flush()
    finally:
        if sink is not sys.stdout:
            sink.close()


def cmd_simulate(args):
    spec = fmt.parse_scene(fmt.read_text(args.scene))
    audio, truth = render_scene(spec, args.hop)
    fmt.write_wav(args.out_wav, audio, int(spec.fs), args.encoding)
    _out(args.out_truth, fmt.dump_truth(truth))


def cmd_sweep(args):
    g = fmt.parse_geometry(fmt.read_text(args.geometry))
    lat = fmt.parse_lattice(fmt.read_text(args.mappings))
    sigmas = [float(s) for s in args.sigmas.split(",")]
    rows, _ = run_noise_sweep(g, lat, sigmas, args.trials, args.seed, miscal=args.miscal)
    sink = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["sigma_m", "rmse_nns", "rmse_cf", "rmse_cf_miscal", "rmse_cf_cal"])
        for r in rows:
            w.writerow([r.sigma, r.rmse_nns, r.rmse_cf, r.rmse_cf_miscal, r.rmse_cf_cal])
    finally:
        if sink is not sys.stdout:
            sink.close()


def cmd_eval(args):
    events = parse_events(fmt.read_text(args.events))
    truth = fmt.parse_truth(fmt.read_text(args.truth))
    rep = evaluate_tracking(events, truth, args.tol_deg,
                            grace_s=args.grace_s)
    print(json.dumps(rep, indent=2))


def cmd_bench(args):
    g = (fmt.parse_geometry(fmt.read_text(args.geometry)) if args.geometry
         else ArrayGeometry(0.1, 0.05, 0.12))
    lat = synthesize_mappings(fibonacci_lattice(args.n), g)
    rep = bench(lat, PipelineConfig(), args.seconds, args.seed)
    print(json.dumps(rep, indent=2))
    return 0 if rep["speedup"] >= 10 else 6


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tridoa", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    lat = sub.add_parser("lattice", help="generate direction lattices")
    lsub = lat.add_subparsers(dest="kind", required=True)
    a = lsub.add_parser("gen", help="hemispherical Fibonacci lattice")
    a.add_argument("--n", type=int, default=10000)
    a.add_argument("--out")
    a.set_defaults(func=cmd_lattice_gen)
    a = lsub.add_parser("latlong", help="latitude-longitude lattice (u**2 + 1 points)")
    a.add_argument("--u", type=int, required=True)
    a.add_argument("--out")
    a.set_defaults(func=cmd_lattice_latlong)

    mp = sub.add_parser("mappings", help="build TDOA mapping lattices")
    msub = mp.add_subparsers(dest="kind", required=True)
    a = msub.add_parser("synth", help="from the geometric TDOA model")
    a.add_argument("--geometry", required=True)
    a.add_argument("--r", type=float, default=DEFAULT_FAR_FIELD_R)
    a.add_argument("--n", type=int, default=10000)
    a.add_argument("--directions")
    a.add_argument("--out")
    a.set_defaults(func=cmd_mappings_synth)
    a = msub.add_parser("interp", help="resample a field dataset")
    a.add_argument("--dataset", required=True)
    a.add_argument("--geometry")
    a.add_argument("--n", type=int, default=10000)
    a.add_argument("--directions")
    a.add_argument("--method", choices=["affine", "idw"], default="affine")
    a.add_argument("--out")
    a.set_defaults(func=cmd_mappings_interp)

    ds = sub.add_parser("dataset", help="field datasets")
    dsub = ds.add_subparsers(dest="kind", required=True)
    a = dsub.add_parser("synth", help="synthetic dataset on a lat-long grid")
    a.add_argument("--geometry", required=True)
    a.add_argument("--u", type=int, default=36)
    a.add_argument("--distance", type=float)
    a.add_argument("--noise", type=float, default=0.0, help="TDOA noise std (m)")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out")
    a.set_defaults(func=cmd_dataset_synth)

    a = sub.add_parser("calibrate", help="fit array geometry to a field dataset")
    a.add_argument("--dataset", required=True)
    a.add_argument("--init", required=True)
    a.add_argument("--r", type=float, default=DEFAULT_FAR_FIELD_R)
    a.add_argument("--max-iter", type=int, default=200)
    a.add_argument("--out")
    a.add_argument("--report")
    a.set_defaults(func=cmd_calibrate)

    a = sub.add_parser("process", help="run the pipeline, write a JSONL event log")
    src = a.add_mutually_exclusive_group(required=True)
    src.add_argument("--wav")
    src.add_argument("--stdin", action="store_true", help="raw interleaved PCM on stdin")
    a.add_argument("--fs", type=float, default=48000.0)
    a.add_argument("--format", choices=sorted(fmt.PCM_DTYPES), default="s16")
    a.add_argument("--mappings", required=True)
    a.add_argument("--config")
    a.add_argument("--out")
    a.set_defaults(func=cmd_process)

    a = sub.add_parser("simulate", help="render a scene to WAV plus ground truth")
    a.add_argument("--scene", required=True)
    a.add_argument("--out-wav", required=True)
    a.add_argument("--out-truth", required=True)
    a.add_argument("--hop", type=int, default=512)
    a.add_argument("--encoding", choices=["float32", "int16", "int32"], default="float32")
    a.set_defaults(func=cmd_simulate)

    a = sub.add_parser("sweep", help="NNS vs closed-form noise sweep")
    a.add_argument("--geometry", required=True)
    a.add_argument("--mappings", required=True)
    a.add_argument("--sigmas", default="1e-4,1e-3,1e-2,1e-1", help="comma-separated, meters")
    a.add_argument("--trials", type=int, default=10000)
    a.add_argument("--miscal", type=float, default=2e-3)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out")
    a.set_defaults(func=cmd_sweep)

    a = sub.add_parser("eval", help="score an event log against ground truth")
    a.add_argument("--events", required=True)
    a.add_argument("--truth", required=True)
    a.add_argument("--tol-deg", type=float, default=10.0)
    a.add_argument("--grace-s", type=float, default=0.0)
    a.set_defaults(func=cmd_eval)

    a = sub.add_parser("bench", help="real-time factor on synthetic audio")
    a.add_argument("--seconds", type=float, default=60.0)
    a.add_argument("--n", type=int, default=10000)
    a.add_argument("--geometry")
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except fmt.FormatError as e:
        print(f"error[format]: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except (DatasetTooSparse, OSError, ValueError) as e:
        print(f"error[input]: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
