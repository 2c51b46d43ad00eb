"""End-to-end frame pipeline: measure, gate, cluster, log."""
from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Iterator, Optional

import numpy as np

from .correlator import Weighting, frame_count, measure_frame
from .filtergate import FilterThresholds, apply_gate
from .formats import FormatError, _check_header, _geometry_dict, _geometry_from, _loads, decode_pcm
from .geometry import (DEFAULT_FAR_FIELD_R, SPEED_OF_SOUND, ArrayGeometry, Direction,
                       direction_to_point, point_to_direction)
from .lattice import MappingLattice
from .simulate import SceneSpec, SourceSpec, render_scene
from .tracker import TrackerParams, TrackerState, rfefc_step

EVENT_LOG_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    fs: float = 48000.0
    L: int = 1024
    c: float = SPEED_OF_SOUND
    weighting: Weighting = Weighting()
    thresholds: FilterThresholds = FilterThresholds()
    tracker: Optional[TrackerParams] = None
    far_field_r: float = DEFAULT_FAR_FIELD_R
    geometry: Optional[ArrayGeometry] = None

    def __post_init__(self):
        if self.L < 4 or self.L & (self.L - 1):
            raise ValueError(f"frame length L must be a power of two, got {self.L}")
        if self.fs <= 0 or self.c <= 0:
            raise ValueError("fs and c must be positive")
        if self.tracker is None:
            object.__setattr__(self, "tracker", TrackerParams.for_stream(self.L, self.fs))
        elif abs(self.tracker.dt - self.hop / self.fs) > 1e-12:
            raise ValueError(f"tracker dt {self.tracker.dt} does not equal L/(2 fs) = {self.hop / self.fs}")

    @property
    def hop(self) -> int:
        return self.L // 2

    @property
    def overlap(self) -> float:
        return 0.5

    def to_dict(self) -> dict:
        tr = asdict(self.tracker)
        tr.pop("dt")
        return {
            "format": "tridoa-config", "version": 1,
            "fs": self.fs, "L": self.L, "overlap": 0.5, "c": self.c,
            "weighting": asdict(self.weighting),
            "thresholds": asdict(self.thresholds),
            "tracker": tr,
            "far_field_r": self.far_field_r,
            "geometry": _geometry_dict(self.geometry),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        _check_header(d, "tridoa-config")
        if d.get("overlap", 0.5) != 0.5:
            raise FormatError("only 50% overlap is supported")
        try:
            fs = float(d.get("fs", 48000.0))
            L = int(d.get("L", 1024))
            tr = dict(d.get("tracker") or {})
            tr.setdefault("dt", L / (2 * fs))
            return cls(
                fs=fs, L=L, c=float(d.get("c", SPEED_OF_SOUND)),
                weighting=Weighting(**(d.get("weighting") or {})),
                thresholds=FilterThresholds(**(d.get("thresholds") or {})),
                tracker=TrackerParams(**tr),
                far_field_r=float(d.get("far_field_r", DEFAULT_FAR_FIELD_R)),
                geometry=_geometry_from(d.get("geometry")),
            )
        except (TypeError, ValueError) as e:
            raise FormatError(f"invalid config: {e}") from None


def dump_config(cfg: PipelineConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2) + "\n"


def parse_config(text: str) -> PipelineConfig:
    return PipelineConfig.from_dict(_loads(text))


@dataclass
class FrameEvent:
    time: float
    k: int
    pairs: list  # [{"lag", "peak", "beta"}]
    accepted: bool
    failed_stage: str
    nns_error: Optional[float]
    direction: Optional[tuple]  # (theta, phi) when accepted
    clusters: list  # active clusters: {"id", "theta", "phi", "rho", "detected"}
    events: list  # tracker events: {"kind", "cluster", "time"}

    def to_json(self) -> str:
        d = {"v": EVENT_LOG_VERSION}
        d.update(asdict(self))
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "FrameEvent":
        d = _loads(line)
        if not isinstance(d, dict) or d.pop("v", None) != EVENT_LOG_VERSION:
            raise FormatError("unsupported event log version")
        names = {f.name for f in fields(cls)}
        if set(d) != names:
            raise FormatError(f"event record fields {sorted(d)} do not match the schema")
        if d["direction"] is not None:
            d["direction"] = tuple(d["direction"])
        return cls(**d)


def dump_events(events: Iterable[FrameEvent]) -> str:
    return "".join(e.to_json() + "\n" for e in events)


def parse_events(text: str) -> list:
    return [FrameEvent.from_json(l) for l in text.splitlines() if l.strip()]


def _snapshot(state: TrackerState) -> list:
    out = []
    for c in state.clusters:
        if c.centroid is None:
            continue
        th, ph = point_to_direction(c.centroid)
        out.append({"id": c.id, "theta": th, "phi": ph, "rho": c.rho, "detected": c.detected})
    return out


def _resolve_geometry(cfg: PipelineConfig, lat: MappingLattice) -> ArrayGeometry:
    g = cfg.geometry or lat.geometry
    if g is None:
        raise ValueError("no array geometry in the config or the mapping lattice")
    if cfg.geometry is not None and lat.geometry is not None and cfg.geometry != lat.geometry:
        raise ValueError("config geometry differs from the mapping lattice geometry")
    return g


def process_frames(frames: Iterable[np.ndarray], cfg: PipelineConfig,
                   lat: MappingLattice) -> Iterator[FrameEvent]:
    """Run the pipeline over an iterable of ``(3, L)`` frames, one event each."""
    g = _resolve_geometry(cfg, lat)
    p = cfg.tracker
    state = TrackerState.empty(p)
    for k, frame in enumerate(frames):
        m = measure_frame(frame, g, cfg.fs, cfg.c, cfg.weighting, k)
        verdict = apply_gate(m, lat, cfg.thresholds)
        point = direction_to_point(verdict.direction) if verdict.accepted else None
        state, tev = rfefc_step(state, point, p)
        betas = verdict.betas or tuple(None for _ in m.pairs)
        yield FrameEvent(
            time=k * p.dt,
            k=k,
            pairs=[{"lag": pm.refined_lag, "peak": pm.peak_value, "beta": b}
                   for pm, b in zip(m.pairs, betas)],
            accepted=verdict.accepted,
            failed_stage=verdict.failed_stage,
            nns_error=verdict.nns_error,
            direction=tuple(verdict.direction) if verdict.accepted else None,
            clusters=_snapshot(state),
            events=[{"kind": e.kind, "cluster": e.cluster, "time": e.time} for e in tev],
        )


def iter_frames(audio: np.ndarray, L: int) -> Iterator[np.ndarray]:
    x = np.asarray(audio, dtype=float)
    if x.ndim != 2 or x.shape[0] != 3:
        raise ValueError("audio must have shape (3, samples)")
    hop = L // 2
    for k in range(frame_count(x.shape[1], L)):
        yield x[:, k * hop:k * hop + L]


def process_stream(audio, cfg: PipelineConfig, lat: MappingLattice) -> list:
    """All frame events for a 3-channel signal."""
    return list(process_frames(iter_frames(audio, cfg.L), cfg, lat))


def pcm_frames(stream, cfg: PipelineConfig, fmt: str = "s16",
               max_queue: int = 32) -> Iterator[np.ndarray]:
    """Frames from raw interleaved 3-channel PCM read off a binary stream.

    A reader thread fills a bounded queue; when it is full the reader blocks,
    which in turn stalls the producer on the other end of the pipe.
    """
    width = {"s16": 2, "s32": 4, "f32": 4}[fmt] * 3
    hop = cfg.hop
    q: queue.Queue = queue.Queue(maxsize=max_queue)
    done = object()

    def reader():
        try:
            while True:
                buf = b""
                while len(buf) < hop * width:
                    chunk = stream.read(hop * width - len(buf))
                    if not chunk:
                        break
                    buf += chunk
                if len(buf) < hop * width:
                    break
                q.put(decode_pcm(buf, fmt))
        finally:
            q.put(done)

    threading.Thread(target=reader, daemon=True).start()
    prev = None
    while True:
        block = q.get()
        if block is done:
            return
        if prev is not None:
            yield np.concatenate([prev, block], axis=1)
        prev = block


def bench(lat: MappingLattice, cfg: PipelineConfig = PipelineConfig(), seconds: float = 60.0,
          seed: int = 0) -> dict:
    """Time the pipeline on a synthetic single-source recording."""
    g = _resolve_geometry(cfg, lat)
    src = SourceSpec(Direction.from_degrees(40, 25), 2.0, "am_noise_bursts")
    audio, _ = render_scene(SceneSpec(g, cfg.fs, seconds, (src,), 20.0, None, seed), cfg.hop)
    # warm the compiled search path before timing
    lat.lookup(lat.tdoas[0])
    t0 = time.perf_counter()
    events = process_stream(audio, cfg, lat)
    elapsed = time.perf_counter() - t0
    return {
        "audio_s": seconds,
        "elapsed_s": elapsed,
        "hops": len(events),
        "per_hop_ms": 1e3 * elapsed / max(1, len(events)),
        "hop_period_ms": 1e3 * cfg.hop / cfg.fs,
        "realtime_factor": elapsed / seconds,
        "speedup": seconds / elapsed,
    }
