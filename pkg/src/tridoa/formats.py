"""File formats: geometry, lattices, datasets, configs, scenes, logs and WAV.

Every format carries a format name and version; anything else is rejected.
Floats are written with ``repr`` so round trips are exact.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import ArrayGeometry, Direction
from .lattice import FieldDataset, MappingLattice
from .simulate import SceneSpec, SourceSpec, TruthLog, TruthRecord

VERSION = 1


class FormatError(ValueError):
    """Malformed, mistyped or wrongly versioned file."""


class WavError(FormatError):
    """Base class for WAV ingestion problems."""


class WavChannelError(WavError):
    pass


class WavEncodingError(WavError):
    pass


class WavTruncatedError(WavError):
    pass


def _check_header(obj: dict, name: str) -> None:
    if not isinstance(obj, dict) or obj.get("format") != name:
        raise FormatError(f"not a {name} record")
    if obj.get("version") != VERSION:
        raise FormatError(f"unsupported {name} version {obj.get('version')!r}")


# -- geometry ---------------------------------------------------------------

def dump_geometry(g: ArrayGeometry) -> str:
    return (f"format = tridoa-geometry\nversion = {VERSION}\n"
            f"b = {g.b!r}\nc_x = {g.c_x!r}\nc_y = {g.c_y!r}\n")


def parse_geometry(text: str) -> ArrayGeometry:
    rec = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        rec[key] = value
    if rec.get("format") != "tridoa-geometry":
        raise FormatError("not a tridoa-geometry record")
    if rec.get("version") != str(VERSION):
        raise FormatError(f"unsupported geometry version {rec.get('version')!r}")
    try:
        return ArrayGeometry(float(rec["b"]), float(rec["c_x"]), float(rec["c_y"]))
    except KeyError as e:
        raise FormatError(f"geometry record missing field {e}") from None
    except ValueError as e:
        raise FormatError(f"invalid geometry: {e}") from None


def _geometry_dict(g: Optional[ArrayGeometry]):
    return None if g is None else {"b": g.b, "c_x": g.c_x, "c_y": g.c_y}


def _geometry_from(d) -> Optional[ArrayGeometry]:
    if d is None:
        return None
    try:
        return ArrayGeometry(float(d["b"]), float(d["c_x"]), float(d["c_y"]))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"invalid geometry: {e}") from None


# -- directions and mapping lattices --------------------------------------------

def dump_directions(directions, kind: str = "custom") -> str:
    d = np.asarray(directions, dtype=float)
    return json.dumps({"format": "tridoa-directions", "version": VERSION, "kind": kind,
                       "N": len(d), "directions": d.tolist()})


def parse_directions(text: str) -> np.ndarray:
    obj = _loads(text)
    _check_header(obj, "tridoa-directions")
    d = np.asarray(obj.get("directions"), dtype=float)
    if d.ndim != 2 or d.shape[1] != 2 or len(d) != obj.get("N"):
        raise FormatError("directions must be N rows of (theta, phi)")
    return d


def dump_lattice(lat: MappingLattice) -> str:
    entries = np.column_stack([lat.directions, lat.tdoas]).tolist()
    return json.dumps({"format": "tridoa-lattice", "version": VERSION, "N": lat.N,
                       "geometry": _geometry_dict(lat.geometry), "r": lat.r,
                       "entries": entries})


def parse_lattice(text: str) -> MappingLattice:
    obj = _loads(text)
    _check_header(obj, "tridoa-lattice")
    try:
        e = np.asarray(obj["entries"], dtype=float)
    except (KeyError, ValueError, TypeError):
        raise FormatError("lattice entries missing or not numeric") from None
    if e.ndim != 2 or e.shape[1] != 5 or len(e) != obj.get("N") or len(e) == 0:
        raise FormatError("lattice entries must be N rows of (theta, phi, r12, r13, r23)")
    return MappingLattice(e[:, :2], e[:, 2:], geometry=_geometry_from(obj.get("geometry")),
                          r=obj.get("r"))


# -- field dataset ----------------------------------------------------------

DATASET_MAGIC = "# tridoa-dataset"
DATASET_COLUMNS = ["theta", "phi", "r12", "r13", "r23"]


def dump_dataset(ds: FieldDataset) -> str:
    buf = io.StringIO()
    buf.write(f"{DATASET_MAGIC} v{VERSION}\n")
    cols = DATASET_COLUMNS + (["distance"] if ds.distance is not None else [])
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for i in range(len(ds)):
        row = [ds.theta[i], ds.phi[i], *ds.tdoas[i]]
        if ds.distance is not None:
            row.append(ds.distance[i])
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def parse_dataset(text: str) -> FieldDataset:
    lines = text.splitlines()
    if lines and lines[0].startswith("#"):
        tag = lines[0].strip()
        if tag != f"{DATASET_MAGIC} v{VERSION}":
            raise FormatError(f"unsupported dataset header {tag!r}")
        lines = lines[1:]
    rows = list(csv.reader(l for l in lines if l.strip()))
    if not rows:
        raise FormatError("dataset is empty")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in DATASET_COLUMNS if c not in header]
    if missing:
        raise FormatError(f"dataset header lacks columns {missing}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as e:
        raise FormatError(f"non-numeric dataset value: {e}") from None
    if data.size == 0 or data.shape[1] != len(header):
        raise FormatError("dataset rows do not match the header")
    col = {name: data[:, i] for i, name in enumerate(header)}
    return FieldDataset(col["theta"], col["phi"],
                        np.column_stack([col["r12"], col["r13"], col["r23"]]),
                        col.get("distance"))


# -- json helpers -----------------------------------------------------------

def _loads(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e}") from None


def read_text(path) -> str:
    return Path(path).read_text()


def write_text(path, text: str) -> None:
    Path(path).write_text(text)


# -- WAV --------------------------------------------------------------------

_PCM, _FLOAT, _EXTENSIBLE = 1, 3, 0xFFFE


def read_wav(path, channels: Optional[int] = 3):
    """Read a PCM WAV file as ``(channels, frames)`` floats in [-1, 1] and fs.

    16/32-bit integer and 32-bit float encodings are accepted. Integers are
    scaled by 2**(bits-1), so the most negative code maps to -1.0.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavEncodingError("not a RIFF/WAVE file")
    pos, fmt, data = 12, None, None
    while pos + 8 <= len(raw):
        cid, size = raw[pos:pos + 4], struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body = raw[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavTruncatedError("fmt chunk truncated")
            fmt = struct.unpack("<HHIIHH", body[:16])
            if fmt[0] == _EXTENSIBLE and len(body) >= 26:
                fmt = (struct.unpack("<H", body[24:26])[0],) + fmt[1:]
        elif cid == b"data":
            if len(body) < size:
                raise WavTruncatedError(f"data chunk holds {len(body)} of {size} bytes")
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavTruncatedError("missing fmt chunk")
    if data is None:
        raise WavTruncatedError("missing data chunk")
    tag, nch, fs, _, align, bits = fmt
    if channels is not None and nch != channels:
        raise WavChannelError(f"expected {channels} channels, file has {nch}")
    if tag == _PCM and bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif tag == _PCM and bits == 32:
        x = np.frombuffer(data, dtype="<i4").astype(np.float64) / 2147483648.0
    elif tag == _FLOAT and bits == 32:
        x = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise WavEncodingError(f"unsupported encoding: format tag {tag}, {bits} bits")
    if len(x) % nch:
        raise WavTruncatedError("data chunk ends inside a sample frame")
    return x.reshape(-1, nch).T.copy(), int(fs)


def write_wav(path, signal, fs: int, encoding: str = "float32") -> None:
    """Write ``(channels, frames)`` samples; ``encoding`` is float32, int16 or int32."""
    x = np.atleast_2d(np.asarray(signal, dtype=np.float64))
    nch = x.shape[0]
    inter = x.T
    if encoding == "float32":
        tag, bits, payload = _FLOAT, 32, inter.astype("<f4").tobytes()
    elif encoding in ("int16", "int32"):
        bits = 16 if encoding == "int16" else 32
        full = 2 ** (bits - 1)
        q = np.clip(np.round(inter * full), -full, full - 1)
        tag, payload = _PCM, q.astype("<i2" if bits == 16 else "<i4").tobytes()
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    align = nch * bits // 8
    fmt = struct.pack("<HHIIHH", tag, nch, int(fs), int(fs) * align, align, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


PCM_DTYPES = {"s16": "<i2", "s32": "<i4", "f32": "<f4"}


def decode_pcm(buf: bytes, fmt: str, channels: int = 3) -> np.ndarray:
    """Interleaved raw PCM bytes to ``(channels, frames)`` floats."""
    if fmt not in PCM_DTYPES:
        raise WavEncodingError(f"unknown raw PCM format {fmt!r}")
    x = np.frombuffer(buf, dtype=PCM_DTYPES[fmt]).astype(np.float64)
    if fmt == "s16":
        x /= 32768.0
    elif fmt == "s32":
        x /= 2147483648.0
    return x.reshape(-1, channels).T


# -- scenes and ground truth ------------------------------------------------

def dump_scene(spec) -> str:
    srcs = []
    for s in spec.sources:
        srcs.append({
            "azimuth_deg": math.degrees(s.direction.theta),
            "elevation_deg": math.degrees(s.direction.phi),
            "distance": s.distance, "kind": s.kind, "period_ms": s.period_ms,
            "duty": s.duty, "phase": s.phase, "gain": s.gain,
            "active_intervals": [list(iv) for iv in s.active_intervals],
        })
    return json.dumps({
        "format": "tridoa-scene", "version": VERSION,
        "geometry": _geometry_dict(spec.geometry), "fs": spec.fs,
        "duration": spec.duration, "snr_db": spec.snr_db,
        "rotation_period": spec.rotation_period, "seed": spec.seed, "c": spec.c,
        "noise_level": spec.noise_level, "sources": srcs,
    }, indent=2) + "\n"


def parse_scene(text: str):
    obj = _loads(text)
    _check_header(obj, "tridoa-scene")
    try:
        sources = tuple(
            SourceSpec(
                Direction.from_degrees(s["azimuth_deg"], s["elevation_deg"]),
                float(s.get("distance", 2.0)), s.get("kind", "white_noise"),
                float(s.get("period_ms", 400.0)), float(s.get("duty", 0.5)),
                float(s.get("phase", 0.0)),
                tuple(tuple(float(v) for v in iv) for iv in s.get("active_intervals", [])),
                float(s.get("gain", 1.0)),
            )
            for s in obj.get("sources", [])
        )
        return SceneSpec(
            _geometry_from(obj["geometry"]), float(obj.get("fs", 48000.0)),
            float(obj["duration"]), sources, float(obj.get("snr_db", 30.0)),
            obj.get("rotation_period"), int(obj.get("seed", 0)),
            float(obj.get("c", 343.0)), float(obj.get("noise_level", 1e-2)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"invalid scene: {e}") from None


def dump_truth(truth) -> str:
    head = json.dumps({"format": "tridoa-truth", "version": VERSION,
                       "hop": truth.hop, "fs": truth.fs})
    lines = [head]
    for rec in truth.records:
        lines.append(json.dumps({"time": rec.time, "sources": [
            {"index": i, "theta": d.theta, "phi": d.phi} for i, d in rec.sources]},
            separators=(",", ":")))
    return "\n".join(lines) + "\n"


def parse_truth(text: str):
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise FormatError("empty truth log")
    head = _loads(lines[0])
    _check_header(head, "tridoa-truth")
    records = []
    for l in lines[1:]:
        r = _loads(l)
        try:
            records.append(TruthRecord(float(r["time"]), [
                (int(s["index"]), Direction(float(s["theta"]), float(s["phi"])))
                for s in r["sources"]]))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"invalid truth record: {e}") from None
    return TruthLog(int(head["hop"]), float(head["fs"]), records)
