#!/usr/bin/env python3
"""
File formats

- EVT1 binary event files and the `t,x,y,p` CSV alternative
- 8-bit PGM (P5) / PPM (P6) frames and numbered frame directories
- TNSR raw float tensors

All multi-byte fields are little-endian except the PNM payload, which is
8-bit. Every read/write failure is raised as InputError carrying the path.
"""

import re
import struct
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from backend.app.core.errors import InputError
from backend.app.physics.events import EventStream

PathLike = Union[str, Path]

EVT1_MAGIC = b"EVT1\x00\x00\x00\x00"
_EVT1_HEADER = struct.Struct("<8sIIdQ")
EVT1_RECORD = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "u1")]
)

TNSR_MAGIC = b"TNSR"
EVENT_CSV_HEADER = "t,x,y,p"
FRAME_SUFFIXES = (".pgm", ".ppm")


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"cannot read file: {e.strerror or e}", path=str(path))


def _write_bytes(path: PathLike, payload: bytes) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise InputError(f"cannot write file: {e.strerror or e}", path=str(path))
    return path


# ---------------------------------------------------------------- events


def encode_evt1(stream: EventStream) -> bytes:
    header = _EVT1_HEADER.pack(
        EVT1_MAGIC, stream.width, stream.height, float(stream.beta), len(stream)
    )
    records = np.zeros(len(stream), dtype=EVT1_RECORD)
    records["t"] = stream.t
    records["x"] = stream.x
    records["y"] = stream.y
    records["p"] = stream.p
    return header + records.tobytes()


def decode_evt1(
    payload: bytes, t_span: Optional[Tuple[int, int]] = None, source: str = "<bytes>"
) -> EventStream:
    if len(payload) < _EVT1_HEADER.size:
        raise InputError("truncated EVT1 header", path=source)
    magic, width, height, beta, count = _EVT1_HEADER.unpack_from(payload)
    if magic != EVT1_MAGIC:
        raise InputError("not an EVT1 file (bad magic)", path=source)
    body = payload[_EVT1_HEADER.size:]
    if len(body) != count * EVT1_RECORD.itemsize:
        raise InputError(
            f"EVT1 declares {count} events but holds {len(body)} record bytes", path=source
        )
    records = np.frombuffer(body, dtype=EVT1_RECORD, count=count)
    try:
        return EventStream.build(
            records["t"].astype(np.int64), records["x"], records["y"], records["p"],
            (width, height), beta, t_span,
        )
    except InputError as e:
        raise InputError(e.message, path=source)


def write_evt1(stream: EventStream, path: PathLike) -> Path:
    return _write_bytes(path, encode_evt1(stream))


def read_evt1(path: PathLike, t_span: Optional[Tuple[int, int]] = None) -> EventStream:
    """Load an EVT1 file; t_span defaults to (first event, last event + 1)"""
    return decode_evt1(_read_bytes(path), t_span, source=str(path))


def write_events_csv(stream: EventStream, path: PathLike) -> Path:
    lines = [EVENT_CSV_HEADER]
    lines.extend(f"{e.t},{e.x},{e.y},{e.p}" for e in stream)
    return _write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_events_csv(
    path: PathLike,
    sensor_size: Tuple[int, int],
    beta: float,
    t_span: Optional[Tuple[int, int]] = None,
) -> EventStream:
    """CSV carries no sensor metadata, so size and threshold are passed in"""
    text = _read_bytes(path).decode("ascii", errors="replace").splitlines()
    if not text or text[0].strip() != EVENT_CSV_HEADER:
        raise InputError(f"expected CSV header '{EVENT_CSV_HEADER}'", path=str(path))
    rows = [line for line in text[1:] if line.strip()]
    try:
        data = np.array([[int(v) for v in row.split(",")] for row in rows], dtype=np.int64)
    except ValueError as e:
        raise InputError(f"malformed event row: {e}", path=str(path))
    if data.size == 0:
        data = np.zeros((0, 4), dtype=np.int64)
    if data.shape[1] != 4:
        raise InputError("every event row needs 4 fields", path=str(path))
    try:
        return EventStream.build(
            data[:, 0], data[:, 1], data[:, 2], data[:, 3], sensor_size, beta, t_span
        )
    except InputError as e:
        raise InputError(e.message, path=str(path))


# ---------------------------------------------------------------- frames


def encode_pnm(plane: np.ndarray) -> bytes:
    """P5 for H x W planes, P6 for H x W x 3; values in [0, 1] rounded to 8 bit"""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim == 2:
        kind = b"P5"
    elif plane.ndim == 3 and plane.shape[-1] == 3:
        kind = b"P6"
    else:
        raise InputError(f"cannot encode plane of shape {plane.shape} as PNM")
    height, width = plane.shape[:2]
    data = np.rint(np.clip(plane, 0.0, 1.0) * 255.0).astype(np.uint8)
    return kind + f"\n{width} {height}\n255\n".encode("ascii") + data.tobytes()


_PNM_HEADER = re.compile(rb"(P[56])\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


def decode_pnm(payload: bytes, source: str = "<bytes>") -> np.ndarray:
    match = _PNM_HEADER.match(payload)
    if match is None:
        raise InputError("not a binary PGM/PPM image", path=source)
    kind = match.group(1)
    width, height, maxval = (int(g) for g in match.groups()[1:])
    if not 0 < maxval < 65536:
        raise InputError(f"invalid PNM maxval {maxval}", path=source)
    channels = 3 if kind == b"P6" else 1
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    expected = width * height * channels * np.dtype(dtype).itemsize
    body = payload[match.end():match.end() + expected]
    if len(body) != expected:
        raise InputError("truncated PNM pixel data", path=source)
    data = np.frombuffer(body, dtype=dtype).astype(np.float64) / maxval
    shape = (height, width, 3) if channels == 3 else (height, width)
    return data.reshape(shape)


def write_pnm(plane: np.ndarray, path: PathLike) -> Path:
    return _write_bytes(path, encode_pnm(plane))


def read_pnm(path: PathLike) -> np.ndarray:
    return decode_pnm(_read_bytes(path), source=str(path))


def _frame_number(path: Path) -> int:
    digits = re.findall(r"\d+", path.stem)
    if not digits:
        raise InputError("frame file name carries no frame number", path=str(path))
    return int(digits[-1])


def list_frame_files(directory: PathLike) -> List[Path]:
    """PGM/PPM files of a directory ordered by the number in their names"""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError("frame directory not found", path=str(directory))
    files = [p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES]
    if not files:
        raise InputError("no PGM/PPM frames in directory", path=str(directory))
    files.sort(key=_frame_number)
    numbers = [_frame_number(p) for p in files]
    if len(set(numbers)) != len(numbers):
        raise InputError("duplicate frame numbers", path=str(directory))
    return files


def read_frame_dir(directory: PathLike) -> np.ndarray:
    """Stack of frames as N x H x W (or N x H x W x 3) float64"""
    planes = [read_pnm(p) for p in list_frame_files(directory)]
    shapes = {p.shape for p in planes}
    if len(shapes) != 1:
        raise InputError(f"frames differ in shape: {sorted(shapes)}", path=str(directory))
    return np.stack(planes)


def write_frame_dir(frames: np.ndarray, directory: PathLike, prefix: str = "frame") -> List[Path]:
    directory = Path(directory)
    paths = []
    for i, plane in enumerate(frames):
        suffix = ".ppm" if np.ndim(plane) == 3 else ".pgm"
        paths.append(write_pnm(plane, directory / f"{prefix}_{i:05d}{suffix}"))
    return paths


# ---------------------------------------------------------------- tensors


def encode_tnsr(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    header = TNSR_MAGIC + struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape)
    return header + np.ascontiguousarray(array, dtype="<f4").tobytes()


def decode_tnsr(payload: bytes, source: str = "<bytes>") -> np.ndarray:
    """Decode to float32 (the on-disk precision)"""
    if len(payload) < 8 or payload[:4] != TNSR_MAGIC:
        raise InputError("not a TNSR tensor (bad magic)", path=source)
    (rank,) = struct.unpack_from("<I", payload, 4)
    offset = 8 + 4 * rank
    if len(payload) < offset:
        raise InputError("truncated TNSR header", path=source)
    dims = struct.unpack_from(f"<{rank}I", payload, 8)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    body = payload[offset:]
    if len(body) != 4 * count:
        raise InputError(
            f"TNSR shape {list(dims)} needs {4 * count} bytes, found {len(body)}", path=source
        )
    return np.frombuffer(body, dtype="<f4").reshape(dims).astype(np.float32)


def write_tnsr(array: np.ndarray, path: PathLike) -> Path:
    return _write_bytes(path, encode_tnsr(array))


def read_tnsr(path: PathLike) -> np.ndarray:
    return decode_tnsr(_read_bytes(path), source=str(path))
