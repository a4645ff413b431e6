"""PFM (Portable Float Map) and binary PPM codecs.

PFM stores 32-bit floats bottom-to-top; a negative scale line marks
little-endian data, which is what :func:`write_pfm` always emits.  Values
are widened to float64 on read.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .exceptions import ContractError, FormatError

__all__ = ["write_pfm", "read_pfm", "write_ppm", "read_ppm", "save_pfm", "load_pfm",
           "save_ppm", "load_ppm"]

_DIMS_RE = re.compile(rb"^\s*(\d+)\s+(\d+)\s*$")


def write_pfm(field) -> bytes:
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim == 2:
        magic = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    else:
        raise ContractError(f"PFM needs (H, W) or (H, W, 3) data, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError("PFM payload must be finite")
    h, w = arr.shape[:2]
    header = magic + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n"
    payload = np.ascontiguousarray(arr[::-1], dtype="<f4").tobytes()
    return header + payload


def _read_line(data, pos):
    end = data.find(b"\n", pos)
    if end < 0:
        raise FormatError("unterminated header line", pos)
    return data[pos:end], end + 1


def read_pfm(data: bytes):
    data = bytes(data)
    line, pos = _read_line(data, 0)
    magic = line.strip()
    if magic == b"Pf":
        channels = 1
    elif magic == b"PF":
        channels = 3
    else:
        raise FormatError(f"bad PFM magic {magic!r}", 0)
    dims_at = pos
    line, pos = _read_line(data, pos)
    m = _DIMS_RE.match(line)
    if not m:
        raise FormatError(f"bad PFM dimensions line {line!r}", dims_at)
    w, h = int(m.group(1)), int(m.group(2))
    scale_at = pos
    line, pos = _read_line(data, pos)
    try:
        scale = float(line.strip())
    except ValueError:
        raise FormatError(f"bad PFM scale line {line!r}", scale_at) from None
    if scale == 0.0:
        raise FormatError("PFM scale must be nonzero", scale_at)
    dtype = "<f4" if scale < 0 else ">f4"
    need = w * h * channels * 4
    if len(data) - pos < need:
        raise FormatError(
            f"truncated PFM payload: need {need} bytes, have {len(data) - pos}", len(data)
        )
    flat = np.frombuffer(data, dtype=dtype, count=w * h * channels, offset=pos)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return flat.reshape(shape)[::-1].astype(np.float64)


def write_ppm(image) -> bytes:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractError(f"PPM needs (H, W, 3) data, got {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ContractError("PPM values must lie in [0, 1]")
    h, w = arr.shape[:2]
    payload = np.rint(arr * 255.0).astype(np.uint8).tobytes()
    return f"P6\n{w} {h}\n255\n".encode() + payload


def read_ppm(data: bytes):
    data = bytes(data)
    if data[:2] != b"P6":
        raise FormatError(f"bad PPM magic {data[:2]!r}", 0)
    # header: magic, width, height, maxval separated by whitespace; comments start with '#'
    tokens = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(data):
            raise FormatError("truncated PPM header", pos)
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise FormatError("unterminated PPM comment", pos)
            pos = nl + 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tok = data[start:pos]
            if not tok.isdigit():
                raise FormatError(f"bad PPM header token {tok!r}", start)
            tokens.append(int(tok))
    w, h, maxval = tokens
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval}, expected 255", pos)
    pos += 1  # single whitespace byte after maxval
    need = w * h * 3
    if len(data) - pos < need:
        raise FormatError(
            f"truncated PPM payload: need {need} bytes, have {len(data) - pos}", len(data)
        )
    raw = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return raw.reshape(h, w, 3).astype(np.float64) / 255.0


def save_pfm(path, field):
    Path(path).write_bytes(write_pfm(field))


def load_pfm(path):
    return read_pfm(Path(path).read_bytes())


def save_ppm(path, image):
    Path(path).write_bytes(write_ppm(image))


def load_ppm(path):
    return read_ppm(Path(path).read_bytes())
