"""Raw-data files and image output.

Raw payloads are interleaved I/Q float32 pairs. Each payload has a JSON
sidecar header (``<payload>.json`` by default)::

    {"sample_format": "cf32", "endianness": "little", "rows": 2048, "cols": 2048}

A 1-D stream uses ``"length": n`` instead of ``rows``/``cols``. Simulated
files may carry a ``"ground_truth"`` object. It is kept apart on
:class:`RawDataset` and is never passed to the blind pipeline.

Images are written as 16-bit binary PGM (P5, maxval 65535, big-endian).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptFileError, InvalidArgumentError, UnsupportedFormatError

__all__ = ["RawDataset", "read_raw", "write_raw", "header_path_for", "write_image", "read_pgm", "to_gray16"]

SAMPLE_FORMATS = {"cf32": np.float32}
ENDIANNESS = {"little": "<", "big": ">"}


@dataclass
class RawDataset:
    payload: np.ndarray
    header: dict
    ground_truth: dict = field(default_factory=dict, repr=False)

    @property
    def is_stream(self):
        return self.payload.ndim == 1


def header_path_for(path):
    return os.fspath(path) + ".json"


def _dtype(header):
    fmt = header.get("sample_format", "cf32")
    end = header.get("endianness", "little")
    if fmt not in SAMPLE_FORMATS:
        raise UnsupportedFormatError(f"unsupported sample_format {fmt!r}")
    if end not in ENDIANNESS:
        raise UnsupportedFormatError(f"unsupported endianness {end!r}")
    return np.dtype(SAMPLE_FORMATS[fmt]).newbyteorder(ENDIANNESS[end])


def _shape(header):
    try:
        if "length" in header:
            shape = (int(header["length"]),)
        else:
            shape = (int(header["rows"]), int(header["cols"]))
    except (KeyError, TypeError, ValueError) as err:
        raise CorruptFileError(f"header needs 'length' or 'rows' and 'cols': {err}") from None
    if any(s < 1 for s in shape):
        raise CorruptFileError(f"header declares an empty shape {shape}")
    return shape


def read_raw(path, header_path=None):
    """Load a payload and its sidecar header."""
    header_path = header_path or header_path_for(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw:
        raise CorruptFileError(f"{path}: empty payload")
    with open(header_path) as fh:
        try:
            header = json.load(fh)
        except json.JSONDecodeError as err:
            raise CorruptFileError(f"{header_path}: unreadable header ({err})") from None
    if not isinstance(header, dict):
        raise CorruptFileError(f"{header_path}: header must be a JSON object")
    dt = _dtype(header)
    shape = _shape(header)
    n = int(np.prod(shape))
    if len(raw) != 2 * n * dt.itemsize:
        raise CorruptFileError(f"{path}: {len(raw)} bytes, header expects {2 * n * dt.itemsize}")
    iq = np.frombuffer(raw, dtype=dt).astype(np.float32)
    payload = (iq[0::2] + 1j * iq[1::2]).astype(np.complex64).reshape(shape)
    truth = header.pop("ground_truth", {}) or {}
    return RawDataset(payload, header, truth)


def write_raw(path, payload, header_path=None, ground_truth=None, endianness="little"):
    """Write ``payload`` as cf32 plus its JSON header; returns the header path."""
    z = np.asarray(payload)
    if z.ndim not in (1, 2) or z.size == 0:
        raise InvalidArgumentError("payload must be a non-empty 1-D or 2-D array")
    header = {"sample_format": "cf32", "endianness": endianness}
    if z.ndim == 1:
        header["length"] = int(z.size)
    else:
        header["rows"], header["cols"] = map(int, z.shape)
    dt = _dtype(header)
    iq = np.empty(2 * z.size, dtype=dt)
    flat = z.ravel()
    iq[0::2] = flat.real
    iq[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(iq.tobytes())
    if ground_truth:
        header["ground_truth"] = ground_truth
    header_path = header_path or header_path_for(path)
    with open(header_path, "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return header_path


def to_gray16(magnitude, dynamic_range_db=40.0):
    """Map magnitude to 0..65535 over ``[-dynamic_range_db, 0]`` dB below the peak."""
    if not (np.isfinite(dynamic_range_db) and dynamic_range_db > 0):
        raise InvalidArgumentError(f"dynamic range must be positive, got {dynamic_range_db!r}")
    mag = np.abs(np.asarray(magnitude, dtype=float))
    if mag.ndim != 2 or mag.size == 0:
        raise InvalidArgumentError("image magnitude must be a non-empty 2-D array")
    peak = mag.max()
    if not peak > 0:
        # nothing to scale against; every pixel is at the peak
        return np.full(mag.shape, 65535, dtype=np.uint16)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / peak)
    db = np.clip(db, -dynamic_range_db, 0.0)
    return np.rint((db + dynamic_range_db) * (65535.0 / dynamic_range_db)).astype(np.uint16)


def write_image(img, path, dynamic_range_db=40.0):
    """Write an image's magnitude as a 16-bit PGM in dB relative to its peak."""
    mag = img.magnitude if hasattr(img, "magnitude") else img
    gray = to_gray16(mag, dynamic_range_db)
    rows, cols = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        fh.write(gray.astype(">u2").tobytes())


def read_pgm(path):
    """Read a P5 PGM written by :func:`write_image`."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise UnsupportedFormatError(f"{path}: not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dt = ">u2" if maxval > 255 else "u1"
    body = data[len(data) - rows * cols * np.dtype(dt).itemsize :]
    return np.frombuffer(body, dtype=dt).reshape(rows, cols).astype(np.uint16)
