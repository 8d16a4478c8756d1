"""Portable binary container for backbone and classifier parameters.

Layout: magic ``AMDW``, version byte 0x01, a little-endian u32 length
prefix, a UTF-8 JSON header, then the raw tensors as little-endian float32
in header order, row-major, with no padding.

The JSON header holds ``tensors`` (ordered list of ``{"name", "shape"}``)
and optionally ``backbone`` (the layer graph, referencing tensor names).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

MAGIC = b"AMDW"
VERSION = 1

_MAX_HEADER_BYTES = 16 * 1024 * 1024


@dataclass
class WeightBundle:
    """Parsed bundle: named float32 tensors plus an optional backbone graph spec."""

    tensors: dict[str, np.ndarray]
    backbone_spec: dict | None = None
    order: list[str] = field(default_factory=list)


def read_bundle(path) -> WeightBundle:
    """Parse a bundle file; raises FormatError on bad magic, truncation, or bad header."""
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_bundle(data)


def parse_bundle(data: bytes) -> WeightBundle:
    if len(data) < len(MAGIC) + 1 + 4:
        raise FormatError("bundle shorter than its fixed header")
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic {data[:len(MAGIC)]!r}")
    version = data[len(MAGIC)]
    if version != VERSION:
        raise FormatError(f"unsupported bundle version {version}")

    offset = len(MAGIC) + 1
    (header_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if header_len > _MAX_HEADER_BYTES:
        raise FormatError(f"implausible header length {header_len}")
    if offset + header_len > len(data):
        raise FormatError("truncated header")
    try:
        header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad header JSON: {exc}") from exc
    offset += header_len

    entries = header.get("tensors")
    if not isinstance(entries, list):
        raise FormatError("header missing tensor list")

    tensors: dict[str, np.ndarray] = {}
    order: list[str] = []
    for entry in entries:
        try:
            name = entry["name"]
            shape = tuple(int(d) for d in entry["shape"])
        except (TypeError, KeyError, ValueError) as exc:
            raise FormatError(f"bad tensor entry {entry!r}") from exc
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        if any(d <= 0 for d in shape):
            raise FormatError(f"tensor {name!r} has non-positive dimension {shape}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise FormatError(f"truncated tensor data for {name!r}")
        flat = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        tensors[name] = flat.reshape(shape).astype(np.float32)
        order.append(name)
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after tensor data")

    backbone_spec = header.get("backbone")
    if backbone_spec is not None and not isinstance(backbone_spec, dict):
        raise FormatError("backbone section must be an object")
    return WeightBundle(tensors=tensors, backbone_spec=backbone_spec, order=order)


def write_bundle(path, tensors: dict[str, np.ndarray], backbone_spec: dict | None = None) -> None:
    """Serialize tensors (iteration order == storage order) to a bundle file."""
    with open(path, "wb") as fh:
        fh.write(serialize_bundle(tensors, backbone_spec))


def serialize_bundle(tensors: dict[str, np.ndarray], backbone_spec: dict | None = None) -> bytes:
    entries = []
    blobs = []
    for name, tensor in tensors.items():
        tensor = np.ascontiguousarray(tensor, dtype="<f4")
        entries.append({"name": name, "shape": list(tensor.shape)})
        blobs.append(tensor.tobytes())
    header: dict = {"tensors": entries}
    if backbone_spec is not None:
        header["backbone"] = backbone_spec
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, bytes([VERSION]), struct.pack("<I", len(header_bytes)),
                     header_bytes, *blobs])
