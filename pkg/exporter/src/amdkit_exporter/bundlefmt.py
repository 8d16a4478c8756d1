"""Stand-alone writer for the engine's weight bundle container.

Deliberately independent of the engine package: bundles written here are
parsed by the engine's own reader, so the two implementations cross-check
each other.  Layout: magic ``AMDW``, version byte 0x01, u32 little-endian
header length, UTF-8 JSON header (``tensors`` list in storage order, plus
an optional ``backbone`` graph), then each tensor as little-endian float32,
row-major, unpadded.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"AMDW"
VERSION = 1


def serialize(tensors: dict[str, np.ndarray], backbone: dict | None = None) -> bytes:
    entries = []
    blobs = []
    for name, tensor in tensors.items():
        tensor = np.ascontiguousarray(tensor, dtype="<f4")
        entries.append({"name": name, "shape": list(tensor.shape)})
        blobs.append(tensor.tobytes())
    header: dict = {"tensors": entries}
    if backbone is not None:
        header["backbone"] = backbone
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, bytes([VERSION]), struct.pack("<I", len(header_bytes)),
                     header_bytes, *blobs])


def write(path, tensors: dict[str, np.ndarray], backbone: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(tensors, backbone))
