"""Binary checkpoint container: magic "ASFT", version, JSON header, f64 payload.

Layout: 4 magic bytes, uint32 LE format version, uint64 LE header length,
UTF-8 JSON header, packed little-endian float64 payload.  The header lists
named arrays (name, shape, offset into the payload section) plus arbitrary
JSON metadata.  Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ASFT"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named float64 arrays plus JSON metadata; offsets are payload-relative."""
    entries = []
    payload = bytearray()
    seen = set()
    for name, arr in arrays.items():
        if name in seen:
            raise CheckpointError(f"duplicate array name {name!r}")
        seen.add(name)
        arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
        entries.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload.extend(arr.astype("<f8", copy=False).tobytes())
    header = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    header_end = 16 + header_len
    if header_end > len(blob):
        raise CheckpointError(f"{path}: truncated header")
    header = json.loads(blob[16:header_end].decode("utf-8"))
    payload = blob[header_end:]
    arrays = {}
    spans = []
    for entry in header["arrays"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(payload) or offset < 0:
            raise CheckpointError(f"{path}: array {name!r} out of bounds")
        spans.append((offset, end, name))
        arrays[name] = np.frombuffer(payload[offset:end], dtype="<f8").reshape(shape).copy()
    spans.sort()
    for (a0, a1, an), (b0, b1, bn) in zip(spans, spans[1:]):
        if b0 < a1:
            raise CheckpointError(f"{path}: arrays {an!r} and {bn!r} overlap")
    if len(arrays) != len(header["arrays"]):
        raise CheckpointError(f"{path}: duplicate array names")
    return arrays, header.get("meta", {})
