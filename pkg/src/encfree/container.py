"""Versioned binary container used for datasets and checkpoints.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic  b"ENCFREE\\0"
    8       4     kind   b"DSET" | b"CKPT"
    12      4     u32    format version
    16      8     u64    header length H
    24      4     u32    CRC-32 of the header bytes
    28      H     UTF-8 JSON header
    28+H    ...   payload: arrays back to back

The JSON header holds free-form metadata under ``"meta"`` and an ``"arrays"``
list of ``{"name", "dtype", "shape", "offset", "nbytes"}`` entries (offsets
relative to the payload start) plus ``"payload_crc32"``. Arrays are stored as
``<f8`` (float64) or ``<i8`` (int64), C order.
"""
import json
import os
import struct
import zlib

import numpy as np

from .errors import FormatError, LengthError, VersionError

MAGIC = b"ENCFREE\0"
VERSION = 1
_PREFIX = struct.Struct("<8s4sIQI")


def _as_storable(a):
    a = np.asarray(a)
    if a.dtype.kind in "biu":
        return np.asarray(a, dtype="<i8", order="C")
    return np.asarray(a, dtype="<f8", order="C")


def write_container(path, kind, meta, arrays):
    entries = []
    chunks = []
    offset = 0
    for name, a in arrays.items():
        a = _as_storable(a)
        raw = a.tobytes()
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = json.dumps({"meta": meta, "arrays": entries, "payload_crc32": zlib.crc32(payload)},
                        sort_keys=True).encode("utf-8")
    prefix = _PREFIX.pack(MAGIC, kind, VERSION, len(header), zlib.crc32(header))
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(prefix)
        f.write(header)
        f.write(payload)
    os.replace(tmp, path)


def read_container(path, kind):
    """Return ``(meta, arrays)``; raises before building anything if the file is damaged."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _PREFIX.size:
        raise LengthError(f"{path}: file too short for a container header")
    magic, got_kind, version, hlen, hcrc = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if got_kind != kind:
        raise FormatError(f"{path}: expected a {kind.decode()} container, found {got_kind!r}")
    if version != VERSION:
        raise VersionError(f"{path}: container version {version}, this reader handles {VERSION}")
    start = _PREFIX.size
    if len(blob) < start + hlen:
        raise LengthError(f"{path}: header truncated")
    header = blob[start:start + hlen]
    if zlib.crc32(header) != hcrc:
        raise FormatError(f"{path}: header checksum mismatch")
    try:
        head = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header ({exc})") from None
    payload = blob[start + hlen:]
    if zlib.crc32(payload) != head["payload_crc32"]:
        raise FormatError(f"{path}: payload checksum mismatch")
    arrays = {}
    for e in head["arrays"]:
        end = e["offset"] + e["nbytes"]
        if end > len(payload):
            raise LengthError(f"{path}: array {e['name']} runs past the end of the payload")
        a = np.frombuffer(payload, dtype=np.dtype(e["dtype"]), count=e["nbytes"] // 8, offset=e["offset"])
        arrays[e["name"]] = a.reshape(e["shape"]).astype(a.dtype.newbyteorder("="))
    return head["meta"], arrays
