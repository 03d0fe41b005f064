"""Self-describing binary container for checkpoints, importance vectors and snapshots.

Layout: 4-byte magic, u32 format version, u64 length-prefixed JSON metadata
block, then the raw little-endian payload of every array listed in
``meta["arrays"]``, in order. Serialization is fully deterministic, so a
byte digest of the container identifies its contents.
"""

import hashlib
import io
import json
import struct

import numpy as np

MAGIC = b"BDL1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sI")
_METALEN = struct.Struct("<Q")


class ContainerError(ValueError):
    """Raised for malformed, truncated or incompatible container data."""


def _dtype_tag(dtype):
    # Force an explicit little-endian tag so files round-trip across platforms.
    return np.dtype(dtype).newbyteorder("<").str


def serialize(meta: dict, arrays: dict) -> bytes:
    """Serialize ``arrays`` (name -> ndarray) plus a JSON-safe ``meta`` dict."""
    entries = []
    payload = io.BytesIO()
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(_dtype_tag(arr.dtype), copy=False)
        entries.append({"name": name, "dtype": _dtype_tag(arr.dtype),
                        "shape": list(arr.shape)})
        payload.write(le.tobytes())
    full_meta = dict(meta)
    full_meta["arrays"] = entries
    meta_bytes = json.dumps(full_meta, sort_keys=True,
                            separators=(",", ":")).encode("utf-8")
    out = io.BytesIO()
    out.write(_HEADER.pack(MAGIC, FORMAT_VERSION))
    out.write(_METALEN.pack(len(meta_bytes)))
    out.write(meta_bytes)
    out.write(payload.getvalue())
    return out.getvalue()


def deserialize(blob: bytes):
    """Inverse of :func:`serialize`. Returns ``(meta, arrays)``."""
    if len(blob) < _HEADER.size + _METALEN.size:
        raise ContainerError("truncated container: missing header")
    magic, version = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ContainerError(f"bad magic bytes {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported container version {version}")
    (meta_len,) = _METALEN.unpack_from(blob, _HEADER.size)
    meta_start = _HEADER.size + _METALEN.size
    meta_end = meta_start + meta_len
    if len(blob) < meta_end:
        raise ContainerError("truncated container: metadata block cut short")
    try:
        meta = json.loads(blob[meta_start:meta_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupt metadata block: {exc}") from exc

    arrays = {}
    offset = meta_end
    for entry in meta.pop("arrays", []):
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if len(blob) < offset + nbytes:
            raise ContainerError(f"truncated container: payload for "
                                 f"{entry['name']!r} cut short")
        arr = np.frombuffer(blob[offset:offset + nbytes], dtype=dtype)
        arrays[entry["name"]] = arr.reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise ContainerError("trailing bytes after declared payload")
    return meta, arrays


def save(path, meta: dict, arrays: dict) -> None:
    blob = serialize(meta, arrays)
    with open(path, "wb") as fh:
        fh.write(blob)


def load(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def digest(meta: dict, arrays: dict) -> str:
    """SHA-256 hex digest of the canonical serialization."""
    return hashlib.sha256(serialize(meta, arrays)).hexdigest()


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
