"""Binary checkpoint format.

Layout::

    b"DTA1"
    uint32 little-endian header length N
    N bytes of UTF-8 JSON: {"version": 1, "config": {...},
                            "parameters": [{"name", "shape", "offset"}, ...]}
    parameter arrays as little-endian float64, in manifest order

``offset`` is the byte offset of each array from the start of the data block.
"""

import json
import struct

import numpy as np

from .._io import atomic_open

MAGIC = b"DTA1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, config, named_arrays):
    manifest, offset = [], 0
    for name, arr in named_arrays:
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = json.dumps(
        {"version": VERSION, "config": config, "parameters": manifest}, sort_keys=True
    ).encode("utf-8")
    with atomic_open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, arr in named_arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Return ``(config, {name: array})`` from a checkpoint file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a DTA1 checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", blob[4:8])
    if 8 + hlen > len(blob):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from None
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    data = blob[8 + hlen:]
    arrays = {}
    expected = 0
    for entry in header["parameters"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = entry["offset"]
        if start != expected:
            raise CheckpointError(f"{path}: manifest offset mismatch for {entry['name']}")
        end = start + 8 * count
        if end > len(data):
            raise CheckpointError(f"{path}: truncated data for {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(data[start:end], dtype="<f8").reshape(shape).astype(np.float64)
        expected = end
    if expected != len(data):
        raise CheckpointError(f"{path}: {len(data) - expected} trailing bytes after parameters")
    return header["config"], arrays
