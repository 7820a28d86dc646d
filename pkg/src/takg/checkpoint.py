"""Single-file checkpoints: a JSON header followed by raw little-endian float64 arrays.

Layout::

    TAKG-CHECKPOINT <version>\\n
    <header byte length>\\n
    <header JSON, sorted keys>\\n
    <param 0 data><param 0 adam m><param 0 adam v><param 1 data>...

The same state always serialises to the same bytes.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .autodiff import Parameter

MAGIC = b"TAKG-CHECKPOINT"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def dumps(params, metadata: dict | None = None) -> bytes:
    entries = []
    blobs = []
    offset = 0
    for p in params:
        arrays = [np.ascontiguousarray(a, dtype="<f8") for a in (p.data, p.m, p.v)]
        nbytes = arrays[0].nbytes
        entries.append({"name": p.name, "shape": list(p.shape), "step": int(p.step),
                        "offset": offset, "nbytes": nbytes})
        blobs.extend(a.tobytes() for a in arrays)
        offset += 3 * nbytes
    header = json.dumps({"format_version": FORMAT_VERSION, "metadata": metadata or {},
                         "parameters": entries}, sort_keys=True, separators=(",", ":")).encode()
    return b"".join([MAGIC, b" %d\n" % FORMAT_VERSION, b"%d\n" % len(header), header, b"\n", *blobs])


def loads(buf: bytes) -> tuple[dict[str, Parameter], dict]:
    try:
        first, rest = buf.split(b"\n", 1)
        magic, version = first.split(b" ")
        if magic != MAGIC:
            raise CheckpointError("not a checkpoint file")
        if int(version) != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {int(version)}")
        length, rest = rest.split(b"\n", 1)
        length = int(length)
        header = json.loads(rest[:length])
        body = memoryview(rest)[length + 1:]
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None

    params = {}
    for e in header["parameters"]:
        shape = tuple(e["shape"])
        n = e["nbytes"]
        lo = e["offset"]
        if lo + 3 * n > len(body):
            raise CheckpointError(f"truncated checkpoint at parameter {e['name']!r}")
        arrs = [np.frombuffer(body[lo + k * n: lo + (k + 1) * n], dtype="<f8").reshape(shape).astype(np.float64)
                for k in range(3)]
        p = Parameter(e["name"], arrs[0])
        p.m, p.v = arrs[1], arrs[2]
        p.step = int(e["step"])
        params[p.name] = p
    return params, header["metadata"]


def save(path: str | os.PathLike, params, metadata: dict | None = None) -> None:
    data = dumps(params, metadata)
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load(path: str | os.PathLike) -> tuple[dict[str, Parameter], dict]:
    with open(path, "rb") as fh:
        return loads(fh.read())
