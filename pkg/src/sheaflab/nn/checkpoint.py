"""Checkpoint files: a JSON header followed by a raw float64 parameter blob.

Layout::

    b"SHEAFCKPT1\n" | uint64 LE header length | JSON header | <f8 blob

The header carries ``config``, ``seed``, ``epoch`` and a ``manifest`` of
``{"name", "shape"}`` entries giving the blob's order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SHEAFCKPT1\n"


def save_checkpoint(path, params: dict[str, np.ndarray], config: dict, seed: int, epoch: int,
                    extra: dict | None = None) -> None:
    manifest = [{"name": k, "shape": list(np.shape(v))} for k, v in params.items()]
    header = {"config": config, "seed": seed, "epoch": epoch, "manifest": manifest}
    if extra:
        header.update(extra)
    raw = json.dumps(header, sort_keys=True).encode()
    blob = b"".join(np.asarray(v, dtype="<f8").tobytes() for v in params.values())
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        fh.write(blob)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    header = json.loads(data[off:off + hlen])
    off += hlen
    blob = np.frombuffer(data[off:], dtype="<f8")
    params, pos = {}, 0
    for entry in header["manifest"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        params[entry["name"]] = blob[pos:pos + size].reshape(entry["shape"]).astype(np.float64)
        pos += size
    if pos != len(blob):
        raise ValueError(f"{path}: blob length does not match manifest")
    return header, params
