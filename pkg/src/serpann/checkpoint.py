"""Binary tensor container used for model checkpoints and feature caches.

Layout (all integers little-endian u32, floats little-endian f32)::

    b"SERW" | version=1 | tensor_count
    per tensor: name_len | name (UTF-8) | rank | dims[rank] | data (row-major)
    CRC-32 (IEEE) of every preceding byte

Tensors are written in the order of the mapping passed to ``save_tensors``.
"""

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError, IntegrityError, VersionError

MAGIC = b"SERW"
VERSION = 1


def encode_tensors(tensors):
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_tensors(blob):
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise FormatError("not a SERW tensor container")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise IntegrityError("CRC-32 mismatch: container is corrupt")
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise VersionError(f"unsupported container version {version}")
    pos = 12
    out = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", body, pos)
            pos += 4
            name = body[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", body, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", body, pos)
            pos += 4 * rank
            n = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * n > len(body):
                raise FormatError(f"tensor {name!r} runs past the end of the container")
            out[name] = np.frombuffer(body, dtype="<f4", count=n, offset=pos).reshape(dims).copy()
            pos += 4 * n
    except struct.error as exc:
        raise FormatError(f"truncated container: {exc}") from None
    if pos != len(body):
        raise FormatError(f"{len(body) - pos} trailing bytes after last tensor")
    return out


def save_tensors(tensors, path):
    Path(path).write_bytes(encode_tensors(tensors))


def load_tensors(path):
    return decode_tensors(Path(path).read_bytes())


def save_checkpoint(model, path):
    """Write every parameter and batch-norm buffer of ``model``."""
    save_tensors(model.state_dict(), path)


def load_checkpoint(path):
    """Named tensor map of a checkpoint file (see ``Model.load_state_dict``)."""
    return load_tensors(path)
