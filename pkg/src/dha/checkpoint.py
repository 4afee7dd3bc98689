"""Binary checkpoint format.

Layout (little endian)::

    b"DHACKPT"                      magic, 7 bytes
    u32                             format version
    32 bytes                        SHA-256 digest of the resolved config
    u32                             tensor count
    per tensor:
        u32 name length, UTF-8 name
        u32 rank, rank x u64 dims
        prod(dims) x 8-byte values, row major
    u64                             CRC-64/WE of every preceding byte

Values are IEEE-754 doubles, except tensors under ``rng/`` whose 8-byte
words are raw unsigned integers (generator state).
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import crcmod.predefined
import numpy as np

from .errors import ChecksumMismatch, CheckpointError, VersionMismatch

MAGIC = b"DHACKPT"
FORMAT_VERSION = 1
_crc64 = crcmod.predefined.mkPredefinedCrcFun("crc-64-we")


def config_digest(config: dict) -> bytes:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).digest()


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    digest: bytes = b"\0" * 32
    version: int = FORMAT_VERSION


def encode(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<I", ckpt.version), ckpt.digest,
             struct.pack("<I", len(ckpt.tensors))]
    for name in sorted(ckpt.tensors):
        arr = np.asarray(ckpt.tensors[name])
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        dtype = "<u8" if name.startswith("rng/") else "<f8"
        parts.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<Q", _crc64(body))


def decode(blob: bytes) -> Checkpoint:
    head = len(MAGIC) + 4 + 32 + 4
    if len(blob) < len(MAGIC) + 4 or blob[:len(MAGIC)] != MAGIC:
        if MAGIC.startswith(blob[:len(MAGIC)]):
            raise ChecksumMismatch("checkpoint truncated before header end")
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format version {version}, this build reads version {FORMAT_VERSION}")
    if len(blob) < head + 8:
        raise ChecksumMismatch("checkpoint truncated")
    body, (crc,) = blob[:-8], struct.unpack("<Q", blob[-8:])
    if _crc64(body) != crc:
        raise ChecksumMismatch("checkpoint CRC-64 does not match (truncated or corrupted)")
    digest = body[len(MAGIC) + 4:len(MAGIC) + 36]
    (count,) = struct.unpack_from("<I", body, len(MAGIC) + 36)
    pos, tensors = head, {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        name = body[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", body, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", body, pos)
        pos += 8 * rank
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        dtype = "<u8" if name.startswith("rng/") else "<f8"
        arr = np.frombuffer(body, dtype=dtype, count=size, offset=pos).reshape(dims)
        tensors[name] = arr.astype(np.uint64 if dtype == "<u8" else np.float64)
        pos += 8 * size
    if pos != len(body):
        raise CheckpointError("trailing bytes after tensor table")
    return Checkpoint(tensors, digest, version)


def save(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_bytes(encode(ckpt))
        tmp.replace(path)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from None


def load(path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return decode(blob)


def text_tensor(text: str) -> np.ndarray:
    """Store a string as its UTF-8 byte values (exact in float64)."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float64)


def tensor_text(arr: np.ndarray) -> str:
    return bytes(np.asarray(arr, dtype=np.uint8)).decode("utf-8")
