"""Key and keystream files.

A key file is a 16-byte header followed by the bits packed most significant
bit first (the last byte zero-padded)::

    offset  size  field
    0       4     magic b"NKEY"
    4       1     version (1)
    5       3     reserved, zero
    8       8     bit count, unsigned big-endian

The hex variant is the same byte string written as one line of lowercase
hex; readers accept either form.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import NoiseKeyError

MAGIC = b"NKEY"
VERSION = 1
_HEADER = struct.Struct(">4sB3sQ")


class KeyFileError(NoiseKeyError):
    pass


def pack_key(bits) -> bytes:
    arr = np.asarray(bits, dtype=np.uint8).ravel()
    return _HEADER.pack(MAGIC, VERSION, b"\0\0\0", arr.size) + np.packbits(arr).tobytes()


def unpack_key(data: bytes) -> np.ndarray:
    if data[:4] != MAGIC:
        text = data.strip()
        try:
            data = bytes.fromhex(text.decode("ascii"))
        except (UnicodeDecodeError, ValueError):
            raise KeyFileError("not a key file (bad magic)") from None
        if data[:4] != MAGIC:
            raise KeyFileError("not a key file (bad magic)")
    if len(data) < _HEADER.size:
        raise KeyFileError("truncated key header")
    _, version, _, n_bits = _HEADER.unpack(data[:_HEADER.size])
    if version != VERSION:
        raise KeyFileError(f"unsupported key file version {version}")
    body = np.frombuffer(data[_HEADER.size:], dtype=np.uint8)
    if body.size != (n_bits + 7) // 8:
        raise KeyFileError(f"header declares {n_bits} bits, body holds {body.size} bytes")
    return np.unpackbits(body)[:n_bits].copy()


def write_key(path, bits, hex_text: bool = False):
    data = pack_key(bits)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    if hex_text:
        tmp.write_text(data.hex() + "\n", encoding="ascii")
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def read_key(path) -> np.ndarray:
    return unpack_key(Path(path).read_bytes())
