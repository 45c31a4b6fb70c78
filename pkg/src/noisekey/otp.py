"""One-time pad over a distilled keystream, with spent-bit tracking.

The persistent form keeps a sidecar next to the key file recording how many
keystream bits are spent.  Every encryption advances the cursor by eight
bits per byte before the ciphertext is released, so a crash can waste pad
but never reuse it.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .errors import KeyExhausted, NoiseKeyError
from .keyfile import read_key


class SidecarCorrupt(NoiseKeyError):
    pass


def one_time_pad(message: bytes, keystream) -> bytes:
    """XOR ``message`` with the leading ``8 * len(message)`` keystream bits.

    >>> one_time_pad(b"\\x00", [1, 0, 1, 0, 1, 0, 1, 0])
    b'\\xaa'
    """
    bits = np.asarray(keystream, dtype=np.uint8).ravel()
    need = 8 * len(message)
    if bits.size < need:
        raise KeyExhausted(f"message needs {need} pad bits, {bits.size} available")
    pad = np.packbits(bits[:need])
    return (np.frombuffer(message, dtype=np.uint8) ^ pad).tobytes()


class OneTimePad:
    """In-memory pad that hands out each keystream bit at most once."""

    def __init__(self, keystream, cursor: int = 0):
        self.bits = np.asarray(keystream, dtype=np.uint8).ravel()
        if not 0 <= cursor <= self.bits.size:
            raise ValueError("cursor outside the keystream")
        self.cursor = cursor

    @property
    def remaining(self) -> int:
        return self.bits.size - self.cursor

    def take(self, n_bits: int) -> np.ndarray:
        if n_bits > self.remaining:
            raise KeyExhausted(f"need {n_bits} pad bits, {self.remaining} unspent")
        out = self.bits[self.cursor:self.cursor + n_bits]
        self.cursor += n_bits
        return out

    def apply(self, message: bytes) -> bytes:
        return one_time_pad(message, self.take(8 * len(message)))


def _key_digest(bits: np.ndarray) -> str:
    return hashlib.blake2b(np.packbits(bits).tobytes() + bits.size.to_bytes(8, "big"),
                           digest_size=8).hexdigest()


def _tag(fields: dict) -> str:
    blob = json.dumps(fields, sort_keys=True).encode()
    return hashlib.blake2b(blob, digest_size=8, person=b"nk-otp-sidecar").hexdigest()


def sidecar_path(key_path) -> Path:
    key_path = Path(key_path)
    return key_path.with_name(key_path.name + ".spent")


class PadFile:
    """A key file plus its persisted spent-bit cursor."""

    def __init__(self, key_path):
        self.key_path = Path(key_path)
        self.sidecar = sidecar_path(key_path)
        bits = read_key(self.key_path)
        self.pad = OneTimePad(bits, self._load_cursor(bits))

    def _load_cursor(self, bits) -> int:
        if not self.sidecar.exists():
            return 0
        try:
            doc = json.loads(self.sidecar.read_text(encoding="utf-8"))
            fields = {k: doc[k] for k in ("version", "cursor", "bits", "key")}
            tag = doc["tag"]
        except (ValueError, KeyError, TypeError) as exc:
            raise SidecarCorrupt(f"unreadable sidecar {self.sidecar}: {exc}") from None
        if tag != _tag(fields):
            raise SidecarCorrupt(f"sidecar {self.sidecar} failed its integrity check")
        if fields["key"] != _key_digest(bits) or fields["bits"] != int(bits.size):
            raise SidecarCorrupt(f"sidecar {self.sidecar} belongs to a different key")
        cursor = fields["cursor"]
        if not isinstance(cursor, int) or not 0 <= cursor <= bits.size:
            raise SidecarCorrupt(f"sidecar cursor {cursor!r} out of range")
        return cursor

    def _save(self):
        fields = {"version": 1, "cursor": int(self.pad.cursor),
                  "bits": int(self.pad.bits.size), "key": _key_digest(self.pad.bits)}
        doc = dict(fields, tag=_tag(fields))
        tmp = self.sidecar.with_name(self.sidecar.name + ".tmp")
        tmp.write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, self.sidecar)

    @property
    def cursor(self) -> int:
        return self.pad.cursor

    def apply(self, message: bytes) -> bytes:
        if not message:
            return b""
        bits = self.pad.take(8 * len(message))
        self._save()
        return one_time_pad(message, bits)
