"""Bit-exact frames for running a session over any reliable byte stream.

Frame layout, all integers big-endian::

    offset  size  field
    0       4     magic b"NKWP"
    4       1     version (1)
    5       1     frame type (HELLO=1 PHASES=2 DIGESTS=3 AMPLIFY=4 RESTART=5)
    6       8     session id
    14      4     cycle index
    18      4     payload length (<= 2**20)
    22      n     payload
    22+n    8     tag: BLAKE2b-64 of bytes [0, 22+n)

Phases travel as 16-bit quantised values, ``phase = 2*pi*q/65536``.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import BinaryIO, Iterator

import numpy as np

from .constellation import TWO_PI, WheelConfig
from .errors import (
    BadLength,
    BadMagic,
    BadTag,
    BadType,
    BadVersion,
    ConfigMismatch,
    ContractViolation,
    FingerprintMismatch,
)
from .noise import NoiseModel

MAGIC = b"NKWP"
VERSION = 1
HEADER = struct.Struct(">4sBB8sII")
TAG_SIZE = 8
MAX_PAYLOAD = 1 << 20
MAX_PHASES = (MAX_PAYLOAD - 4) // 2
QUANTA = 1 << 16
QUANTUM = TWO_PI / QUANTA
MIN_MARGIN_QUANTA = 1 << 6


class FrameType(IntEnum):
    HELLO = 1
    PHASES = 2
    DIGESTS = 3
    AMPLIFY = 4
    RESTART = 5


@dataclass(frozen=True)
class Frame:
    type: FrameType
    session_id: bytes
    cycle_index: int
    payload: bytes = b""

    def __post_init__(self):
        if len(self.session_id) != 8:
            raise ContractViolation("session id is 8 bytes")
        if not 0 <= self.cycle_index < 1 << 32:
            raise ContractViolation("cycle index must fit in 32 bits")


def _tag(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=TAG_SIZE).digest()


def encode_frame(frame: Frame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise BadLength(f"payload of {len(frame.payload)} bytes exceeds {MAX_PAYLOAD}")
    head = HEADER.pack(MAGIC, VERSION, int(frame.type), frame.session_id,
                       frame.cycle_index, len(frame.payload))
    body = head + frame.payload
    return body + _tag(body)


def _parse_header(head: bytes):
    magic, version, ftype, sid, cycle, length = HEADER.unpack(head)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    if length > MAX_PAYLOAD:
        raise BadLength(f"declared payload length {length} exceeds {MAX_PAYLOAD}")
    return ftype, sid, cycle, length


def _finish(head: bytes, payload: bytes, tag: bytes, ftype, sid, cycle) -> Frame:
    if _tag(head + payload) != tag:
        raise BadTag("integrity tag mismatch")
    try:
        ft = FrameType(ftype)
    except ValueError:
        raise BadType(f"unknown frame type {ftype}") from None
    return Frame(ft, sid, cycle, payload)


def decode_frame(data: bytes) -> Frame:
    """Parse exactly one frame; trailing or missing bytes are BadLength."""
    if len(data) < HEADER.size + TAG_SIZE:
        raise BadLength("buffer shorter than an empty frame")
    head = bytes(data[:HEADER.size])
    ftype, sid, cycle, length = _parse_header(head)
    if len(data) != HEADER.size + length + TAG_SIZE:
        raise BadLength(f"declared payload {length} bytes, buffer holds "
                        f"{len(data) - HEADER.size - TAG_SIZE}")
    payload = bytes(data[HEADER.size:HEADER.size + length])
    return _finish(head, payload, bytes(data[-TAG_SIZE:]), ftype, sid, cycle)


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise EOFError(f"stream ended after {len(buf)} of {n} bytes")
        buf.extend(chunk)
    return bytes(buf)


def read_frame(stream: BinaryIO) -> tuple[Frame, bytes]:
    """Read one frame; returns it with its raw bytes (for taps)."""
    head = _read_exact(stream, HEADER.size)
    ftype, sid, cycle, length = _parse_header(head)
    payload = _read_exact(stream, length)
    tag = _read_exact(stream, TAG_SIZE)
    return _finish(head, payload, tag, ftype, sid, cycle), head + payload + tag


def iter_frames(data: bytes) -> Iterator[Frame]:
    """Split a recorded transcript back into frames."""
    stream = io.BytesIO(data)
    while stream.tell() < len(data):
        frame, _ = read_frame(stream)
        yield frame


# -- phases -------------------------------------------------------------------

def quantize(phase) -> np.ndarray:
    q = np.rint(np.asarray(phase, dtype=float) / QUANTUM).astype(np.int64)
    return np.mod(q, QUANTA).astype(np.uint16)


def dequantize(q) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) * QUANTUM


def snap(phase: float) -> float:
    """Round a scalar phase to the wire grid."""
    return float(dequantize(quantize(phase)))


def phases_payload(samples) -> bytes:
    q = quantize(samples).ravel()
    if q.size > MAX_PHASES:
        raise BadLength(f"{q.size} samples exceed {MAX_PHASES} per frame")
    return struct.pack(">I", q.size) + q.astype(">u2").tobytes()


def parse_phases(payload: bytes) -> np.ndarray:
    if len(payload) < 4:
        raise BadLength("PHASES payload lacks a count")
    (count,) = struct.unpack(">I", payload[:4])
    if len(payload) != 4 + 2 * count:
        raise BadLength(f"count {count} disagrees with {len(payload) - 4} sample bytes")
    return dequantize(np.frombuffer(payload[4:], dtype=">u2"))


# -- digests / amplify / restart ---------------------------------------------

def digests_payload(digests) -> bytes:
    return struct.pack(">I", len(digests)) + b"".join(digests)


def parse_digests(payload: bytes) -> list[bytes]:
    if len(payload) < 4:
        raise BadLength("DIGESTS payload lacks a count")
    (count,) = struct.unpack(">I", payload[:4])
    if len(payload) != 4 + 8 * count:
        raise BadLength("digest count disagrees with payload size")
    return [payload[4 + 8 * i:12 + 8 * i] for i in range(count)]


def amplify_payload(seed: int) -> bytes:
    return struct.pack(">Q", seed)


def parse_amplify(payload: bytes) -> int:
    if len(payload) != 8:
        raise BadLength("AMPLIFY payload is one 64-bit seed")
    return struct.unpack(">Q", payload)[0]


def restart_payload(reason: str) -> bytes:
    return reason.encode("utf-8")[:4096]


# -- handshake ----------------------------------------------------------------

def k0_fingerprint(k0_bits, salt: bytes) -> bytes:
    """Salted 64-bit digest of K0; reveals nothing reusable across sessions."""
    bits = np.asarray(k0_bits, dtype=np.uint8)
    h = hashlib.blake2b(digest_size=8, key=salt, person=b"nk-k0-fprint")
    h.update(struct.pack(">Q", bits.size))
    h.update(np.packbits(bits).tobytes())
    return h.digest()


@dataclass(frozen=True)
class Hello:
    salt: bytes
    fingerprint: bytes
    mode: str
    k_M: int
    delta_phi1_q: int
    sigma_q: int
    L: int
    L_min: int
    block_size: int
    cycles: int
    f_retain: float

    _FMT = struct.Struct(">8s8sBBHHIIIId")

    def to_payload(self) -> bytes:
        return self._FMT.pack(self.salt, self.fingerprint,
                              0 if self.mode == "uniform" else 1, self.k_M,
                              self.delta_phi1_q, self.sigma_q, self.L, self.L_min,
                              self.block_size, self.cycles, self.f_retain)

    @classmethod
    def from_payload(cls, payload: bytes) -> "Hello":
        if len(payload) != cls._FMT.size:
            raise BadLength(f"HELLO payload is {cls._FMT.size} bytes, got {len(payload)}")
        salt, fp, mode, k_M, dq, sq, L, L_min, block, cycles, f = cls._FMT.unpack(payload)
        if mode not in (0, 1):
            raise ConfigMismatch(f"unknown wheel mode code {mode}")
        return cls(salt, fp, "uniform" if mode == 0 else "sector", k_M, dq, sq,
                   L, L_min, block, cycles, f)

    def wheel(self) -> WheelConfig:
        if self.mode == "uniform":
            return WheelConfig.uniform(1 << self.k_M)
        return WheelConfig.sector(float(dequantize(self.delta_phi1_q)))

    def noise(self) -> NoiseModel:
        return NoiseModel(float(dequantize(self.sigma_q)))

    def params(self) -> tuple:
        return (self.mode, self.k_M, self.delta_phi1_q, self.sigma_q, self.L,
                self.L_min, self.block_size, self.cycles, self.f_retain)


def hello(k0_bits, salt: bytes, wheel: WheelConfig, noise: NoiseModel, *, L: int,
          L_min: int, block_size: int, cycles: int, f_retain: float) -> Hello:
    return Hello(salt, k0_fingerprint(k0_bits, salt), wheel.mode, wheel.k_M,
                 int(quantize(wheel.delta_phi1)), int(quantize(noise.sigma_phi)),
                 L, L_min, block_size, cycles, f_retain)


def check_hello(local: Hello, remote: Hello):
    """Raise unless the peer holds the same K0 and the same parameters."""
    if local.salt != remote.salt or local.fingerprint != remote.fingerprint:
        raise FingerprintMismatch("peer K0 fingerprint differs")
    if local.params() != remote.params():
        raise ConfigMismatch(f"local {local.params()} vs remote {remote.params()}")


def check_quantization_margin(wheel: WheelConfig, noise: NoiseModel):
    """Refuse geometry finer than 64 quanta, where rounding could flip decisions."""
    floor = MIN_MARGIN_QUANTA * QUANTUM
    if wheel.mode == "sector" and wheel.delta_phi1 < floor:
        raise ContractViolation(
            f"sector spacing {wheel.delta_phi1:.3g} rad is below {MIN_MARGIN_QUANTA} "
            f"wire quanta ({floor:.6f} rad)")
    if 0 < noise.sigma_phi < floor:
        raise ContractViolation(
            f"sigma_phi {noise.sigma_phi:.3g} rad is below {MIN_MARGIN_QUANTA} wire quanta")


def snap_config(wheel: WheelConfig, noise: NoiseModel) -> tuple[WheelConfig, NoiseModel]:
    """The configuration both peers actually run: declared values on the wire grid."""
    if wheel.mode == "sector":
        wheel = WheelConfig.sector(snap(wheel.delta_phi1))
    return wheel, NoiseModel(snap(noise.sigma_phi))

