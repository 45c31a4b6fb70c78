"""Ciphering-wheel geometry: key blocks to bases, bases and bits to phases.

Two geometries are supported.  The *uniform* wheel spreads ``M`` bases over
the full circle with bit values interleaved, so that the ``2M`` points are
spaced ``pi/M`` apart and neighbours always carry opposite bits.  The
*sector* geometry uses only two bases, ``delta_phi1`` apart, with the bit
meaning flipped on the second basis; with ``delta_phi1`` well inside the
noise width the two bases cannot be told apart.

All phases are plain floats in radians.  Unsigned phases live in
``[0, 2*pi)`` and signed differences in ``(-pi, pi]``.  Every function
accepts scalars or numpy arrays and returns the same kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import ContractViolation

__all__ = [
    "TWO_PI",
    "PHASE_TOL",
    "WheelConfig",
    "wrap",
    "wrap_signed",
    "basis_index",
    "basis_phase",
    "encode",
    "decode",
    "bases_from_key",
    "constellation_points",
]

TWO_PI = 2.0 * math.pi
PHASE_TOL = 1e-9

Mode = Literal["uniform", "sector"]


@dataclass(frozen=True)
class WheelConfig:
    """Constellation geometry.

    Parameters
    ----------
    mode : {"uniform", "sector"}
    M : int
        Number of bases, a power of two.  Forced to 2 in sector mode.
    delta_phi1 : float
        Inter-basis spacing in radians, sector mode only.  Zero is accepted
        as the degenerate limit in which the two bases coincide.
    """

    mode: Mode = "sector"
    M: int = 2
    delta_phi1: float = 0.0

    def __post_init__(self):
        if self.mode not in ("uniform", "sector"):
            raise ContractViolation(f"unknown wheel mode {self.mode!r}")
        if self.M < 2 or self.M & (self.M - 1):
            raise ContractViolation(f"M must be a power of two >= 2, got {self.M}")
        if self.mode == "sector":
            if self.M != 2:
                raise ContractViolation("sector mode requires M = 2")
            if not 0.0 <= self.delta_phi1 < math.pi / 2:
                raise ContractViolation(
                    f"sector spacing must lie in [0, pi/2), got {self.delta_phi1}")
        elif self.delta_phi1 != 0.0:
            raise ContractViolation("delta_phi1 only applies to sector mode")

    @classmethod
    def uniform(cls, M: int) -> "WheelConfig":
        return cls("uniform", int(M), 0.0)

    @classmethod
    def sector(cls, delta_phi1: float) -> "WheelConfig":
        return cls("sector", 2, float(delta_phi1))

    @property
    def k_M(self) -> int:
        """Key bits consumed per basis."""
        return self.M.bit_length() - 1

    def describe(self) -> str:
        if self.mode == "uniform":
            return f"uniform:{self.M}"
        return f"sector:{self.delta_phi1:.9g}"


def _ret(x, scalar):
    return x.item() if scalar else x


def wrap(phase):
    """Reduce to the canonical range ``[0, 2*pi)``."""
    scalar = np.ndim(phase) == 0
    out = np.mod(np.asarray(phase, dtype=float), TWO_PI)
    # np.mod returns exactly 2*pi for tiny negative inputs
    out = np.where(out >= TWO_PI, 0.0, out)
    return _ret(out, scalar)


def wrap_signed(phase):
    """Reduce to ``(-pi, pi]``."""
    scalar = np.ndim(phase) == 0
    out = math.pi - np.asarray(wrap(math.pi - np.asarray(phase, dtype=float)))
    return _ret(out, scalar)


def basis_index(block: Sequence[int], k_M: int | None = None) -> int:
    """Map one key block to a basis index, first bit most significant.

    >>> basis_index([1, 0, 1], k_M=3)
    5
    """
    bits = [int(b) for b in block]
    if not bits:
        raise ContractViolation("a key block holds at least one bit")
    if k_M is not None and len(bits) != k_M:
        raise ContractViolation(f"block length {len(bits)} != k_M = {k_M}")
    k = 0
    for b in bits:
        if b not in (0, 1):
            raise ContractViolation(f"key block contains non-bit {b!r}")
        k = (k << 1) | b
    return k


def basis_phase(k, cfg: WheelConfig):
    """Phase of the bit-0 point of basis ``k``."""
    scalar = np.ndim(k) == 0
    k = np.asarray(k)
    if np.any(k < 0) or np.any(k >= cfg.M):
        raise ContractViolation(f"basis index out of range [0, {cfg.M})")
    odd = (k % 2).astype(float)
    kf = k.astype(float)
    if cfg.mode == "uniform":
        phi = math.pi * (kf / cfg.M + odd)
    else:
        phi = kf * cfg.delta_phi1 + math.pi * odd
    return _ret(np.asarray(wrap(phi)), scalar)


def encode(bit, k, noise, cfg: WheelConfig):
    """Transmitted phase ``basis + pi*bit + noise``, wrapped."""
    base = np.asarray(basis_phase(k, cfg))
    scalar = np.ndim(bit) == 0 and np.ndim(k) == 0 and np.ndim(noise) == 0
    out = wrap(base + math.pi * np.asarray(bit, dtype=float) + np.asarray(noise, dtype=float))
    return _ret(np.asarray(out), scalar)


def decode(y, k, cfg: WheelConfig):
    """Binary decision on a known basis.  Ties at exactly pi/2 decode as 0."""
    scalar = np.ndim(y) == 0 and np.ndim(k) == 0
    d = np.asarray(wrap_signed(np.asarray(y, dtype=float) - np.asarray(basis_phase(k, cfg))))
    bits = (np.abs(d) > math.pi / 2 + PHASE_TOL).astype(np.uint8)
    return _ret(bits, scalar)


def bases_from_key(bits, cfg: WheelConfig) -> np.ndarray:
    """Split ``bits`` into consecutive ``k_M`` blocks and index each one."""
    arr = np.asarray(bits, dtype=np.int64).ravel()
    if arr.size % cfg.k_M:
        raise ContractViolation(
            f"key length {arr.size} is not a multiple of k_M = {cfg.k_M}")
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ContractViolation("key contains non-bits")
    blocks = arr.reshape(-1, cfg.k_M)
    weights = 1 << np.arange(cfg.k_M - 1, -1, -1, dtype=np.int64)
    return blocks @ weights


def constellation_points(cfg: WheelConfig) -> np.ndarray:
    """All points as an ``(M, 2)`` array indexed by ``[basis, bit]``."""
    base = np.asarray(basis_phase(np.arange(cfg.M), cfg))
    return np.stack([base, np.asarray(wrap(base + math.pi))], axis=1)
