"""Software stand-in for the physical random generator.

Two ingredients hide each transmitted bit: a source of unbiased random bits
and zero-mean Gaussian phase noise of width ``sigma_phi``.  The noise width
can be set directly, from the mean photon number of a coherent pulse
(``sigma = sqrt(2/n)``), or from the number of wheel bases one standard
deviation covers (``sigma = pi * N_sigma / M``).

Deterministic streams
---------------------
Seeded sources use SplitMix64 (Steele, Lea & Flood 2014) in counter form:
word ``i`` of seed ``s`` is ``mix64(s + (i + 1) * 0x9E3779B97F4A7C15)``.
Draws consume words in order:

* a bit takes one word and keeps its top bit;
* a uniform double takes one word, ``(w >> 11) * 2**-53``;
* a normal variate takes two words ``w1, w2`` and applies Box-Muller,
  ``sqrt(-2 ln u1) * cos(2 pi u2)`` with ``u1 = ((w1 >> 11) + 1) * 2**-53``
  in ``(0, 1]`` and ``u2 = (w2 >> 11) * 2**-53``.

The counter form makes large draws a single vectorised numpy expression and
keeps streams identical across platforms.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import DomainError

__all__ = [
    "NoiseModel",
    "EntropySource",
    "splitmix64",
    "sigma_from_photons",
    "sigma_from_coverage",
    "sample_noise",
    "fresh_bits",
    "bob_error_probability",
    "SEED_ENV",
]

SEED_ENV = "NOISEKEY_TEST_SEED"

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SPAWN_KEY = 0xD1B54A32D192ED03
_MASK64 = (1 << 64) - 1
_HALF_PI = math.pi / 2


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def splitmix64(seed: int, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count-1`` of the SplitMix64 stream for ``seed``."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(np.uint64(seed & _MASK64) + idx * _GAMMA)


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian phase noise, ``0 <= sigma_phi < pi/2``."""

    sigma_phi: float

    def __post_init__(self):
        s = self.sigma_phi
        if not (math.isfinite(s) and 0.0 <= s < _HALF_PI):
            raise DomainError(f"sigma_phi must lie in [0, pi/2), got {s}")

    def density(self, dphi):
        """Normalised Gaussian density of an (unwrapped) phase offset."""
        if self.sigma_phi == 0:
            raise DomainError("density is singular at sigma_phi = 0")
        return norm.pdf(dphi, scale=self.sigma_phi)


def sigma_from_photons(n_mean: float) -> NoiseModel:
    """Coherent-state phase spread ``sqrt(2/<n>)``.

    >>> sigma_from_photons(8).sigma_phi
    0.5
    """
    if not n_mean > 8 / math.pi ** 2:
        raise DomainError(
            f"mean photon number {n_mean} gives sigma_phi >= pi/2 "
            f"(need n > 8/pi^2 = {8 / math.pi ** 2:.6f})")
    return NoiseModel(math.sqrt(2.0 / n_mean))


def sigma_from_coverage(n_sigma: float, M: int) -> NoiseModel:
    """Noise width covering ``n_sigma`` of the ``M`` wheel bases."""
    if not (n_sigma > 0 and M >= 2):
        raise DomainError("coverage needs n_sigma > 0 and M >= 2")
    if not n_sigma < M / 2:
        raise DomainError(
            f"N_sigma = {n_sigma} of M = {M} bases gives sigma_phi >= pi/2")
    return NoiseModel(math.pi * n_sigma / M)


class EntropySource:
    """Stream of 64-bit words feeding bits, uniforms and normals.

    Use :meth:`seeded` for reproducible runs and :meth:`system` for the
    operating system's entropy pool.  A source is single-consumer; give each
    concurrent consumer its own source via :meth:`spawn`.
    """

    def __init__(self, seed: int | None = None):
        self.seed = None if seed is None else int(seed) & _MASK64
        self.position = 0

    @classmethod
    def seeded(cls, seed: int) -> "EntropySource":
        return cls(seed)

    @classmethod
    def system(cls) -> "EntropySource":
        return cls(None)

    @classmethod
    def from_env(cls, seed: int | None = None) -> "EntropySource":
        """Explicit seed, else ``NOISEKEY_TEST_SEED``, else system entropy."""
        if seed is None:
            raw = os.environ.get(SEED_ENV)
            if raw is not None and raw.strip():
                seed = int(raw.strip(), 10)
        return cls.system() if seed is None else cls.seeded(seed)

    @property
    def deterministic(self) -> bool:
        return self.seed is not None

    def spawn(self, index: int) -> "EntropySource":
        """Independent child stream; deterministic children for seeded parents."""
        if self.seed is None:
            return EntropySource.system()
        z = ((self.seed ^ _SPAWN_KEY) + (index + 1) * int(_GAMMA)) & _MASK64
        child = _mix64(np.array([z], dtype=np.uint64))
        return EntropySource.seeded(int(child[0]))

    def words(self, count: int) -> np.ndarray:
        count = int(count)
        if count < 0:
            raise ValueError("negative draw count")
        if self.seed is None:
            out = np.frombuffer(os.urandom(8 * count), dtype=">u8").astype(np.uint64)
        else:
            out = splitmix64(self.seed, self.position, count)
        self.position += count
        return out

    def u64(self) -> int:
        return int(self.words(1)[0])

    def bits(self, count: int) -> np.ndarray:
        return (self.words(count) >> np.uint64(63)).astype(np.uint8)

    def uniform(self, count: int) -> np.ndarray:
        return (self.words(count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def normal(self, count: int) -> np.ndarray:
        w = self.words(2 * count).reshape(-1, 2)
        u1 = ((w[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
        u2 = (w[:, 1] >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)

    def integers(self, high: int, count: int) -> np.ndarray:
        """Uniform integers in ``[0, high)`` for a power-of-two ``high``."""
        if high < 1 or high & (high - 1):
            raise ValueError("high must be a power of two")
        shift = 64 - (high.bit_length() - 1)
        if shift == 64:
            self.words(count)
            return np.zeros(count, dtype=np.int64)
        return (self.words(count) >> np.uint64(shift)).astype(np.int64)


def sample_noise(model: NoiseModel, source: EntropySource, size: int | None = None):
    """Unwrapped phase-noise draws; a float when ``size`` is None."""
    n = 1 if size is None else int(size)
    z = source.normal(n)
    out = np.zeros(n) if model.sigma_phi == 0 else model.sigma_phi * z
    return float(out[0]) if size is None else out


def fresh_bits(count: int, source: EntropySource) -> np.ndarray:
    """Independent unbiased bits as a ``uint8`` array."""
    if count < 0:
        raise ValueError("count must be non-negative")
    return source.bits(count)


def bob_error_probability(model: NoiseModel, wraps: int = 8) -> float:
    """Probability that wrapped noise exceeds pi/2 in magnitude.

    Sums the Gaussian mass over every error interval
    ``(pi/2 + 2 pi j, 3 pi/2 + 2 pi j)`` on both sides.
    """
    s = model.sigma_phi
    if s == 0:
        return 0.0
    total = 0.0
    for j in range(wraps):
        lo = (_HALF_PI + 2 * math.pi * j) / s
        hi = (3 * _HALF_PI + 2 * math.pi * j) / s
        total += norm.sf(lo) - norm.sf(hi)
    return float(2.0 * total)
