"""What a passive eavesdropper learns from the public phases.

Eve sees every transmitted phase exactly (the signal is a deterministic
recording and can be copied without loss) but not the running key.  Her
best per-bit inference is the Bayesian posterior with the basis
marginalised out; Bob decides on the known basis.  The gap between their
mutual informations is the per-bit secrecy margin.

The module also carries the brute-force cost formulas and a desk-scale
exhaustive key search that replays basis derivation for every candidate K0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.special import entr, logsumexp

from .constellation import (
    PHASE_TOL,
    TWO_PI,
    WheelConfig,
    bases_from_key,
    constellation_points,
    decode,
    encode,
    wrap_signed,
)
from .errors import AttackRefused, ContractViolation, UndefinedLikelihood
from .noise import EntropySource, NoiseModel, sample_noise
from .protocol import KeyBuffer, kept_mask

__all__ = [
    "InfoEstimate",
    "MIEstimate",
    "AttackReport",
    "binary_entropy",
    "log_wrapped_normal",
    "eve_bit_posterior",
    "mutual_information",
    "delta_I",
    "combine_estimates",
    "brute_force_count_uniform",
    "brute_force_count_sector",
    "exhaustive_attack",
    "replay_with_key",
    "public_masks",
    "eve_known_fraction",
    "MAX_ATTACK_KEY_BITS",
]

WRAPS = 3
MAX_ATTACK_KEY_BITS = 20
_CHUNK = 1 << 17
_LN2 = math.log(2.0)


def binary_entropy(p):
    """h2(p) in bits, with h2(0) = h2(1) = 0."""
    p = np.asarray(p, dtype=float)
    return (entr(p) + entr(1.0 - p)) / _LN2


def log_wrapped_normal(d, sigma: float, wraps: int = WRAPS):
    """Log density of the wrapped normal at offset ``d``.

    The offset is first reduced to ``(-pi, pi]`` and the images at
    ``+-wraps`` turns are summed; for ``sigma < pi/2`` the neglected mass is
    far below 1e-12.
    """
    d = np.asarray(wrap_signed(d))
    shifts = TWO_PI * np.arange(-wraps, wraps + 1)
    z = (d[..., None] + shifts) / sigma
    return logsumexp(-0.5 * z * z, axis=-1) - math.log(sigma * math.sqrt(TWO_PI))


def _point_weights(y, points: np.ndarray, sigma: float) -> np.ndarray:
    """Unnormalised likelihood of ``y`` under each point, shape ``y.shape + points.shape``."""
    y = np.asarray(y, dtype=float)
    d = y[..., None] - points.ravel()
    if sigma == 0:
        hit = np.abs(np.asarray(wrap_signed(d))) <= PHASE_TOL
        return hit.astype(float).reshape(y.shape + points.shape)
    ll = log_wrapped_normal(d, sigma)
    ll = ll - ll.max(axis=-1, keepdims=True)
    return np.exp(ll).reshape(y.shape + points.shape)


def eve_bit_posterior(y, cfg: WheelConfig, noise: NoiseModel):
    """P(bit = 1 | y) under uniform priors on basis and bit.

    >>> eve_bit_posterior(1.0, WheelConfig.sector(0.0), NoiseModel(0.3))
    0.5
    """
    scalar = np.ndim(y) == 0
    w = _point_weights(y, constellation_points(cfg), noise.sigma_phi)
    s0 = w[..., 0].sum(axis=-1)
    s1 = w[..., 1].sum(axis=-1)
    total = s0 + s1
    if np.any(total == 0):
        raise UndefinedLikelihood("observation lies off every constellation point")
    p = s1 / total
    return float(p) if scalar else p


@dataclass(frozen=True)
class MIEstimate:
    value: float
    std_err: float
    samples: int


@dataclass(frozen=True)
class InfoEstimate:
    """Per-bit mutual informations of Bob and Eve with the fresh bits."""

    I_B: float
    I_E: float
    delta_I: float
    std_err: float
    samples: int


def combine_estimates(parts: Sequence[MIEstimate]) -> MIEstimate:
    """Pool estimates from independent sub-streams, weighting by sample count."""
    n = sum(p.samples for p in parts)
    if n == 0:
        raise ContractViolation("nothing to combine")
    value = sum(p.value * p.samples for p in parts) / n
    var = sum((p.std_err * p.samples) ** 2 for p in parts) / n ** 2
    return MIEstimate(value, math.sqrt(var), n)


def _draw(cfg: WheelConfig, noise: NoiseModel, source: EntropySource, n: int):
    bits = source.bits(n)
    k = source.integers(cfg.M, n)
    y = np.asarray(encode(bits, k, sample_noise(noise, source, n), cfg))
    return bits, k, y


def _bob_chunk(cfg, noise, source, n) -> tuple[int, int]:
    bits, k, y = _draw(cfg, noise, source, n)
    return int(np.count_nonzero(np.asarray(decode(y, k, cfg)) != bits)), n


def _eve_chunk(cfg, noise, source, n) -> tuple[float, float, int]:
    _, _, y = _draw(cfg, noise, source, n)
    h = binary_entropy(eve_bit_posterior(y, cfg, noise))
    return float(h.sum()), float((h * h).sum()), n


def mutual_information(cfg: WheelConfig, noise: NoiseModel,
                       observer: Literal["bob", "eve"], samples: int,
                       source: EntropySource, chunk: int = _CHUNK) -> MIEstimate:
    """Monte Carlo estimate of I(R; observation) in bits per bit.

    Bob's observation is his hard decision on the known basis, so his
    information is ``1 - h2(ber)``.  Eve's observation is the raw phase and
    her information is ``1 - E[h2(P(1|y))]`` with the basis marginalised.
    Each chunk of ``chunk`` samples draws from its own spawned sub-stream,
    so chunks may be evaluated in parallel and pooled.
    """
    if samples < 1:
        raise ContractViolation("samples must be positive")
    sizes = [chunk] * (samples // chunk) + ([samples % chunk] if samples % chunk else [])
    if observer == "bob":
        errors = 0
        for c, n in enumerate(sizes):
            e, _ = _bob_chunk(cfg, noise, source.spawn(c), n)
            errors += e
        p = errors / samples
        value = 1.0 - float(binary_entropy(p))
        if 0 < p < 1:
            se = abs(math.log2((1 - p) / p)) * math.sqrt(p * (1 - p) / samples)
        else:
            se = 0.0
        return MIEstimate(value, se, samples)
    if observer == "eve":
        s1 = s2 = 0.0
        for c, n in enumerate(sizes):
            a, b, _ = _eve_chunk(cfg, noise, source.spawn(c), n)
            s1 += a
            s2 += b
        mean = s1 / samples
        var = max(s2 / samples - mean * mean, 0.0)
        value = max(1.0 - mean, 0.0)
        return MIEstimate(value, math.sqrt(var / samples), samples)
    raise ContractViolation(f"unknown observer {observer!r}")


def delta_I(cfg: WheelConfig, noise: NoiseModel, samples: int,
            source: EntropySource) -> InfoEstimate:
    """Secrecy margin ``I_B - I_E`` per bit, with a combined standard error."""
    bob = mutual_information(cfg, noise, "bob", samples, source.spawn(0))
    eve = mutual_information(cfg, noise, "eve", samples, source.spawn(1))
    return InfoEstimate(bob.value, eve.value, bob.value - eve.value,
                        math.hypot(bob.std_err, eve.std_err), samples)


def brute_force_count_uniform(k0_len: int, n_sigma: int) -> int:
    """Candidates to search on a uniform wheel, ``2**K0 * (log2 N)! * N``."""
    if n_sigma < 1 or n_sigma & (n_sigma - 1):
        raise ContractViolation("N_sigma must be a power of two >= 1")
    if k0_len < 0:
        raise ContractViolation("key length must be non-negative")
    return (1 << k0_len) * math.factorial(n_sigma.bit_length() - 1) * n_sigma


def brute_force_count_sector(k0_len: int) -> int:
    """Candidates to search with two sector bases, ``2 * 2**K0``."""
    if k0_len < 0:
        raise ContractViolation("key length must be non-negative")
    return 2 << k0_len


def eve_known_fraction(cfg: WheelConfig, n_sigma: float) -> float:
    """Share of a uniform wheel's key bits left uncovered by the noise."""
    if cfg.mode != "uniform":
        raise ContractViolation("known-fraction estimate applies to the uniform wheel only")
    if not 0 < n_sigma <= cfg.M:
        raise ContractViolation("need 0 < N_sigma <= M")
    return 1.0 - n_sigma / cfg.M


def public_masks(records, block_size: int) -> list[np.ndarray]:
    """Bit-level keep masks from the digests both sides published."""
    out = []
    for r in records:
        m = kept_mask(r.sender_digests, r.receiver_digests)
        out.append(np.repeat(m, block_size)[:len(r.signal)])
    return out


def _masks_or_all(signals, kept_masks):
    if kept_masks is None:
        return [np.ones(len(s), dtype=bool) for s in signals]
    if len(kept_masks) != len(signals):
        raise ContractViolation("one keep mask per signal required")
    return [np.asarray(m, dtype=bool) for m in kept_masks]


def _samples(sig) -> np.ndarray:
    return np.asarray(getattr(sig, "samples", sig), dtype=float)


def replay_with_key(signals, cfg: WheelConfig, k0, kept_masks=None) -> list[np.ndarray]:
    """Decode a whole transcript the way Bob would, given K0.

    This is the eavesdropper who learned K0: every later cycle's key follows
    from the previous cycle's decoded bits, so nothing stays hidden.
    """
    key = KeyBuffer(k0)
    out = []
    for sig, mask in zip(signals, _masks_or_all(signals, kept_masks)):
        y = _samples(sig)
        bases = bases_from_key(key.take(y.size * cfg.k_M), cfg)
        bits = np.asarray(decode(y, bases, cfg), dtype=np.uint8)
        out.append(bits)
        key.extend(bits[mask])
    return out


@dataclass
class AttackReport:
    candidates: int
    log_likelihood: np.ndarray
    true_rank: int | None
    posterior_entropy: float
    transcript_bits: int

    def summary(self) -> dict:
        return {
            "candidates": self.candidates,
            "transcript_bits": self.transcript_bits,
            "true_rank": self.true_rank,
            "posterior_entropy": self.posterior_entropy,
        }


def _candidate_matrix(k0_len: int) -> np.ndarray:
    idx = np.arange(1 << k0_len, dtype=np.int64)
    shifts = np.arange(k0_len - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def _basis_loglik(y: np.ndarray, cfg: WheelConfig, noise: NoiseModel) -> np.ndarray:
    """Table ``[basis, sample]`` of log p(y | basis), bit marginalised."""
    pts = constellation_points(cfg)
    d = y[None, :, None] - pts[:, None, :]
    if noise.sigma_phi == 0:
        hit = np.any(np.abs(np.asarray(wrap_signed(d))) <= PHASE_TOL, axis=-1)
        with np.errstate(divide="ignore"):
            return np.log(hit.astype(float))
    ll = log_wrapped_normal(d, noise.sigma_phi)
    return logsumexp(ll, axis=-1) - _LN2


def exhaustive_attack(signals, cfg: WheelConfig, noise: NoiseModel, k0_len: int,
                      true_key=None, kept_masks=None) -> AttackReport:
    """Score every candidate K0 against a recorded transcript.

    For each candidate the running key is replayed exactly as the endpoints
    would (cycle ``j`` bases come from the candidate's decode of cycle
    ``j - 1``), and the log-likelihood of every observed phase is summed.
    The report gives the true key's rank (1 = most likely) and the entropy
    of the normalised posterior over candidates.
    """
    if not 0 <= k0_len <= MAX_ATTACK_KEY_BITS:
        raise AttackRefused(
            f"K0 length {k0_len} exceeds the desk-scale limit of {MAX_ATTACK_KEY_BITS} bits")
    signals = list(signals)
    masks = _masks_or_all(signals, kept_masks)
    keys = _candidate_matrix(k0_len)
    n_cand = keys.shape[0]
    cursor = 0
    ll = np.zeros(n_cand)
    weights = 1 << np.arange(cfg.k_M - 1, -1, -1, dtype=np.int64)
    n_bits = 0
    for sig, mask in zip(signals, masks):
        y = _samples(sig)
        L = y.size
        need = L * cfg.k_M
        if keys.shape[1] - cursor < need:
            raise ContractViolation("transcript outruns the running key it implies")
        blocks = keys[:, cursor:cursor + need].reshape(n_cand, L, cfg.k_M).astype(np.int64)
        cursor += need
        bases = blocks @ weights
        cols = np.arange(L)[None, :]
        ll += _basis_loglik(y, cfg, noise)[bases, cols].sum(axis=1)
        dec = np.asarray(decode(y[None, :], np.arange(cfg.M)[:, None], cfg), dtype=np.uint8)
        decoded = dec[bases, cols]
        keys = np.concatenate([keys[:, cursor:], decoded[:, mask]], axis=1)
        cursor = 0
        n_bits += L
    finite = np.isfinite(ll)
    if not finite.any():
        raise UndefinedLikelihood("no candidate key explains the transcript")
    top = ll[finite].max()
    w = np.where(finite, np.exp(np.where(finite, ll, top) - top), 0.0)
    p = w / w.sum()
    entropy = float(-(p[p > 0] * np.log2(p[p > 0])).sum())
    entropy = min(max(entropy, 0.0), float(k0_len)) + 0.0
    rank = None
    if true_key is not None:
        tk = np.asarray(true_key, dtype=np.int64).ravel()
        if tk.size != k0_len:
            raise ContractViolation("true key length differs from k0_len")
        t = int(tk @ (1 << np.arange(k0_len - 1, -1, -1, dtype=np.int64))) if k0_len else 0
        rank = 1 + int(np.count_nonzero(ll > ll[t]))
    return AttackReport(n_cand, ll, rank, entropy, n_bits)
