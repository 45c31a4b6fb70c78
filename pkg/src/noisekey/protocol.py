"""The alternating key-expansion cycle between two endpoints A and B.

One cycle, with the sender alternating A, B, A, ...::

    sender                                   receiver
    ------                                   --------
    R  <- fresh bits (L)
    k  <- next L*k_M running-key bits
    Y  =  encode(R, k, noise)   -- PHASES -->  R' = decode(Y, k)
    digests(R)                  -- DIGESTS ->
                                <- DIGESTS --  digests(R')
    keep blocks whose digests agree            keep blocks whose digests agree
    seed <- 64 random bits      -- AMPLIFY ->
    Toeplitz-hash kept bits down to floor(f**(j+1) * kept)

The kept (reconciled) bits are appended to the running key, so the bases of
cycle ``j`` are drawn from what was shared in cycle ``j - 1``.  The hashed
output is appended to the distilled keystream.  Cycle ``j`` (counting from
zero) retains ``f**(j+1)`` of its bits: every cycle's secrecy rests on all
the cycles before it, so the compromised fraction compounds.

:func:`run_session` drives two :class:`Endpoint` objects in one process; the
``net`` module drives the same objects over TCP.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.signal import fftconvolve

from .constellation import WheelConfig, bases_from_key, decode, encode, wrap_signed
from .errors import ContractViolation, KeyExhausted, ProtocolViolation
from .noise import EntropySource, NoiseModel, fresh_bits, sample_noise

__all__ = [
    "Role",
    "KeyBuffer",
    "SessionConfig",
    "DistillationLedger",
    "PhaseSignal",
    "SessionState",
    "CycleRecord",
    "SessionResult",
    "Endpoint",
    "emit_cycle",
    "receive_cycle",
    "block_digests",
    "kept_mask",
    "reconcile",
    "toeplitz_hash",
    "privacy_amplify",
    "expand_hash_seed",
    "retained_length",
    "cycle_retain",
    "geometric_ledger",
    "run_session",
    "xor_repeat_probe",
]

DIGEST_SIZE = 8
_DIGEST_PERSON = b"nk-reconcile"
_DIRECT_CONV_LIMIT = 4_000_000


class Role(str, Enum):
    A = "A"
    B = "B"

    @property
    def peer(self) -> "Role":
        return Role.B if self is Role.A else Role.A


def sender_for(cycle_index: int) -> Role:
    return Role.A if cycle_index % 2 == 0 else Role.B


def _as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ContractViolation("bit sequence contains values other than 0 and 1")
    return arr


class KeyBuffer:
    """Running key: K0 followed by every cycle's reconciled bits.

    Bits before ``cursor`` have selected bases already and are never
    handed out again.
    """

    def __init__(self, bits):
        self._bits = _as_bits(bits).copy()
        self.cursor = 0

    def __len__(self):
        return self._bits.size

    @property
    def available(self) -> int:
        return self._bits.size - self.cursor

    def take(self, count: int) -> np.ndarray:
        if count > self.available:
            raise KeyExhausted(
                f"need {count} key bits, {self.available} unconsumed")
        out = self._bits[self.cursor:self.cursor + count].copy()
        self.cursor += count
        return out

    def extend(self, bits):
        self._bits = np.concatenate([self._bits, _as_bits(bits)])

    def unconsumed(self) -> np.ndarray:
        return self._bits[self.cursor:].copy()


@dataclass(frozen=True)
class SessionConfig:
    """Parameters both endpoints must agree on.

    ``f_retain`` is the per-cycle retained fraction; cycle ``j`` keeps
    ``f_retain ** (j + 1)`` of its reconciled bits.  A session stops with
    restart-required once a cycle distils fewer than ``L_min`` bits or the
    running key cannot cover the next cycle.
    """

    wheel: WheelConfig
    noise: NoiseModel
    L: int = 1000
    L_min: int = 0
    f_retain: float = 0.9991
    block_size: int = 64

    def __post_init__(self):
        if self.L < 1:
            raise ContractViolation("L must be positive")
        if not 0 <= self.L_min < self.L:
            raise ContractViolation("need 0 <= L_min < L")
        if not 0.0 < self.f_retain <= 1.0:
            raise ContractViolation("f_retain must lie in (0, 1]")
        if self.f_retain * self.L < 1:
            raise ContractViolation("f_retain * L must be at least 1")
        if self.block_size < 1:
            raise ContractViolation("reconciliation block size must be positive")

    @property
    def key_bits_per_cycle(self) -> int:
        return self.L * self.wheel.k_M


@dataclass
class DistillationLedger:
    raw_shared: int = 0
    distilled: int = 0
    discarded_reconciliation: int = 0
    discarded_privacy: int = 0

    def record(self, raw: int, kept: int, distilled: int):
        if not 0 <= distilled <= kept <= raw:
            raise ContractViolation("ledger entry must satisfy distilled <= kept <= raw")
        self.raw_shared += raw
        self.discarded_reconciliation += raw - kept
        self.discarded_privacy += kept - distilled
        self.distilled += distilled

    @property
    def balanced(self) -> bool:
        return (self.distilled + self.discarded_reconciliation
                + self.discarded_privacy == self.raw_shared)

    @property
    def distilled_fraction(self) -> float:
        return self.distilled / self.raw_shared if self.raw_shared else 0.0


@dataclass
class PhaseSignal:
    """Phases sent on the public channel during one cycle."""

    samples: np.ndarray
    cycle_index: int
    direction: Role

    def __len__(self):
        return len(self.samples)


@dataclass
class SessionState:
    role: Role
    current_key: KeyBuffer
    cycle_index: int = 0
    ledger: DistillationLedger = field(default_factory=DistillationLedger)


def emit_cycle(state: SessionState, cfg: SessionConfig, source: EntropySource,
               length: int | None = None):
    """Cipher ``L`` fresh bits on bases drawn from the running key.

    Returns ``(signal, fresh_bits)``.  Raises :class:`KeyExhausted` before
    drawing anything if the key cannot cover the cycle.
    """
    L = cfg.L if length is None else length
    need = L * cfg.wheel.k_M
    if state.current_key.available < need:
        raise KeyExhausted(
            f"cycle {state.cycle_index} needs {need} key bits, "
            f"{state.current_key.available} unconsumed")
    bases = bases_from_key(state.current_key.take(need), cfg.wheel)
    bits = fresh_bits(L, source)
    noise = sample_noise(cfg.noise, source, L)
    samples = np.asarray(encode(bits, bases, noise, cfg.wheel))
    return PhaseSignal(samples, state.cycle_index, state.role), bits


def receive_cycle(state: SessionState, cfg: SessionConfig, signal: PhaseSignal,
                  length: int | None = None) -> np.ndarray:
    """Strip the bases off ``signal`` and decide each bit."""
    L = cfg.L if length is None else length
    if len(signal) != L:
        raise ProtocolViolation(f"expected {L} samples, got {len(signal)}")
    if signal.cycle_index != state.cycle_index:
        raise ProtocolViolation(
            f"signal for cycle {signal.cycle_index}, receiver at {state.cycle_index}")
    bases = bases_from_key(state.current_key.take(L * cfg.wheel.k_M), cfg.wheel)
    return np.asarray(decode(signal.samples, bases, cfg.wheel), dtype=np.uint8)


def block_digests(bits, block_size: int, cycle_index: int = 0) -> list[bytes]:
    """64-bit BLAKE2b digest per block; the last block may be short."""
    arr = _as_bits(bits)
    out = []
    for b, start in enumerate(range(0, arr.size, block_size)):
        block = arr[start:start + block_size]
        h = hashlib.blake2b(digest_size=DIGEST_SIZE, person=_DIGEST_PERSON)
        h.update(struct.pack(">III", cycle_index, b, block.size))
        h.update(np.packbits(block).tobytes())
        out.append(h.digest())
    return out


def kept_mask(local_digests, remote_digests) -> np.ndarray:
    """Per-block agreement; public, so an eavesdropper can compute it too."""
    if len(local_digests) != len(remote_digests):
        raise ProtocolViolation(
            f"digest count mismatch: {len(local_digests)} local, "
            f"{len(remote_digests)} remote")
    return np.array([a == b for a, b in zip(local_digests, remote_digests)], dtype=bool)


def _expand_mask(mask: np.ndarray, n_bits: int, block_size: int) -> np.ndarray:
    return np.repeat(mask, block_size)[:n_bits]


def reconcile(local, remote_digests, cfg: SessionConfig, cycle_index: int = 0):
    """Drop every block whose digest disagrees with the peer's.

    Returns ``(kept_bits, discarded_bit_count)``.
    """
    arr = _as_bits(local)
    mask = kept_mask(block_digests(arr, cfg.block_size, cycle_index), remote_digests)
    keep = _expand_mask(mask, arr.size, cfg.block_size)
    kept = arr[keep]
    return kept, int(arr.size - kept.size)


def toeplitz_hash(bits, out_len: int, seed_bits) -> np.ndarray:
    """Multiply ``bits`` by the ``out_len x n`` Toeplitz matrix over GF(2).

    Entry ``(i, j)`` of the matrix is ``seed[i - j + n - 1]``, so the first
    ``n + out_len - 1`` seed bits define it.
    """
    x = _as_bits(bits)
    n = x.size
    seed = _as_bits(seed_bits)
    need = n + out_len - 1
    if out_len == 0 or n == 0:
        return np.zeros(out_len, dtype=np.uint8)
    if seed.size < need:
        raise ContractViolation(f"hash seed has {seed.size} bits, need {need}")
    s = seed[:need]
    if n * out_len <= _DIRECT_CONV_LIMIT:
        acc = np.convolve(s.astype(np.int64), x.astype(np.int64), mode="valid")
    else:
        acc = np.rint(fftconvolve(s.astype(np.float64), x.astype(np.float64), mode="valid"))
        acc = acc.astype(np.int64)
    return (acc & 1).astype(np.uint8)


def retained_length(n: int, f_retain: float) -> int:
    # the epsilon absorbs products like 100 * 0.9 = 90.00000000000001
    return int(math.floor(f_retain * n + 1e-9))


def cycle_retain(f_retain: float, cycle_index: int) -> float:
    return f_retain ** (cycle_index + 1)


def privacy_amplify(bits, f_retain: float, seed_bits) -> np.ndarray:
    """Compress ``bits`` to ``floor(f_retain * n)`` bits with a Toeplitz hash."""
    if not 0.0 < f_retain <= 1.0:
        raise ContractViolation("f_retain must lie in (0, 1]")
    x = _as_bits(bits)
    return toeplitz_hash(x, retained_length(x.size, f_retain), seed_bits)


def expand_hash_seed(seed: int, length: int) -> np.ndarray:
    """Toeplitz seed bits derived from the 64-bit value sent in AMPLIFY."""
    return EntropySource.seeded(seed).bits(length)


@dataclass
class CycleRecord:
    cycle_index: int
    direction: Role
    signal: PhaseSignal
    sender_digests: list
    receiver_digests: list
    amplify_seed: int
    raw: int
    kept: int
    distilled: int
    bit_errors: int | None = None
    sent_bits: np.ndarray | None = None

    @property
    def ber(self) -> float | None:
        if self.bit_errors is None:
            return None
        return self.bit_errors / self.raw if self.raw else 0.0


class Endpoint:
    """One side of a session.  Not thread-safe: one driver per endpoint.

    Call order per cycle is ``emit`` or ``receive``, then ``digests``,
    ``reconcile``, then ``complete`` (the sender first draws the hash seed
    with ``draw_amplify_seed``).
    """

    def __init__(self, role: Role, k0, cfg: SessionConfig, source: EntropySource):
        self.cfg = cfg
        self.source = source
        self.state = SessionState(Role(role), KeyBuffer(k0))
        self._keystream: list[np.ndarray] = []
        self._pending: np.ndarray | None = None
        self._kept: np.ndarray | None = None
        self.last_distilled = 0
        self.last_kept = 0

    @property
    def role(self) -> Role:
        return self.state.role

    @property
    def ledger(self) -> DistillationLedger:
        return self.state.ledger

    @property
    def cycle_index(self) -> int:
        return self.state.cycle_index

    @property
    def is_sender(self) -> bool:
        return sender_for(self.state.cycle_index) is self.role

    def keystream(self) -> np.ndarray:
        if not self._keystream:
            return np.zeros(0, dtype=np.uint8)
        return np.concatenate(self._keystream)

    def emit(self) -> PhaseSignal:
        if not self.is_sender:
            raise ProtocolViolation(f"{self.role.value} is not the sender of cycle {self.cycle_index}")
        signal, bits = emit_cycle(self.state, self.cfg, self.source)
        self._pending = bits
        return signal

    def receive(self, signal: PhaseSignal) -> np.ndarray:
        if self.is_sender:
            raise ProtocolViolation(f"{self.role.value} is the sender of cycle {self.cycle_index}")
        if self.state.current_key.available < self.cfg.key_bits_per_cycle:
            raise KeyExhausted("receiver key cannot cover the cycle")
        self._pending = receive_cycle(self.state, self.cfg, signal)
        return self._pending

    def pending_bits(self) -> np.ndarray:
        if self._pending is None:
            raise ProtocolViolation("no cycle in progress")
        return self._pending

    def digests(self) -> list[bytes]:
        return block_digests(self.pending_bits(), self.cfg.block_size, self.cycle_index)

    def reconcile(self, remote_digests) -> np.ndarray:
        kept, _ = reconcile(self.pending_bits(), remote_digests, self.cfg, self.cycle_index)
        self._kept = kept
        return kept

    def draw_amplify_seed(self) -> int:
        return self.source.u64()

    def complete(self, amplify_seed: int) -> np.ndarray:
        """Hash the kept bits, update key, keystream and ledger; advance the cycle."""
        if self._kept is None:
            raise ProtocolViolation("complete() before reconcile()")
        raw = self.pending_bits().size
        kept = self._kept
        f = cycle_retain(self.cfg.f_retain, self.cycle_index)
        m = retained_length(kept.size, f)
        seed_bits = expand_hash_seed(amplify_seed, kept.size + m - 1) if m else []
        distilled = toeplitz_hash(kept, m, seed_bits)
        self.state.current_key.extend(kept)
        self._keystream.append(distilled)
        self.state.ledger.record(raw, kept.size, distilled.size)
        self.state.cycle_index += 1
        self.last_distilled = distilled.size
        self.last_kept = kept.size
        self._pending = None
        self._kept = None
        return distilled

    def restart_reason(self) -> str | None:
        """Why the next cycle cannot run, or None if it can."""
        if self.cycle_index > 0 and self.last_distilled < self.cfg.L_min:
            return (f"cycle {self.cycle_index - 1} distilled {self.last_distilled} "
                    f"bits < L_min = {self.cfg.L_min}")
        if self.state.current_key.available < self.cfg.key_bits_per_cycle:
            return (f"running key has {self.state.current_key.available} bits, "
                    f"next cycle needs {self.cfg.key_bits_per_cycle}")
        return None


@dataclass
class SessionResult:
    keystream_a: np.ndarray
    keystream_b: np.ndarray
    ledger: DistillationLedger
    status: str
    cycles_run: int
    records: list[CycleRecord]
    reason: str | None = None

    @property
    def restart_required(self) -> bool:
        return self.status == "restart-required"

    def __iter__(self):
        # allows ``ks_a, ks_b, ledger = run_session(...)``
        return iter((self.keystream_a, self.keystream_b, self.ledger))

    @property
    def bit_errors(self) -> int:
        return sum(r.bit_errors or 0 for r in self.records)


def run_session(cfg: SessionConfig, cycles: int, k0, source_a: EntropySource,
                source_b: EntropySource) -> SessionResult:
    """Run ``cycles`` alternating cycles between two in-process endpoints."""
    a = Endpoint(Role.A, k0, cfg, source_a)
    b = Endpoint(Role.B, k0, cfg, source_b)
    records: list[CycleRecord] = []
    status, reason = "complete", None
    for j in range(cycles):
        reason = a.restart_reason()
        if reason is not None:
            status = "restart-required"
            break
        sender, receiver = (a, b) if sender_for(j) is Role.A else (b, a)
        signal = sender.emit()
        decoded = receiver.receive(signal)
        sent = sender.pending_bits()
        d_send, d_recv = sender.digests(), receiver.digests()
        sender.reconcile(d_recv)
        receiver.reconcile(d_send)
        seed = sender.draw_amplify_seed()
        out_s = sender.complete(seed)
        out_r = receiver.complete(seed)
        if not np.array_equal(out_s, out_r):
            raise ProtocolViolation(f"cycle {j}: distilled blocks differ between endpoints")
        records.append(CycleRecord(
            j, sender.role, signal, d_send, d_recv, seed,
            raw=sent.size, kept=sender.last_kept, distilled=out_s.size,
            bit_errors=int(np.count_nonzero(sent != decoded)), sent_bits=sent))
    ks_a, ks_b = a.keystream(), b.keystream()
    if not np.array_equal(ks_a, ks_b):
        raise ProtocolViolation("keystreams diverged")
    return SessionResult(ks_a, ks_b, a.ledger, status, len(records), records, reason)


def geometric_ledger(L: int, f_retain: float, cycles: int, L_min: int = 0):
    """Bit-count accounting without simulating bits.

    Matches :func:`run_session` exactly when no block is lost to
    reconciliation.  Returns ``(ledger, cycles_run, status)``.
    """
    ledger = DistillationLedger()
    last = None
    for j in range(cycles):
        if last is not None and last < L_min:
            return ledger, j, "restart-required"
        last = retained_length(L, cycle_retain(f_retain, j))
        ledger.record(L, L, last)
    return ledger, cycles, "complete"


def xor_repeat_probe(bit: int, wheel: WheelConfig, noise: NoiseModel,
                     source: EntropySource, count: int | None = None):
    """Send the same bit twice on one basis and return the phase difference.

    With noise the difference is never exactly zero, which is what defeats
    naive repetition/correlation attacks.
    """
    n = 1 if count is None else int(count)
    k = source.integers(wheel.M, n)
    y1 = encode(np.full(n, bit), k, sample_noise(noise, source, n), wheel)
    y2 = encode(np.full(n, bit), k, sample_noise(noise, source, n), wheel)
    d = np.asarray(wrap_signed(np.asarray(y1) - np.asarray(y2)))
    return float(d[0]) if count is None else d
