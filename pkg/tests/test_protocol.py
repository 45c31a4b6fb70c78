import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisekey.constellation import WheelConfig
from noisekey.errors import ContractViolation, KeyExhausted, ProtocolViolation
from noisekey.noise import EntropySource, NoiseModel, bob_error_probability
from noisekey.protocol import (
    KeyBuffer,
    Role,
    SessionConfig,
    SessionState,
    block_digests,
    emit_cycle,
    geometric_ledger,
    privacy_amplify,
    receive_cycle,
    reconcile,
    run_session,
    sender_for,
    toeplitz_hash,
    xor_repeat_probe,
)

PI = math.pi
SECTOR = WheelConfig.sector(0.1)
QUIET = NoiseModel(0.0)


def _state(key, role=Role.A):
    return SessionState(role, KeyBuffer(key))


@pytest.mark.parametrize("key,expected", [([0], PI), ([1], 0.1)])
def test_emit_noiseless_bit_one(key, expected):
    cfg = SessionConfig(SECTOR, QUIET, L=1, f_retain=1.0)

    class Ones(EntropySource):
        def bits(self, count):
            return np.ones(count, dtype=np.uint8)

    signal, bits = emit_cycle(_state(key), cfg, Ones(1))
    assert signal.samples[0] == pytest.approx(expected)
    assert receive_cycle(_state(key, Role.B), cfg, signal)[0] == 1


def test_emit_refuses_short_key():
    cfg = SessionConfig(WheelConfig.uniform(4), QUIET, L=4)
    src = EntropySource.seeded(0)
    with pytest.raises(KeyExhausted):
        emit_cycle(_state([1] * 7), cfg, src)
    assert src.position == 0


def test_receive_checks_length_and_cycle():
    cfg = SessionConfig(SECTOR, QUIET, L=4)
    signal, _ = emit_cycle(_state([0, 1, 0, 1]), cfg, EntropySource.seeded(1))
    with pytest.raises(ProtocolViolation):
        receive_cycle(_state([0, 1, 0, 1]), cfg, signal, length=3)
    st_ = _state([0, 1, 0, 1])
    st_.cycle_index = 1
    with pytest.raises(ProtocolViolation):
        receive_cycle(st_, cfg, signal)


@given(st.integers(0, 2**32), st.sampled_from([1, 2, 3]))
@settings(max_examples=25)
def test_noiseless_cycle_round_trip(seed, k_M):
    cfg = SessionConfig(WheelConfig.uniform(1 << k_M), QUIET, L=50)
    key = EntropySource.seeded(seed).bits(50 * k_M)
    signal, bits = emit_cycle(_state(key), cfg, EntropySource.seeded(seed + 1))
    assert np.array_equal(receive_cycle(_state(key, Role.B), cfg, signal), bits)


def test_reconcile_counts():
    cfg = SessionConfig(SECTOR, QUIET, L=64, block_size=8)
    bits = EntropySource.seeded(3).bits(64)
    kept, dropped = reconcile(bits, block_digests(bits, 8), cfg)
    assert dropped == 0 and np.array_equal(kept, bits)
    flipped = bits.copy()
    flipped[20] ^= 1
    kept, dropped = reconcile(flipped, block_digests(bits, 8), cfg)
    assert dropped == 8 and kept.size == 56


def test_digests_bind_cycle_and_block():
    bits = np.zeros(16, dtype=np.uint8)
    d0 = block_digests(bits, 8, 0)
    assert d0[0] != d0[1]
    assert d0 != block_digests(bits, 8, 1)


def test_discarded_block_fraction_at_quarter_pi():
    sigma = NoiseModel(PI / 4)
    cfg = SessionConfig(SECTOR, sigma, L=10**5, block_size=64, f_retain=1.0)
    res = run_session(cfg, 1, EntropySource.seeded(4).bits(10**5),
                      EntropySource.seeded(5), EntropySource.seeded(6))
    p = bob_error_probability(sigma)
    expect = 1 - (1 - p) ** 64
    frac = res.ledger.discarded_reconciliation / res.ledger.raw_shared
    assert frac == pytest.approx(expect, abs=0.01)
    assert expect == pytest.approx(0.95, abs=0.005)


def test_toeplitz_identity_and_linearity():
    n = 12
    ident = np.zeros(2 * n - 1, dtype=np.uint8)
    ident[n - 1] = 1
    x = EntropySource.seeded(7).bits(n)
    assert np.array_equal(toeplitz_hash(x, n, ident), x)
    seed = EntropySource.seeded(8).bits(2 * n - 1)
    assert not toeplitz_hash(np.zeros(n, np.uint8), n, seed).any()
    y = EntropySource.seeded(9).bits(n)
    assert np.array_equal(toeplitz_hash(x ^ y, n, seed),
                          toeplitz_hash(x, n, seed) ^ toeplitz_hash(y, n, seed))


def test_toeplitz_matches_explicit_matrix():
    n, m = 20, 9
    seed = EntropySource.seeded(10).bits(n + m - 1)
    x = EntropySource.seeded(11).bits(n)
    T = np.array([[seed[i - j + n - 1] for j in range(n)] for i in range(m)])
    assert np.array_equal(toeplitz_hash(x, m, seed), (T @ x) % 2)


def test_toeplitz_fft_path_agrees():
    n = 4000
    seed = EntropySource.seeded(12).bits(2 * n)
    x = EntropySource.seeded(13).bits(n)
    direct = toeplitz_hash(x[:500], 500, seed)
    T = np.array([[seed[i - j + 499] for j in range(500)] for i in range(500)])
    assert np.array_equal(direct, (T @ x[:500]) % 2)
    big = toeplitz_hash(x, n - 1, seed)  # n * m above the direct limit
    rows = np.array([[seed[i - j + n - 1] for j in range(n)] for i in (0, 1, n - 2)])
    assert np.array_equal(big[[0, 1, n - 2]], (rows @ x) % 2)


def test_privacy_amplify_length():
    seed = EntropySource.seeded(1).bits(2000)
    assert privacy_amplify(np.ones(1000, np.uint8), 0.9991, seed).size == 999
    with pytest.raises(ContractViolation):
        privacy_amplify(np.ones(10, np.uint8), 0.0, seed)


def test_session_noiseless_identity():
    cfg = SessionConfig(SECTOR, QUIET, L=256, f_retain=1.0)
    ka, kb, ledger = run_session(cfg, 1, EntropySource.seeded(1).bits(256),
                                 EntropySource.seeded(2), EntropySource.seeded(3))
    assert np.array_equal(ka, kb)
    assert ledger.distilled == 256 and ledger.balanced


def test_session_alternates_senders():
    cfg = SessionConfig(SECTOR, NoiseModel(0.2), L=64, f_retain=0.99)
    res = run_session(cfg, 4, EntropySource.seeded(1).bits(64),
                      EntropySource.seeded(2), EntropySource.seeded(3))
    assert [r.direction for r in res.records] == [Role.A, Role.B, Role.A, Role.B]
    assert [sender_for(j) for j in range(3)] == [Role.A, Role.B, Role.A]
    assert res.ledger.balanced


def test_session_reproducible():
    cfg = SessionConfig(WheelConfig.uniform(4), NoiseModel(0.3), L=128, f_retain=0.95)
    k0 = EntropySource.seeded(1).bits(256)
    r1 = run_session(cfg, 3, k0, EntropySource.seeded(2), EntropySource.seeded(3))
    r2 = run_session(cfg, 3, k0, EntropySource.seeded(2), EntropySource.seeded(3))
    assert np.array_equal(r1.keystream_a, r2.keystream_a)


def test_geometric_ledger_matches_bit_level():
    cfg = SessionConfig(SECTOR, NoiseModel(0.1), L=1000, f_retain=0.9991)
    res = run_session(cfg, 40, EntropySource.seeded(1).bits(1000),
                      EntropySource.seeded(2), EntropySource.seeded(3))
    ledger, cycles, status = geometric_ledger(1000, 0.9991, 40)
    assert (status, cycles) == ("complete", 40)
    assert res.ledger.distilled == ledger.distilled


def test_l_min_restart():
    ledger, cycles, status = geometric_ledger(100, 0.9, 5, L_min=99)
    assert (cycles, status) == (1, "restart-required")
    cfg = SessionConfig(SECTOR, QUIET, L=100, L_min=99, f_retain=0.9)
    res = run_session(cfg, 5, EntropySource.seeded(1).bits(100),
                      EntropySource.seeded(2), EntropySource.seeded(3))
    assert res.status == "restart-required" and res.cycles_run == 1


def test_key_buffer():
    kb = KeyBuffer([1, 0, 1])
    assert kb.take(2).tolist() == [1, 0]
    kb.extend([1, 1])
    assert kb.available == 3
    with pytest.raises(KeyExhausted):
        kb.take(4)


def test_xor_repeat_probe():
    assert xor_repeat_probe(1, SECTOR, QUIET, EntropySource.seeded(1)) == 0.0
    d = xor_repeat_probe(0, SECTOR, NoiseModel(0.5), EntropySource.seeded(2), 10**5)
    assert np.count_nonzero(d == 0.0) == 0
    assert 0.700 <= d.std() <= 0.714
