import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisekey.adversary import (
    binary_entropy,
    brute_force_count_sector,
    brute_force_count_uniform,
    delta_I,
    eve_bit_posterior,
    eve_known_fraction,
    exhaustive_attack,
    mutual_information,
    public_masks,
    replay_with_key,
)
from noisekey.constellation import WheelConfig
from noisekey.errors import AttackRefused, ContractViolation, UndefinedLikelihood
from noisekey.noise import EntropySource, NoiseModel, bob_error_probability
from noisekey.protocol import SessionConfig, run_session

PI = math.pi


def test_binary_entropy():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
    assert binary_entropy(0.11) == pytest.approx(0.4999, abs=1e-3)


@given(st.floats(-10, 10), st.floats(0.05, 1.5))
def test_symmetric_sector_posterior_is_half(y, sigma):
    assert eve_bit_posterior(y, WheelConfig.sector(0.0), NoiseModel(sigma)) == 0.5


def test_posterior_examples():
    p = eve_bit_posterior(PI, WheelConfig.uniform(2), NoiseModel(1e-6))
    assert p == pytest.approx(1.0, abs=1e-9)
    p = eve_bit_posterior(0.05, WheelConfig.sector(0.1), NoiseModel(0.5))
    assert 0.49 < p < 0.51


def test_noiseless_posterior_off_constellation():
    cfg = WheelConfig.uniform(4)
    assert eve_bit_posterior(PI, cfg, NoiseModel(0.0)) in (0.0, 1.0, 0.5)
    with pytest.raises(UndefinedLikelihood):
        eve_bit_posterior(0.3, cfg, NoiseModel(0.0))


def test_bob_mi_limits():
    src = EntropySource.seeded(1)
    assert mutual_information(WheelConfig.sector(0.1), NoiseModel(0.0), "bob", 1000, src).value == 1.0
    est = mutual_information(WheelConfig.sector(0.1), NoiseModel(PI / 4), "bob", 200_000,
                             EntropySource.seeded(2))
    exact = 1 - binary_entropy(bob_error_probability(NoiseModel(PI / 4)))
    assert abs(est.value - exact) <= 3 * est.std_err
    assert exact == pytest.approx(0.733, abs=1e-3)


def test_eve_mi_zero_when_symmetric():
    est = mutual_information(WheelConfig.sector(0.0), NoiseModel(0.3), "eve", 5000,
                             EntropySource.seeded(3))
    assert est.value == 0.0
    d = delta_I(WheelConfig.sector(0.0), NoiseModel(0.3), 5000, EntropySource.seeded(3))
    assert d.delta_I == d.I_B


def test_mi_rejects_bad_observer():
    with pytest.raises(ContractViolation):
        mutual_information(WheelConfig.sector(0.1), NoiseModel(0.1), "carol", 10,
                           EntropySource.seeded(1))


@given(st.floats(0.01, 1.4), st.floats(0.0, 1.5))
@settings(max_examples=10, deadline=None)
def test_delta_i_bounded(sigma, dphi):
    d = delta_I(WheelConfig.sector(dphi), NoiseModel(sigma), 2000, EntropySource.seeded(4))
    assert -1.0 <= d.delta_I <= 1.0
    assert 0.0 <= d.I_E <= 1.0 and 0.0 <= d.I_B <= 1.0


@pytest.mark.parametrize("k0,n,expected", [(16, 4, 524288), (10, 8, 49152), (7, 1, 128)])
def test_uniform_count(k0, n, expected):
    assert brute_force_count_uniform(k0, n) == expected


@pytest.mark.parametrize("k0,expected", [(10, 2048), (0, 2), (20, 2097152)])
def test_sector_count(k0, expected):
    assert brute_force_count_sector(k0) == expected


def test_counts_against_big_integer_oracle():
    rng = random.Random(8)
    for _ in range(20):
        k0, n = rng.randint(0, 64), 1 << rng.randint(0, 5)
        assert brute_force_count_uniform(k0, n) == 2**k0 * math.factorial(int(math.log2(n))) * n
        assert brute_force_count_sector(k0) == 2 * 2**k0


def test_known_fraction():
    assert eve_known_fraction(WheelConfig.uniform(32), 4) == 0.875
    assert eve_known_fraction(WheelConfig.uniform(32), 16) == 0.5
    with pytest.raises(ContractViolation):
        eve_known_fraction(WheelConfig.sector(0.1), 1)


def _transcript(wheel, noise, k0_len, bits, seed):
    L = k0_len // wheel.k_M
    cfg = SessionConfig(wheel, noise, L=L, f_retain=1.0, block_size=L)
    k0 = EntropySource.seeded(seed).bits(k0_len)
    res = run_session(cfg, -(-bits // L), k0, EntropySource.seeded(seed + 1),
                      EntropySource.seeded(seed + 2))
    return res, k0, public_masks(res.records, L)


def test_attack_noiseless_finds_key():
    res, k0, masks = _transcript(WheelConfig.sector(0.1), NoiseModel(0.0), 8, 64, 1)
    rep = exhaustive_attack([r.signal for r in res.records], WheelConfig.sector(0.1),
                            NoiseModel(0.0), 8, true_key=k0, kept_masks=masks)
    assert rep.true_rank == 1 and rep.posterior_entropy == 0.0
    assert rep.transcript_bits == 64


def test_attack_empty_transcript_uniform_posterior():
    rep = exhaustive_attack([], WheelConfig.sector(0.1), NoiseModel(0.2), 6)
    assert rep.posterior_entropy == pytest.approx(6.0)
    assert rep.candidates == 64


def test_attack_refuses_large_keys():
    with pytest.raises(AttackRefused):
        exhaustive_attack([], WheelConfig.sector(0.1), NoiseModel(0.2), 21)


def test_attack_on_uniform_wheel():
    wheel = WheelConfig.uniform(4)
    res, k0, masks = _transcript(wheel, NoiseModel(0.0), 8, 2, 5)
    rep = exhaustive_attack([r.signal for r in res.records], wheel, NoiseModel(0.0), 8,
                            true_key=k0, kept_masks=masks)
    assert rep.true_rank == 1


def test_replay_with_key_recovers_everything():
    wheel = WheelConfig.sector(0.1)
    cfg = SessionConfig(wheel, NoiseModel(0.0), L=32, f_retain=1.0, block_size=8)
    k0 = EntropySource.seeded(1).bits(32)
    res = run_session(cfg, 10, k0, EntropySource.seeded(2), EntropySource.seeded(3))
    got = replay_with_key([r.signal for r in res.records], wheel, k0,
                          public_masks(res.records, 8))
    for rec, bits in zip(res.records, got):
        assert np.array_equal(rec.sent_bits, bits)
