"""What an eavesdropper learns, bit by bit and by brute force.

First the information view: Bob's knowledge of each bit against Eve's, as the
sector spacing grows relative to the noise.  Then a full search over an
8-bit starting key, first without noise and then with it.
"""

from noisekey import EntropySource, NoiseModel, SessionConfig, WheelConfig, run_session
from noisekey.adversary import delta_I, exhaustive_attack, public_masks

sigma = NoiseModel(0.4)
print("spacing/sigma    I_B      I_E   delta_I")
for ratio in (0.0, 0.05, 0.25, 1.0, 3.0):
    wheel = WheelConfig.sector(min(ratio * sigma.sigma_phi, 1.5))
    est = delta_I(wheel, sigma, 100_000, EntropySource.seeded(1))
    print(f"{ratio:>13} {est.I_B:8.4f} {est.I_E:8.4f} {est.delta_I:8.4f}")


def attack(noise, spacing):
    wheel = WheelConfig.sector(spacing)
    cfg = SessionConfig(wheel, noise, L=8, f_retain=1.0, block_size=8)
    src = EntropySource.seeded(5)
    k0 = src.spawn(3).bits(8)
    res = run_session(cfg, 8, k0, src.spawn(0), src.spawn(1))
    return exhaustive_attack([r.signal for r in res.records], wheel, noise, 8, true_key=k0,
                             kept_masks=public_masks(res.records, 8))


print("\nnoiseless:", attack(NoiseModel(0.0), 0.1).summary())
print("noisy:    ", attack(sigma, 0.02).summary())
