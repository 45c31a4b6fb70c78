"""Walk through a single cycle by hand.

Alice holds a running key and a fresh random bit string.  She picks a basis
for every bit from the key, lands the bit on the wheel and blurs it with
phase noise.  Bob, who knows the key, peels the basis off and decides.
"""

import numpy as np

from noisekey import EntropySource, NoiseModel, WheelConfig
from noisekey.constellation import bases_from_key, decode, encode
from noisekey.noise import fresh_bits, sample_noise

wheel = WheelConfig.sector(0.05)
noise = NoiseModel(0.4)
src = EntropySource.seeded(2024)

key = src.bits(16)
bases = bases_from_key(key, wheel)
bits = fresh_bits(16, src)
phases = encode(bits, bases, sample_noise(noise, src, 16), wheel)

print("running key  ", "".join(map(str, key)))
print("fresh bits   ", "".join(map(str, bits)))
print("sent phases  ", np.round(phases, 2))

decided = decode(phases, bases, wheel)
print("Bob decides  ", "".join(map(str, decided)))
print("agreement    ", int(np.sum(decided == bits)), "of", bits.size)

# Eve does not know which basis was used.  With the two bases 0.05 rad
# apart and noise of 0.4 rad, bit 0 on one basis and bit 1 on the other are
# practically the same point.
wrong = decode(phases, 1 - bases, wheel)
print("wrong basis  ", "".join(map(str, wrong)))
