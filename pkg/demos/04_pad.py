"""Spend a distilled keystream as a one-time pad, with no reuse.

The pad file keeps a sidecar cursor.  A second message that would need
already-spent bits is refused instead of silently reusing the pad.
"""

import tempfile
from pathlib import Path

from noisekey import EntropySource, KeyExhausted, NoiseModel, SessionConfig, WheelConfig
from noisekey import PadFile, run_session
from noisekey.keyfile import write_key

cfg = SessionConfig(WheelConfig.sector(0.1), NoiseModel(0.2), L=64, f_retain=1.0)
res = run_session(cfg, 2, EntropySource.seeded(1).bits(64), EntropySource.seeded(2),
                  EntropySource.seeded(3))

with tempfile.TemporaryDirectory() as tmp:
    key = Path(tmp) / "shared.nkey"
    write_key(key, res.keystream_a)
    pad = PadFile(key)
    ct = pad.apply(b"meet at nine")
    print("ciphertext:", ct.hex(), "| bits spent:", pad.cursor, "of", res.keystream_a.size)
    try:
        PadFile(key).apply(b"and again at ten")
    except KeyExhausted as exc:
        print("refused:", exc)
