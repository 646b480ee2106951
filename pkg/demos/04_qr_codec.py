"""
The QR-lite code
================

A 25x25 module grid with three corner finders and a CRC-protected frame.
Here we draw one, damage it and watch the decoder refuse.
"""

import numpy as np

from overlaysim.qrcodec import DATA_POSITIONS, DecodeError, decode, encode

addr = b"1BvBMSEYstWetqTFn5Au4m4GFg7xJaNVN2"
m = encode(addr)
print(m.to_text())
print("decoded:", decode(m))

# the data area is walked row by row, skipping the corner zones
grid = np.full((25, 25), ".")
for i, (r, c) in enumerate(DATA_POSITIONS[:40]):
    grid[r, c] = "0123456789"[i % 10]
print("\nfirst 40 data modules in walk order:")
print("\n".join("".join(row) for row in grid[:4]))

# flip every module in turn: nothing decodes to a different payload
errors = {}
for r in range(25):
    for c in range(25):
        try:
            decode(m.flipped(r, c))
            errors["decoded"] = errors.get("decoded", 0) + 1
        except DecodeError as exc:
            errors[type(exc).__name__] = errors.get(type(exc).__name__, 0) + 1
print("\nsingle-module flips:", errors)

# random noise is rejected too
rng = np.random.default_rng(0)
rejected = 0
for _ in range(1000):
    try:
        decode(type(m)(rng.random((25, 25)) < 0.5))
    except DecodeError:
        rejected += 1
print("random grids rejected:", rejected, "/ 1000")

# how much of the grid a payload uses
for size in (0, 8, 34, 48):
    bits = encode(b"x" * size).data_bits()
    used = 8 * (1 + size + 4)
    print(f"{size:>2}-byte payload uses {used:>3} of {bits.size} data modules")
