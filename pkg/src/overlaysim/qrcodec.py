"""QR-lite: a 25x25 module grid with three finder patterns and a CRC-32 frame.

Layout
------
Three 7x7 finders (dark ring, light ring, dark 3x3 core) sit at the top-left,
top-right and bottom-left corners, each with a one-module light separator,
so each corner zone is 8x8. The remaining 433 modules form the data region,
walked row-major. The frame written into it is::

    length byte L (0..48) | L data bytes | CRC-32 (big-endian)

MSB first, trailing modules light. There is no error correction and no
masking: any damage to the frame is reported, never repaired.
"""

from __future__ import annotations

import numpy as np

SIZE = 25
FINDER = 7
ZONE = FINDER + 1
QUIET_ZONE = 2
MAX_PAYLOAD = 48
CRC_BYTES = 4


class DecodeError(ValueError):
    pass


class FinderNotFound(DecodeError):
    pass


class LengthOutOfRange(DecodeError):
    pass


class ChecksumMismatch(DecodeError):
    pass


class PayloadTooLarge(ValueError):
    pass


# --------------------------------------------------------------------------
# CRC-32 (reflected 0xEDB88320, init and final xor 0xFFFFFFFF)


def _make_table() -> tuple[int, ...]:
    table = []
    for i in range(256):
        c = i
        for _ in range(8):
            c = (c >> 1) ^ 0xEDB88320 if c & 1 else c >> 1
        table.append(c)
    return tuple(table)


_CRC_TABLE = _make_table()


def crc32(data: bytes) -> int:
    crc = 0xFFFFFFFF
    for b in data:
        crc = (crc >> 8) ^ _CRC_TABLE[(crc ^ b) & 0xFF]
    return crc ^ 0xFFFFFFFF


# --------------------------------------------------------------------------
# geometry


def _zone_mask() -> np.ndarray:
    mask = np.zeros((SIZE, SIZE), dtype=bool)
    mask[:ZONE, :ZONE] = True
    mask[:ZONE, SIZE - ZONE:] = True
    mask[SIZE - ZONE:, :ZONE] = True
    return mask


def _finder_template() -> np.ndarray:
    """Expected module values inside the three corner zones (separators light)."""
    pat = np.zeros((FINDER, FINDER), dtype=bool)
    pat[0, :] = pat[-1, :] = pat[:, 0] = pat[:, -1] = True
    pat[2:5, 2:5] = True
    grid = np.zeros((SIZE, SIZE), dtype=bool)
    grid[:FINDER, :FINDER] = pat
    grid[:FINDER, SIZE - FINDER:] = pat
    grid[SIZE - FINDER:, :FINDER] = pat
    return grid


ZONE_MASK = _zone_mask()
ZONE_MASK.flags.writeable = False
FINDER_TEMPLATE = _finder_template()
FINDER_TEMPLATE.flags.writeable = False
DATA_POSITIONS: tuple[tuple[int, int], ...] = tuple(
    (r, c) for r in range(SIZE) for c in range(SIZE) if not ZONE_MASK[r, c]
)
DATA_MODULES = len(DATA_POSITIONS)  # 433
_DATA_ROWS = np.array([p[0] for p in DATA_POSITIONS])
_DATA_COLS = np.array([p[1] for p in DATA_POSITIONS])


class QrMatrix:
    """Immutable 25x25 boolean module grid (True = dark)."""

    __slots__ = ("_modules",)

    def __init__(self, modules):
        arr = np.array(modules, dtype=bool)
        if arr.shape != (SIZE, SIZE):
            raise ValueError(f"expected {SIZE}x{SIZE} modules, got {arr.shape}")
        arr.flags.writeable = False
        self._modules = arr

    @property
    def modules(self) -> np.ndarray:
        return self._modules

    @property
    def size(self) -> int:
        return SIZE

    def __getitem__(self, rc) -> bool:
        return bool(self._modules[rc])

    def __eq__(self, other) -> bool:
        if not isinstance(other, QrMatrix):
            return NotImplemented
        return bool(np.array_equal(self._modules, other._modules))

    def __hash__(self) -> int:
        return hash(np.packbits(self._modules).tobytes())

    def __repr__(self) -> str:
        return f"QrMatrix({np.packbits(self._modules).tobytes().hex()[:16]}...)"

    def flipped(self, row: int, col: int) -> "QrMatrix":
        arr = self._modules.copy()
        arr[row, col] = not arr[row, col]
        return QrMatrix(arr)

    def data_bits(self) -> np.ndarray:
        return self._modules[_DATA_ROWS, _DATA_COLS]

    def to_text(self) -> str:
        """25 lines of ``#`` (dark) / ``.`` (light), newline-terminated."""
        return "".join("".join("#" if v else "." for v in row) + "\n" for row in self._modules)

    @classmethod
    def from_text(cls, text: str) -> "QrMatrix":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if len(lines) != SIZE or any(len(ln) != SIZE for ln in lines):
            raise ValueError("debug text must be 25 lines of 25 characters")
        bad = set("".join(lines)) - {"#", "."}
        if bad:
            raise ValueError(f"unexpected characters {sorted(bad)}")
        return cls([[ch == "#" for ch in ln] for ln in lines])


def frame_bytes(data: bytes) -> bytes:
    head = bytes([len(data)]) + data
    return head + crc32(head).to_bytes(CRC_BYTES, "big")


def encode(data: bytes) -> QrMatrix:
    data = bytes(data)
    if len(data) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"{len(data)} bytes > {MAX_PAYLOAD}")
    bits = np.unpackbits(np.frombuffer(frame_bytes(data), dtype=np.uint8)).astype(bool)
    region = np.zeros(DATA_MODULES, dtype=bool)
    region[: bits.size] = bits
    grid = FINDER_TEMPLATE.copy()
    grid[_DATA_ROWS, _DATA_COLS] = region
    return QrMatrix(grid)


def decode(m: QrMatrix) -> bytes:
    """Recover the payload bytes.

    Raises:
        FinderNotFound: a corner zone (finder or separator) is damaged.
        LengthOutOfRange: the length byte exceeds 48.
        ChecksumMismatch: CRC differs, or modules past the frame are not light.
    """
    mods = m.modules
    if not np.array_equal(mods[ZONE_MASK], FINDER_TEMPLATE[ZONE_MASK]):
        raise FinderNotFound("finder pattern mismatch")
    bits = m.data_bits()
    length = int(np.packbits(bits[:8])[0])
    if length > MAX_PAYLOAD:
        raise LengthOutOfRange(f"length byte {length} > {MAX_PAYLOAD}")
    n_bits = 8 * (1 + length + CRC_BYTES)
    if bits[n_bits:].any():
        raise ChecksumMismatch("non-zero padding after frame")
    raw = np.packbits(bits[:n_bits]).tobytes()
    head, tail = raw[: 1 + length], raw[1 + length:]
    if crc32(head) != int.from_bytes(tail, "big"):
        raise ChecksumMismatch("crc mismatch")
    return head[1:]
