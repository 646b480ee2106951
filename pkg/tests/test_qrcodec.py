import random
import zlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from overlaysim.qrcodec import (
    DATA_MODULES,
    DATA_POSITIONS,
    ChecksumMismatch,
    DecodeError,
    FinderNotFound,
    LengthOutOfRange,
    PayloadTooLarge,
    QrMatrix,
    crc32,
    decode,
    encode,
)

GOLDEN = Path(__file__).parent / "golden"
ADDRESS = b"1BvBMSEYstWetqTFn5Au4m4GFg7xJaNVN2"


def crc32_bitwise(data: bytes) -> int:
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def in_corner(r, c):
    return (r < 8 and c < 8) or (r < 8 and c >= 17) or (r >= 17 and c < 8)


def data_walk():
    return [(r, c) for r in range(25) for c in range(25) if not in_corner(r, c)]


def test_crc_vectors():
    assert crc32(b"") == 0
    assert crc32(b"123456789") == 0xCBF43926


@given(st.binary(max_size=200))
def test_crc_matches_references(data):
    assert crc32(data) == zlib.crc32(data) == crc32_bitwise(data)
    assert crc32(data) == crc32(data)


def test_geometry():
    assert DATA_MODULES == 433
    assert list(DATA_POSITIONS) == data_walk()


def test_empty_payload_golden():
    m = encode(b"")
    assert m.to_text() == (GOLDEN / "empty_payload.txt").read_text()
    # the frame checksum covers the length byte, so it is crc32(b"\x00")
    bits = m.data_bits()
    assert not bits[:8].any()
    assert int("".join("1" if b else "0" for b in bits[8:40]), 2) == zlib.crc32(b"\x00")
    assert not bits[40:].any()


def test_address_bit_layout():
    m = encode(ADDRESS)
    head = bytes([34]) + ADDRESS
    frame = head + zlib.crc32(head).to_bytes(4, "big")
    bits = "".join(format(b, "08b") for b in frame)
    walk = data_walk()
    for i, (r, c) in enumerate(walk):
        want = i < len(bits) and bits[i] == "1"
        assert m[r, c] == want, (i, r, c)
    # first 8 data modules spell the length byte 34 = 0b00100010
    assert "".join("1" if m[rc] else "0" for rc in walk[:8]) == "00100010"


def test_payload_too_large():
    encode(b"x" * 48)
    with pytest.raises(PayloadTooLarge):
        encode(b"x" * 49)


@given(st.binary(max_size=48))
def test_roundtrip(data):
    assert decode(encode(data)) == data


@given(st.binary(max_size=48))
def test_canonical(data):
    assert encode(data) == encode(data)
    assert encode(data).to_text() == encode(bytes(data)).to_text()


def test_text_roundtrip():
    m = encode(ADDRESS)
    assert QrMatrix.from_text(m.to_text()) == m
    with pytest.raises(ValueError):
        QrMatrix.from_text("#" * 25)


def test_flip_address_data_region_detected():
    m = encode(ADDRESS)
    for i, (r, c) in enumerate(DATA_POSITIONS):
        with pytest.raises(DecodeError) as info:
            decode(m.flipped(r, c))
        if i >= 8:
            assert info.type is ChecksumMismatch
        else:
            assert info.type in (ChecksumMismatch, LengthOutOfRange)


def test_flip_corner_zones_detected():
    m = encode(ADDRESS)
    for r in range(25):
        for c in range(25):
            if in_corner(r, c):
                with pytest.raises(FinderNotFound):
                    decode(m.flipped(r, c))


def test_length_out_of_range():
    m = encode(b"")
    r, c = DATA_POSITIONS[2]  # set bit 5 of the length byte -> 32, fine
    r0, c0 = DATA_POSITIONS[1]  # bit 6 -> 64 > 48
    with pytest.raises(LengthOutOfRange):
        decode(m.flipped(r0, c0))
    with pytest.raises(ChecksumMismatch):
        decode(m.flipped(r, c))


def test_random_matrix_never_decodes_wrong():
    rng = random.Random(5)
    for _ in range(200):
        arr = np.array([[rng.random() < 0.5 for _ in range(25)] for _ in range(25)])
        with pytest.raises(DecodeError):
            decode(QrMatrix(arr))
