"""Single-component baseline JPEG codec (8-bit grayscale).

The encoder writes a complete JFIF interchange stream with the Annex K
luminance quantization table (scaled by quality) and the Annex K default
Huffman tables. Decoding reuses the quantized coefficients, which is
exact because entropy coding is lossless.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .model import Work, block_view, unblock

# Annex K.1 luminance table, natural (row-major) order.
LUMINANCE_QTABLE = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
], dtype=np.int64).reshape(8, 8)


def _zigzag_order() -> np.ndarray:
    order = sorted(((u, v) for u in range(8) for v in range(8)),
                   key=lambda p: (p[0] + p[1], p[0] if (p[0] + p[1]) % 2 else -p[0]))
    return np.array([u * 8 + v for u, v in order])


# ZIGZAG[k] = natural index of the k-th coefficient in zig-zag order
ZIGZAG = _zigzag_order()

DC_BITS = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
DC_VALUES = list(range(12))
AC_BITS = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125]
AC_VALUES = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51,
    0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1,
    0x15, 0x52, 0xd1, 0xf0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18,
    0x19, 0x1a, 0x25, 0x26, 0x27, 0x28, 0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39,
    0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57,
    0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75,
    0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8a, 0x92,
    0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7,
    0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3,
    0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8,
    0xd9, 0xda, 0xe1, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2,
    0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa,
]


def _huffman_codes(bits, values) -> dict[int, tuple[int, int]]:
    """Canonical code assignment (Annex C): symbol -> (code, length)."""
    codes, code, k = {}, 0, 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            codes[values[k]] = (code, length)
            code += 1
            k += 1
        code <<= 1
    return codes


DC_CODES = _huffman_codes(DC_BITS, DC_VALUES)
AC_CODES = _huffman_codes(AC_BITS, AC_VALUES)


def dct_matrix(n: int = 8) -> np.ndarray:
    """Orthonormal DCT-II matrix ``C`` so that ``C @ x @ C.T`` is the 2-D DCT."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.sqrt(2.0 / n) * np.cos((2 * i + 1) * k * np.pi / (2 * n))
    c[0] /= np.sqrt(2.0)
    return c


DCT = dct_matrix()


def fdct(blocks: np.ndarray) -> np.ndarray:
    return DCT @ blocks @ DCT.T


def idct(coeffs: np.ndarray) -> np.ndarray:
    return DCT.T @ coeffs @ DCT


def quality_scale(qf: int) -> int:
    """Percentage applied to the base table: 5000/qf below 50, 200 - 2 qf otherwise."""
    if not 1 <= qf <= 100:
        raise ValueError(f"quality factor {qf} outside [1, 100]")
    return 5000 // qf if qf < 50 else 200 - 2 * qf


def quant_table(qf: int) -> np.ndarray:
    q = (LUMINANCE_QTABLE * quality_scale(qf) + 50) // 100
    return np.clip(q, 1, 255)


@dataclass(frozen=True)
class JpegResult:
    decoded: Work
    encoded_bytes: int
    stream: bytes

    @property
    def bpp(self) -> float:
        return 8.0 * self.encoded_bytes / (self.decoded.width * self.decoded.height)


def quantize(pixels: np.ndarray, qtable: np.ndarray) -> np.ndarray:
    """Level shift, FDCT and quantize; returns ``(n_blocks, 8, 8)`` ints."""
    blocks = block_view(pixels.astype(np.float64) - 128.0)
    coeffs = fdct(blocks) / qtable
    return (np.sign(coeffs) * np.floor(np.abs(coeffs) + 0.5)).astype(np.int64)


def dequantize(quantized: np.ndarray, qtable: np.ndarray, shape) -> np.ndarray:
    blocks = idct(quantized * qtable.astype(np.float64)) + 128.0
    return np.clip(np.floor(unblock(blocks, shape) + 0.5), 0, 255).astype(np.uint8)


def _magnitude(v: int) -> tuple[int, int]:
    """JPEG (category, extra bits) for a signed coefficient value."""
    size = int(abs(v)).bit_length()
    bits = v if v >= 0 else v + (1 << size) - 1
    return size, bits


def _entropy_code(quantized: np.ndarray) -> bytes:
    zz = quantized.reshape(-1, 64)[:, ZIGZAG]
    codes: list[int] = []
    lengths: list[int] = []
    emit_c, emit_l = codes.append, lengths.append
    prev_dc = 0
    for block in zz.tolist():
        diff = block[0] - prev_dc
        prev_dc = block[0]
        size, extra = _magnitude(diff)
        c, n = DC_CODES[size]
        emit_c((c << size) | extra)
        emit_l(n + size)
        run = 0
        last = 63
        while last > 0 and block[last] == 0:
            last -= 1
        for k in range(1, last + 1):
            v = block[k]
            if v == 0:
                run += 1
                continue
            while run > 15:
                c, n = AC_CODES[0xF0]
                emit_c(c)
                emit_l(n)
                run -= 16
            size, extra = _magnitude(v)
            c, n = AC_CODES[(run << 4) | size]
            emit_c((c << size) | extra)
            emit_l(n + size)
            run = 0
        if last < 63:
            c, n = AC_CODES[0x00]
            emit_c(c)
            emit_l(n)
    return _pack_bits(np.array(codes, dtype=np.uint64), np.array(lengths, dtype=np.int64))


def _pack_bits(codes: np.ndarray, lengths: np.ndarray) -> bytes:
    width = int(lengths.max()) if lengths.size else 1
    shifts = lengths[:, None] - 1 - np.arange(width)[None, :]
    valid = shifts >= 0
    bits = (codes[:, None] >> np.where(valid, shifts, 0).astype(np.uint64)) & np.uint64(1)
    stream = bits[valid].astype(np.uint8)
    pad = (-stream.size) % 8
    stream = np.concatenate([stream, np.ones(pad, dtype=np.uint8)])
    data = np.packbits(stream).tobytes()
    return data.replace(b"\xff", b"\xff\x00")


def _segment(marker: int, payload: bytes) -> bytes:
    return struct.pack(">HH", 0xFF00 | marker, len(payload) + 2) + payload


def _dht(table_class: int, table_id: int, bits, values) -> bytes:
    return bytes([(table_class << 4) | table_id]) + bytes(bits) + bytes(values)


def write_stream(quantized: np.ndarray, qtable: np.ndarray, width: int, height: int) -> bytes:
    out = bytearray(b"\xff\xd8")
    out += _segment(0xE0, b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00")
    out += _segment(0xDB, b"\x00" + bytes(qtable.ravel()[ZIGZAG].astype(np.uint8)))
    out += _segment(0xC0, struct.pack(">BHHB", 8, height, width, 1) + b"\x01\x11\x00")
    out += _segment(0xC4, _dht(0, 0, DC_BITS, DC_VALUES) + _dht(1, 0, AC_BITS, AC_VALUES))
    out += _segment(0xDA, b"\x01\x01\x00\x00\x3f\x00")
    out += _entropy_code(quantized)
    out += b"\xff\xd9"
    return bytes(out)


def compress(work: Work, qf: int) -> JpegResult:
    """Encode ``work`` at quality ``qf`` and decode it again."""
    qtable = quant_table(qf)
    quantized = quantize(work.pixels, qtable)
    stream = write_stream(quantized, qtable, work.width, work.height)
    decoded = work.replace(dequantize(quantized, qtable, work.shape))
    return JpegResult(decoded, len(stream), stream)
