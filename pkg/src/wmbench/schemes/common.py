"""Pieces shared by the built-in self-embedding schemes: the keyed block
partner map, 24-bit block recovery codes and block restoration."""

from __future__ import annotations

import hashlib

import numpy as np

from ..model import ValidationError, Work, block_view, unblock

RECOVERY_BITS = 24
MIN_SHIFT = 2
_MAX_TRIES = 10_000


def as_key(key) -> bytes:
    if key is None:
        raise ValidationError("this scheme requires a key")
    if isinstance(key, str):
        if key and not set(key) - {"0", "1"}:
            return int(key, 2).to_bytes((len(key) + 7) // 8, "big")
        return key.encode()
    return bytes(key)


def keyed_digest(key: bytes, *parts: bytes, size: int = 8) -> bytes:
    """BLAKE2b MAC; keys longer than 64 bytes are pre-hashed."""
    if len(key) > 64:
        key = hashlib.blake2b(key).digest()
    h = hashlib.blake2b(key=key, digest_size=size)
    for p in parts:
        h.update(p)
    return h.digest()


def digest_bits(digest: bytes, n: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(digest, dtype=np.uint8))[:n]


def _spread_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random permutation of ``range(n)`` that moves every index by >= 2 when
    n >= 4, a derangement when n is 2 or 3, identity when n == 1."""
    idx = np.arange(n)
    if n == 1:
        return idx
    min_shift = MIN_SHIFT if n >= 4 else 1
    for _ in range(_MAX_TRIES):
        p = rng.permutation(n)
        if np.all(np.abs(p - idx) >= min_shift):
            return p
    return (idx + n // 2) % n


def partner_map(key: bytes, blocks_h: int, blocks_w: int) -> np.ndarray:
    """Keyed bijection over block indices with no fixed points.

    Column ``x`` maps to column ``sx[x]`` and, within it, row ``y`` maps to
    ``sy[x][y]``; both shuffles keep a distance of at least two blocks when
    the grid dimension allows it.
    """
    seed = int.from_bytes(keyed_digest(key, b"partner", np.array(
        [blocks_h, blocks_w], dtype="<u4").tobytes()), "little")
    rng = np.random.default_rng(seed)
    sx = _spread_permutation(blocks_w, rng)
    partner = np.empty((blocks_h, blocks_w), dtype=np.int64)
    for x in range(blocks_w):
        sy = _spread_permutation(blocks_h, rng)
        partner[:, x] = sy * blocks_w + sx[x]
    return partner.ravel()


def recovery_codes(pixels: np.ndarray) -> np.ndarray:
    """``(n_blocks, 4)`` 6-bit codes: floor(mean/4) of each 4x4 quadrant."""
    q = block_view(pixels.astype(np.int64)).reshape(-1, 2, 4, 2, 4).sum(axis=(2, 4))
    # sum/16 then /4, floored
    return (q.reshape(-1, 4) // 64).astype(np.uint8)


def codes_to_bits(codes: np.ndarray) -> np.ndarray:
    """``(n, 4)`` codes -> ``(n, 24)`` bits, MSB first."""
    shifts = np.arange(5, -1, -1)
    return ((codes[:, :, None] >> shifts) & 1).reshape(len(codes), RECOVERY_BITS).astype(np.uint8)


def bits_to_codes(bits: np.ndarray) -> np.ndarray:
    weights = 1 << np.arange(5, -1, -1)
    return (bits.reshape(-1, 4, 6).astype(np.int64) * weights).sum(axis=2).astype(np.uint8)


def restore(test: Work, tampered: np.ndarray, partner: np.ndarray,
            stored_codes: np.ndarray) -> Work:
    """Rebuild flagged blocks from the codes their partners carry.

    ``stored_codes[p]`` are the codes found in block ``p``, which describe the
    block ``b`` with ``partner[b] == p``. When that partner is flagged too the
    block is filled with the mean of its unflagged 4-neighbours (or 128).
    """
    bh, bw = test.blocks_shape
    blocks = block_view(test.pixels).astype(np.int64).copy()
    means = blocks.reshape(len(blocks), -1).mean(axis=1)
    flags = tampered.ravel()
    for b in np.flatnonzero(flags):
        p = partner[b]
        if not flags[p]:
            quads = stored_codes[p].astype(np.int64) * 4 + 2
            blocks[b] = np.kron(quads.reshape(2, 2), np.ones((4, 4), dtype=np.int64))
            continue
        y, x = divmod(int(b), bw)
        neighbours = [ny * bw + nx for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1))
                      if 0 <= ny < bh and 0 <= nx < bw and not flags[ny * bw + nx]]
        fill = int(np.floor(np.mean(means[neighbours]) + 0.5)) if neighbours else 128
        blocks[b] = fill
    return test.replace(unblock(blocks, test.shape).astype(np.uint8))


def block_index_bytes(b: int, work: Work) -> bytes:
    return np.array([b, work.width, work.height], dtype="<u4").tobytes()

