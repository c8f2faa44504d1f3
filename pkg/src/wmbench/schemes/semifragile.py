"""``rs-semifragile-dct``: semi-fragile DCT/QIM authentication with
self-restoration.

Per 8x8 block (orthonormal DCT, zig-zag indexing):

* signature: 8 bits ``|c_i| >= |c_j|`` over fixed low-frequency pairs,
  XOR-ed with a keyed per-block mask so that moved blocks stop verifying;
* every pair is pushed ``delta / 4`` apart in magnitude so that mild
  processing cannot flip it;
* the masked signature goes into zig-zag slots 10-17 and the partner
  block's 24-bit recovery code into slots 18-41, each bit as the parity of
  the nearest multiple of ``delta`` (scalar QIM).

Embedding re-derives the signature from the rounded result and repeats
until the block reads back exactly; saturated blocks have their mean pulled
towards mid-grey on retries so clipping cannot eat the watermark.
"""

from __future__ import annotations

import numpy as np

from ..jpeg import ZIGZAG, fdct, idct
from ..model import (PayloadKind, ReceiverOutput, SenderOutput, TamperMap,
                     WatermarkPayload, Work, block_view, unblock)
from ..registry import ParamSpec, SchemeDescriptor
from .common import (as_key, bits_to_codes, block_index_bytes, codes_to_bits,
                     digest_bits, keyed_digest, partner_map, recovery_codes, restore)

SCHEME_ID = "rs-semifragile-dct"

SIGNATURE_PAIRS = ((1, 2), (3, 4), (5, 6), (7, 8), (2, 3), (4, 5), (6, 7), (1, 8))
SIGNATURE_SLOTS = ZIGZAG[10:18]
RECOVERY_SLOTS = ZIGZAG[18:42]
HAMMING_TOLERANCE = 1
MARGIN_FRACTION = 0.25
MAX_ROUNDS = 12

_PAIR_I = ZIGZAG[[i for i, _ in SIGNATURE_PAIRS]]
_PAIR_J = ZIGZAG[[j for _, j in SIGNATURE_PAIRS]]

DESCRIPTOR = SchemeDescriptor(
    id=SCHEME_ID,
    display_name="Semi-fragile DCT/QIM authentication + self-restoration",
    params=(ParamSpec("delta", "real", 12.0, min=4.0, max=40.0),),
    produces_decision_map=True,
    produces_restored=True,
    requires_key=True,
)


def qim_embed(values: np.ndarray, bits: np.ndarray, delta: float) -> np.ndarray:
    """Move each value to the nearest multiple of ``delta`` whose parity is its bit."""
    return delta * (2 * np.floor((values - bits * delta) / (2 * delta) + 0.5) + bits)


def qim_decode(values: np.ndarray, delta: float) -> np.ndarray:
    return (np.floor(values / delta + 0.5).astype(np.int64) % 2).astype(np.uint8)


def signature(coeffs: np.ndarray) -> np.ndarray:
    """``(n, 64)`` natural-order coefficients -> ``(n, 8)`` signature bits."""
    return (np.abs(coeffs[:, _PAIR_I]) >= np.abs(coeffs[:, _PAIR_J])).astype(np.uint8)


def separate_pairs(coeffs: np.ndarray, bits: np.ndarray, margin: float) -> np.ndarray:
    """Grow the winning magnitude of each signature pair to at least
    ``loser + margin``; signs are kept (zero counts as positive).

    The pairs form a cycle and ``bits`` come from real magnitudes, so the
    win/lose relation is acyclic and eight relaxation passes settle it.
    """
    out = coeffs.copy()
    mag = np.abs(out[:, ZIGZAG[1:9]])
    # pair members as columns of ``mag`` (zig-zag 1..8 -> 0..7)
    pairs = np.array(SIGNATURE_PAIRS) - 1
    rows = np.arange(len(out))
    for _ in range(len(SIGNATURE_PAIRS)):
        for k, (i, j) in enumerate(pairs):
            w = np.where(bits[:, k] == 1, i, j)
            lose = np.where(bits[:, k] == 1, j, i)
            mag[rows, w] = np.maximum(mag[rows, w], mag[rows, lose] + margin)
    sign = np.where(out[:, ZIGZAG[1:9]] < 0, -1.0, 1.0)
    out[:, ZIGZAG[1:9]] = sign * mag
    return out


def block_masks(key: bytes, work: Work) -> np.ndarray:
    n = work.blocks_shape[0] * work.blocks_shape[1]
    return np.array([digest_bits(keyed_digest(key, b"mask", block_index_bytes(b, work)), 8)
                     for b in range(n)], dtype=np.uint8)


def _coeffs(blocks: np.ndarray) -> np.ndarray:
    return fdct(blocks.astype(np.float64)).reshape(len(blocks), 64)


def embed(cover: Work, watermarks=None, key=None, params=None) -> SenderOutput:
    delta = float((params or {}).get("delta", 12.0))
    key = as_key(key)
    partner = partner_map(key, *cover.blocks_shape)
    masks = block_masks(key, cover)

    rec = codes_to_bits(recovery_codes(cover.pixels))
    stored = np.empty_like(rec)
    stored[partner] = rec

    current = block_view(cover.pixels).astype(np.float64).copy()
    auth = np.zeros((len(current), 8), dtype=np.uint8)
    clipped = np.zeros(len(current), dtype=bool)
    pending = np.arange(len(current))
    for rounds in range(MAX_ROUNDS):
        c = _coeffs(current[pending])
        sig = signature(c)
        c = separate_pairs(c, sig, MARGIN_FRACTION * delta)
        auth[pending] = sig ^ masks[pending]
        c[:, SIGNATURE_SLOTS] = qim_embed(c[:, SIGNATURE_SLOTS], auth[pending], delta)
        c[:, RECOVERY_SLOTS] = qim_embed(c[:, RECOVERY_SLOTS], stored[pending], delta)
        if rounds:
            # pull saturated blocks towards mid-grey; DC = 8 * block mean
            shift = np.sign(128.0 - c[:, 0] / 8.0) * 2.0 * rounds * clipped[pending]
            c[:, 0] += 8.0 * shift
        spatial = idct(c.reshape(-1, 8, 8))
        clipped[pending] = np.any((spatial < -0.5) | (spatial > 255.5), axis=(1, 2))
        current[pending] = np.clip(np.floor(spatial + 0.5), 0, 255)

        check = _coeffs(current[pending])
        ok = (np.all(signature(check) ^ masks[pending] == auth[pending], axis=1)
              & np.all(qim_decode(check[:, SIGNATURE_SLOTS], delta) == auth[pending], axis=1)
              & np.all(qim_decode(check[:, RECOVERY_SLOTS], delta) == stored[pending], axis=1))
        pending = pending[~ok]
        if not len(pending):
            break

    marked = cover.replace(unblock(current, cover.shape))
    return SenderOutput(
        marked,
        [WatermarkPayload.per_block(PayloadKind.AUTHENTICATION, auth),
         WatermarkPayload.per_block(PayloadKind.RESTORATION, stored)],
        {"unsettled_blocks": int(len(pending))},
    )


def receive(test: Work, watermarks=None, key=None, params=None) -> ReceiverOutput:
    delta = float((params or {}).get("delta", 12.0))
    key = as_key(key)
    partner = partner_map(key, *test.blocks_shape)
    masks = block_masks(key, test)

    c = _coeffs(block_view(test.pixels))
    derived = signature(c) ^ masks
    found = qim_decode(c[:, SIGNATURE_SLOTS], delta)
    stored = qim_decode(c[:, RECOVERY_SLOTS], delta)
    mismatches = np.sum(derived != found, axis=1)
    tampered = mismatches > HAMMING_TOLERANCE

    restored = restore(test, tampered, partner, bits_to_codes(stored))
    return ReceiverOutput(
        extracted_watermarks=[
            WatermarkPayload.per_block(PayloadKind.AUTHENTICATION, found),
            WatermarkPayload.per_block(PayloadKind.RESTORATION, stored),
        ],
        decision_map=TamperMap(tampered.reshape(test.blocks_shape)),
        global_decision=not tampered.any(),
        restored=restored,
        aux={"tampered_blocks": int(tampered.sum()),
             "signature_bit_errors": int(mismatches.sum())},
    )
