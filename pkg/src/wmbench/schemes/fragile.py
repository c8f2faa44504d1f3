"""``rs-fragile-lsb``: fragile LSB authentication with self-restoration.

Each 8x8 block carries, in its LSB plane, the 24-bit recovery code of the
block that maps onto it through the partner map (raster LSB positions
0-23) and a keyed hash of its own seven upper bit planes (positions from
24 on). Hash: BLAKE2b-64 keyed with the scheme key over
``pixels & 0xFE || uint32le(block, width, height)``, truncated MSB-first.
"""

from __future__ import annotations

import numpy as np

from ..model import (PayloadKind, ReceiverOutput, SenderOutput, TamperMap,
                     WatermarkPayload, Work, block_view, unblock)
from ..registry import ParamSpec, SchemeDescriptor
from .common import (RECOVERY_BITS, as_key, bits_to_codes, block_index_bytes,
                     codes_to_bits, digest_bits, keyed_digest, partner_map,
                     recovery_codes, restore)

SCHEME_ID = "rs-fragile-lsb"

DESCRIPTOR = SchemeDescriptor(
    id=SCHEME_ID,
    display_name="Fragile LSB authentication + self-restoration",
    params=(ParamSpec("hash_bits", "integer", 40, min=8, max=64 - RECOVERY_BITS),),
    produces_decision_map=True,
    produces_restored=True,
    requires_key=True,
)


def _block_hashes(key: bytes, upper: np.ndarray, work: Work, nbits: int) -> np.ndarray:
    out = np.empty((len(upper), nbits), dtype=np.uint8)
    for b, block in enumerate(upper):
        out[b] = digest_bits(keyed_digest(key, block.tobytes(), block_index_bytes(b, work)), nbits)
    return out


def embed(cover: Work, watermarks=None, key=None, params=None) -> SenderOutput:
    hash_bits = (params or {}).get("hash_bits", 40)
    key = as_key(key)
    blocks = block_view(cover.pixels).reshape(-1, 64)
    partner = partner_map(key, *cover.blocks_shape)

    rec = codes_to_bits(recovery_codes(cover.pixels))
    stored = np.empty_like(rec)
    stored[partner] = rec

    upper = blocks & 0xFE
    hashes = _block_hashes(key, upper, cover, hash_bits)
    lsb = blocks & 1
    lsb[:, :RECOVERY_BITS] = stored
    lsb[:, RECOVERY_BITS:RECOVERY_BITS + hash_bits] = hashes
    marked = cover.replace(unblock((upper | lsb).reshape(-1, 8, 8), cover.shape))
    return SenderOutput(marked, [
        WatermarkPayload.per_block(PayloadKind.AUTHENTICATION, hashes),
        WatermarkPayload.per_block(PayloadKind.RESTORATION, stored),
    ])


def receive(test: Work, watermarks=None, key=None, params=None) -> ReceiverOutput:
    hash_bits = (params or {}).get("hash_bits", 40)
    key = as_key(key)
    blocks = block_view(test.pixels).reshape(-1, 64)
    partner = partner_map(key, *test.blocks_shape)

    lsb = blocks & 1
    found_hash = lsb[:, RECOVERY_BITS:RECOVERY_BITS + hash_bits]
    stored = lsb[:, :RECOVERY_BITS]
    expected = _block_hashes(key, blocks & 0xFE, test, hash_bits)
    tampered = np.any(found_hash != expected, axis=1)

    restored = restore(test, tampered, partner, bits_to_codes(stored))
    decision = TamperMap(tampered.reshape(test.blocks_shape))
    return ReceiverOutput(
        extracted_watermarks=[
            WatermarkPayload.per_block(PayloadKind.AUTHENTICATION, found_hash),
            WatermarkPayload.per_block(PayloadKind.RESTORATION, stored),
        ],
        decision_map=decision,
        global_decision=not tampered.any(),
        restored=restored,
        aux={"tampered_blocks": int(tampered.sum())},
    )
