"""Attacks library and channel simulator."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from . import jpeg
from .model import BLOCK, AttackOutput, TamperMap, ValidationError, WmBenchError, Work, block_view


class AttackError(WmBenchError):
    pass


def derive_seed(*parts: Any) -> int:
    """Stable 64-bit seed from a tuple of ints/strings."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def changed_blocks(before: Work, after: Work) -> TamperMap:
    """Flag every 8x8 block with at least one differing sample."""
    diff = block_view(before.pixels != after.pixels).any(axis=(1, 2))
    return TamperMap(diff.reshape(before.blocks_shape))


def copy_paste_side(area_fraction: float, width: int, height: int) -> int:
    side = BLOCK * math.floor(math.sqrt(area_fraction * width * height) / BLOCK + 0.5)
    return max(side, BLOCK)


def copy_paste(work: Work, area_fraction: float, seed: int) -> AttackOutput:
    """Paste a block-aligned square region onto a disjoint block-aligned spot."""
    if not 0 < area_fraction < 1:
        raise AttackError(f"area_fraction {area_fraction} outside (0, 1)")
    if area_fraction * work.width * work.height < 64:
        raise AttackError("tampered area smaller than one 8x8 block")
    s = copy_paste_side(area_fraction, work.width, work.height)
    if s > work.width or s > work.height:
        raise AttackError(f"{s}x{s} region does not fit a {work.width}x{work.height} image")
    rng = np.random.default_rng(seed)
    xs = np.arange(0, work.width - s + 1, BLOCK)
    ys = np.arange(0, work.height - s + 1, BLOCK)
    sx, sy = int(rng.choice(xs)), int(rng.choice(ys))
    gx, gy = np.meshgrid(xs, ys)
    disjoint = (np.abs(gx - sx) >= s) | (np.abs(gy - sy) >= s)
    if not disjoint.any():
        raise AttackError(f"no destination disjoint from the {s}x{s} source region")
    pick = int(rng.integers(disjoint.sum()))
    dx, dy = int(gx[disjoint][pick]), int(gy[disjoint][pick])
    out = work.pixels.copy()
    out[dy:dy + s, dx:dx + s] = work.pixels[sy:sy + s, sx:sx + s]
    attacked = work.replace(out)
    return AttackOutput(attacked, changed_blocks(work, attacked),
                        {"source": [sx, sy], "destination": [dx, dy], "side": s})


def jpeg_compress(work: Work, qf: int) -> AttackOutput:
    res = jpeg.compress(work, qf)
    return AttackOutput(res.decoded, None, {"bpp": res.bpp, "encoded_bytes": res.encoded_bytes})


def additive_gaussian(work: Work, mean: float, variance: float, seed: int) -> Work:
    if variance < 0:
        raise AttackError("variance must be non-negative")
    rng = np.random.default_rng(seed)
    noise = rng.normal(mean, math.sqrt(variance), work.shape)
    return work.replace(np.clip(np.rint(work.pixels + noise), 0, 255))


def multiplicative_gaussian(work: Work, mean: float, variance: float, seed: int) -> Work:
    """Speckle ``x (1 + n)``; ``variance`` is on the 0-255 scale."""
    if variance < 0:
        raise AttackError("variance must be non-negative")
    rng = np.random.default_rng(seed)
    noise = rng.normal(mean, math.sqrt(variance) / 255.0, work.shape)
    return work.replace(np.clip(np.rint(work.pixels * (1.0 + noise)), 0, 255))


# plugin-contract adapters: (work, params, seed) -> AttackOutput

def _copy_paste_plugin(work, params, seed):
    return copy_paste(work, params["area_fraction"], seed)


def _jpeg_plugin(work, params, seed):
    return jpeg_compress(work, params["qf"])


def _additive_plugin(work, params, seed):
    return AttackOutput(additive_gaussian(work, params["mean"], params["variance"], seed))


def _multiplicative_plugin(work, params, seed):
    return AttackOutput(multiplicative_gaussian(work, params["mean"], params["variance"], seed))


def _identity_plugin(work, params, seed):
    return AttackOutput(work)


@dataclass(frozen=True)
class Stage:
    attack_id: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"id": self.attack_id, "params": dict(sorted(self.params.items()))}


@dataclass(frozen=True)
class AttackPipeline:
    stages: tuple[Stage, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ValidationError("an attack pipeline needs at least one stage")


@dataclass
class ChannelResult:
    work: Work
    ground_truth: Optional[TamperMap]
    stage_aux: list[dict]

    @property
    def bpp(self) -> Optional[float]:
        values = [a["bpp"] for a in self.stage_aux if "bpp" in a]
        return values[-1] if values else None


class StageError(WmBenchError):
    def __init__(self, index: int, attack_id: str, cause: BaseException):
        super().__init__(f"stage {index} ({attack_id}): {type(cause).__name__}: {cause}")
        self.index = index
        self.attack_id = attack_id


def check_pipeline(pipeline: AttackPipeline | Sequence[Stage], registry) -> list[str]:
    """Problems with a pipeline's stage ids, params and content-changing count."""
    stages = pipeline.stages if isinstance(pipeline, AttackPipeline) else tuple(pipeline)
    problems = []
    if not stages:
        problems.append("pipeline has no stages")
    changing = 0
    for i, st in enumerate(stages):
        try:
            entry = registry.attack(st.attack_id)
        except WmBenchError as exc:
            problems.append(f"stage {i}: {exc}")
            continue
        changing += entry.descriptor.content_changing
        try:
            entry.descriptor.resolve_params(st.params)
        except WmBenchError as exc:
            problems.append(f"stage {i}: {exc}")
    if changing > 1:
        problems.append(f"{changing} content-changing stages (at most one allowed)")
    return problems


def run_pipeline(work: Work, pipeline: AttackPipeline, registry) -> ChannelResult:
    problems = check_pipeline(pipeline, registry)
    if problems:
        raise ValidationError("; ".join(problems))
    truth = None
    aux = []
    for i, st in enumerate(pipeline.stages):
        try:
            out = registry.apply_attack(st.attack_id, work, st.params,
                                        derive_seed(pipeline.seed, i))
        except Exception as exc:
            raise StageError(i, st.attack_id, exc) from exc
        work = out.work
        if out.ground_truth is not None:
            truth = out.ground_truth
        aux.append(dict(out.aux))
    return ChannelResult(work, truth, aux)
