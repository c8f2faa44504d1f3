"""Media envelope, watermark payloads and the Sender/Receiver/Attack/Metric
data contracts shared by every part of the benchmark."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

BLOCK = 8


class WmBenchError(Exception):
    """Base class for all framework errors."""


class ValidationError(WmBenchError):
    pass


class ContractViolation(WmBenchError):
    """A plugin returned something that breaks its declared contract."""


class MediaKind(str, enum.Enum):
    GRAYSCALE_IMAGE = "grayscale-image"


@dataclass(frozen=True, eq=False)
class Work:
    """An 8-bit grayscale image travelling Sender -> Channel -> Receiver.

    ``pixels`` is a read-only ``(height, width)`` uint8 array.
    """

    pixels: np.ndarray
    origin_id: str = ""
    media_kind: MediaKind = MediaKind.GRAYSCALE_IMAGE
    bit_depth: int = 8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if self.bit_depth != 8:
            raise ValidationError(f"unsupported bit depth {self.bit_depth}")
        if px.ndim != 2:
            raise ValidationError(f"expected a 2-D sample matrix, got shape {px.shape}")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValidationError("samples outside [0, 255]")
            if np.issubdtype(px.dtype, np.floating) and not np.all(px == np.floor(px)):
                raise ValidationError("samples must be integers")
            px = px.astype(np.uint8)
        h, w = px.shape
        if w < 16 or h < 16 or w % BLOCK or h % BLOCK:
            raise ValidationError(
                f"image {w}x{h} must be at least 16x16 with sides multiple of {BLOCK}")
        px = np.array(px, dtype=np.uint8, copy=True)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @property
    def blocks_shape(self) -> tuple[int, int]:
        """(blocks_h, blocks_w)."""
        return self.height // BLOCK, self.width // BLOCK

    def replace(self, pixels: np.ndarray) -> "Work":
        return Work(pixels, origin_id=self.origin_id, media_kind=self.media_kind)

    def same_geometry(self, other: "Work") -> bool:
        return self.shape == other.shape and self.bit_depth == other.bit_depth

    def __eq__(self, other):
        if not isinstance(other, Work):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"Work({self.origin_id!r}, {self.width}x{self.height})"


class PayloadKind(str, enum.Enum):
    AUTHENTICATION = "authentication"
    RESTORATION = "restoration"
    GENERIC = "generic"


@dataclass(frozen=True, eq=False)
class WatermarkPayload:
    kind: PayloadKind
    bits: np.ndarray
    block_map: Optional[Mapping[int, tuple[int, int]]] = None

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        if bits.size == 0:
            raise ValidationError("watermark payload must carry at least one bit")
        if np.any(bits > 1):
            raise ValidationError("watermark bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "kind", PayloadKind(self.kind))
        if self.block_map is not None:
            spans = sorted(self.block_map.values())
            prev_end = 0
            for start, stop in spans:
                if start < prev_end or stop <= start or stop > bits.size:
                    raise ValidationError("block_map ranges must be disjoint and inside bits")
                prev_end = stop

    @classmethod
    def per_block(cls, kind: PayloadKind, block_bits: np.ndarray) -> "WatermarkPayload":
        """Payload from an ``(n_blocks, k)`` bit matrix, one contiguous range per block."""
        block_bits = np.asarray(block_bits, dtype=np.uint8)
        n, k = block_bits.shape
        return cls(kind, block_bits.ravel(), {i: (i * k, (i + 1) * k) for i in range(n)})

    def __eq__(self, other):
        if not isinstance(other, WatermarkPayload):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.bits, other.bits)


@dataclass(frozen=True, eq=False)
class TamperMap:
    """One boolean flag per 8x8 block, shape ``(blocks_h, blocks_w)``."""

    flags: np.ndarray

    def __post_init__(self):
        flags = np.array(self.flags, dtype=bool, copy=True)
        if flags.ndim != 2:
            raise ValidationError("tamper map must be a 2-D block grid")
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @classmethod
    def empty_for(cls, work: Work) -> "TamperMap":
        return cls(np.zeros(work.blocks_shape, dtype=bool))

    @property
    def blocks_h(self) -> int:
        return self.flags.shape[0]

    @property
    def blocks_w(self) -> int:
        return self.flags.shape[1]

    def matches(self, work: Work) -> bool:
        return self.flags.shape == work.blocks_shape

    def count(self) -> int:
        return int(self.flags.sum())

    def __eq__(self, other):
        if not isinstance(other, TamperMap):
            return NotImplemented
        return np.array_equal(self.flags, other.flags)


@dataclass
class SenderOutput:
    watermarked: Work
    embedded_watermarks: list[WatermarkPayload] = field(default_factory=list)
    aux: dict[str, Any] = field(default_factory=dict)


@dataclass
class ReceiverOutput:
    extracted_watermarks: Optional[list[WatermarkPayload]] = None
    decision_map: Optional[TamperMap] = None
    global_decision: Optional[bool] = None
    restored: Optional[Work] = None
    aux: dict[str, Any] = field(default_factory=dict)


@dataclass
class AttackOutput:
    """What an attack hands back to the channel simulator.

    ``ground_truth`` is mandatory for content-changing attacks and forbidden
    for signal-processing ones.
    """

    work: Work
    ground_truth: Optional[TamperMap] = None
    aux: dict[str, Any] = field(default_factory=dict)


def check_sender_output(cover: Work, out: Any) -> SenderOutput:
    if not isinstance(out, SenderOutput):
        raise ContractViolation(f"sender returned {type(out).__name__}, expected SenderOutput")
    if not isinstance(out.watermarked, Work) or not out.watermarked.same_geometry(cover):
        raise ContractViolation("watermarked work does not match cover dimensions")
    return out


def check_receiver_output(test: Work, out: Any) -> ReceiverOutput:
    if not isinstance(out, ReceiverOutput):
        raise ContractViolation(f"receiver returned {type(out).__name__}, expected ReceiverOutput")
    present = [out.extracted_watermarks, out.decision_map, out.global_decision, out.restored]
    if all(v is None for v in present) and not out.aux:
        raise ContractViolation("receiver output is empty")
    if out.restored is not None and not out.restored.same_geometry(test):
        raise ContractViolation("restored work does not match test work dimensions")
    if out.decision_map is not None and not out.decision_map.matches(test):
        raise ContractViolation("decision map does not match the test work's block grid")
    return out


def check_attack_output(inp: Work, out: Any, content_changing: bool) -> AttackOutput:
    if isinstance(out, Work):
        out = AttackOutput(out)
    elif isinstance(out, tuple) and len(out) == 2:
        out = AttackOutput(out[0], out[1])
    if not isinstance(out, AttackOutput) or not isinstance(out.work, Work):
        raise ContractViolation("attack must return a Work or AttackOutput")
    if not out.work.same_geometry(inp):
        raise ContractViolation(
            f"attack changed dimensions {inp.width}x{inp.height} -> "
            f"{out.work.width}x{out.work.height}")
    if content_changing:
        if out.ground_truth is None:
            raise ContractViolation("content-changing attack did not emit a ground-truth map")
        if not out.ground_truth.matches(inp):
            raise ContractViolation("ground-truth map does not match the block grid")
    elif out.ground_truth is not None:
        raise ContractViolation("signal-processing attack must not emit a ground-truth map")
    return out


def as_pixels(x: Work | np.ndarray | Sequence) -> np.ndarray:
    """Sample matrix of a Work or plain array, as float64."""
    if isinstance(x, Work):
        return x.pixels.astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def block_view(pixels: np.ndarray) -> np.ndarray:
    """``(H, W)`` -> ``(n_blocks, 8, 8)`` in row-major block order."""
    h, w = pixels.shape
    return (pixels.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK)
            .swapaxes(1, 2).reshape(-1, BLOCK, BLOCK))


def unblock(blocks: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    return (blocks.reshape(h // BLOCK, w // BLOCK, BLOCK, BLOCK)
            .swapaxes(1, 2).reshape(h, w))
