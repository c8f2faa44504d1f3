"""Multimedia database: folder scanning and image ingestion."""

from __future__ import annotations

import fnmatch
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .model import BLOCK, MediaKind, WmBenchError, Work

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".png")


class MediaError(WmBenchError):
    pass


def to_luma(rgb: np.ndarray) -> np.ndarray:
    """Integer luma ``round(0.299 R + 0.587 G + 0.114 B)``, halves rounded up."""
    rgb = np.asarray(rgb, dtype=np.int64)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def center_crop(pixels: np.ndarray) -> np.ndarray:
    """Crop to the largest centred rectangle with sides divisible by 8."""
    h, w = pixels.shape
    nh, nw = h - h % BLOCK, w - w % BLOCK
    top, left = (h - nh) // 2, (w - nw) // 2
    return pixels[top:top + nh, left:left + nw]


def decode_image(path: os.PathLike | str) -> np.ndarray:
    """Decode a PGM/PNG file to an 8-bit grayscale matrix (no cropping)."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("L", "P", "1", "LA"):
                if mode != "L":
                    im = im.convert("RGB") if mode == "P" else im.convert("L")
                arr = np.asarray(im)
            elif mode in ("RGB", "RGBA"):
                arr = np.asarray(im.convert("RGB"))
            elif mode in ("I;16", "I;16B", "I"):
                raise MediaError(f"{path}: only 8-bit images are supported (mode {mode})")
            else:
                raise MediaError(f"{path}: unsupported image mode {mode}")
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise MediaError(f"{path}: cannot decode ({exc})") from exc
    if arr.ndim == 3:
        arr = to_luma(arr)
    return np.ascontiguousarray(arr, dtype=np.uint8)


def load_file(path: os.PathLike | str, origin_id: str | None = None) -> Work:
    pixels = center_crop(decode_image(path))
    return Work(pixels, origin_id=origin_id if origin_id is not None else Path(path).name)


def save_image(work_or_pixels, path: os.PathLike | str) -> None:
    px = work_or_pixels.pixels if isinstance(work_or_pixels, Work) else work_or_pixels
    Image.fromarray(np.asarray(px, dtype=np.uint8)).save(path)


@dataclass(frozen=True)
class CatalogEntry:
    origin_id: str
    path: str
    width: int
    height: int
    media_kind: str = MediaKind.GRAYSCALE_IMAGE.value


@dataclass
class MediaCatalog:
    entries: list[CatalogEntry] = field(default_factory=list)
    root_paths: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._by_id = {e.origin_id: e for e in self.entries}

    def __len__(self):
        return len(self.entries)

    def __contains__(self, origin_id):
        return origin_id in self._by_id

    def ids(self) -> list[str]:
        return [e.origin_id for e in self.entries]

    def entry(self, origin_id: str) -> CatalogEntry:
        try:
            return self._by_id[origin_id]
        except KeyError:
            raise MediaError(f"unknown media id {origin_id!r}") from None

    def select(self, pattern: str) -> list[str]:
        return [i for i in self.ids() if fnmatch.fnmatchcase(i, pattern)]

    def load(self, origin_id: str) -> Work:
        return load_file(self.entry(origin_id).path, origin_id)

    def to_json(self) -> str:
        doc = {"root_paths": self.root_paths, "entries": [asdict(e) for e in self.entries]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def export(self, path: os.PathLike | str) -> None:
        Path(path).write_text(self.to_json())


def scan(root_paths: Sequence[os.PathLike | str] | os.PathLike | str) -> MediaCatalog:
    """Catalog every decodable image below ``root_paths``.

    Ids are POSIX paths relative to their root; entries are ordered by the
    bytes of that id. An id found under several roots keeps its first root.
    """
    if isinstance(root_paths, (str, os.PathLike)):
        root_paths = [root_paths]
    found: dict[str, CatalogEntry] = {}
    for root in map(Path, root_paths):
        if not root.is_dir():
            log.warning("media path %s is not a directory; skipped", root)
            continue
        for path in _walk(root):
            rel = path.relative_to(root).as_posix()
            if rel in found:
                log.warning("media id %r already provided by %s; %s ignored",
                            rel, found[rel].path, path)
                continue
            try:
                px = center_crop(decode_image(path))
                Work(px)
            except WmBenchError as exc:
                log.warning("skipping %s: %s", path, exc)
                continue
            h, w = px.shape
            found[rel] = CatalogEntry(rel, str(path), w, h)
    entries = sorted(found.values(), key=lambda e: e.origin_id.encode())
    return MediaCatalog(entries, [str(p) for p in root_paths])


def _walk(root: Path) -> Iterable[Path]:
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if name.lower().endswith(IMAGE_SUFFIXES):
                yield Path(dirpath) / name
