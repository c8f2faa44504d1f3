"""Results database: one header JSON line, then one JSON record per line.

Metric values are numbers, ``"identical"`` (PSNR of equal images) or
``"n/a"`` (not applicable); a metric that raised is ``{"error": ...}``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional

from .model import WmBenchError

FORMAT = "wmbench-results/1"
IDENTICAL = "identical"
NOT_APPLICABLE = "n/a"

# fields that legitimately differ between identical runs
VOLATILE_HEADER = ("created",)
VOLATILE_RECORD = ("timings",)


class ResultsError(WmBenchError):
    pass


def encode_value(v: Optional[float]) -> Any:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return NOT_APPLICABLE
    if isinstance(v, float) and math.isinf(v):
        if v > 0:
            return IDENTICAL
        raise ResultsError("negative infinite metric value")
    return v


def decode_value(v: Any) -> Optional[float]:
    """JSON metric value -> float (``inf`` for identical) or ``None``."""
    if v == IDENTICAL:
        return math.inf
    if v == NOT_APPLICABLE or v is None or isinstance(v, dict):
        return None
    return float(v)


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


class ResultsWriter:
    """Appends records and flushes after each one so a crash loses nothing
    already written."""

    def __init__(self, path: os.PathLike | str, header: dict):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self._fh.write(dumps({"format": FORMAT, **header}) + "\n")
        self._fh.flush()
        self.count = 0

    def write(self, record: dict) -> None:
        self._fh.write(dumps(record) + "\n")
        self._fh.flush()
        self.count += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class ResultsDatabase:
    header: dict
    records: list[dict] = field(default_factory=list)

    @classmethod
    def load(cls, path: os.PathLike | str) -> "ResultsDatabase":
        lines = iter_lines(path)
        try:
            header = next(lines)
        except StopIteration:
            raise ResultsError(f"{path}: empty results database") from None
        if header.get("format") != FORMAT:
            raise ResultsError(f"{path}: not a results database (format {header.get('format')!r})")
        return cls(header, list(lines))

    def ok_records(self) -> list[dict]:
        return [r for r in self.records if r.get("status") == "ok"]

    def canonical(self) -> str:
        """Serialisation with volatile fields masked and records in cell order."""
        header = {k: v for k, v in self.header.items() if k not in VOLATILE_HEADER}
        records = sorted(self.records, key=lambda r: r.get("cell", 0))
        lines = [dumps(header)]
        lines += [dumps({k: v for k, v in r.items() if k not in VOLATILE_RECORD})
                  for r in records]
        return "\n".join(lines) + "\n"


def iter_lines(path: os.PathLike | str) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except ValueError as exc:
                raise ResultsError(f"{path}:{n}: bad JSON ({exc})") from exc


def write_all(path: os.PathLike | str, header: dict, records: Iterable[dict]) -> None:
    with ResultsWriter(path, header) as w:
        for r in records:
            w.write(r)
