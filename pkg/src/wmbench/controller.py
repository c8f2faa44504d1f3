"""Benchmark controller: profile validation, grid expansion and execution.

A profile is a JSON document::

    {
      "profile_id": "case-study",
      "seed": 1,
      "images": "*" | ["a.pgm", ...] | {"glob": "sub/*.png"},
      "schemes": [{"id": "rs-fragile-lsb", "params": {"hash_bits": [40]}, "key": null}],
      "pipelines": [{"name": "jpeg",
                     "stages": [{"id": "copy-paste", "params": {"area_fraction": 0.1}},
                                {"id": "jpeg", "params": {"qf": [100, 95, 90]}}]}],
      "metrics": ["psnr", "ssim", "fp", "fn"],
      "artifact_dump": "none" | "failures-only" | "all",
      "output_path": "results.jsonl"
    }

Every parameter value may be a scalar or a list (a grid axis); omitted
parameters take their declared defaults.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import itertools
import json
import logging
import multiprocessing
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .attacks import AttackPipeline, Stage, StageError, check_pipeline, derive_seed, run_pipeline
from .media import MediaCatalog, save_image
from .metrics import timed
from .model import PayloadKind, TamperMap, WatermarkPayload, WmBenchError
from .registry import MetricInputs, Registry
from .resultsdb import ResultsWriter, encode_value

log = logging.getLogger(__name__)

ARTIFACT_DUMPS = ("none", "failures-only", "all")


class ProfileError(WmBenchError):
    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("invalid profile:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class SchemeRun:
    id: str
    param_sets: tuple[dict, ...]
    key: Optional[str] = None
    watermark_bits: int = 64


@dataclass(frozen=True)
class PipelineRun:
    name: str
    variants: tuple[tuple[Stage, ...], ...]


@dataclass
class ValidatedProfile:
    profile_id: str
    seed: int
    images: list[str]
    schemes: list[SchemeRun]
    pipelines: list[PipelineRun]
    metrics: list[str]
    artifact_dump: str = "none"
    output_path: Optional[str] = None
    echo: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Cell:
    index: int
    image: str
    scheme_id: str
    scheme_params: Mapping[str, Any]
    pipeline_name: str
    stages: tuple[Stage, ...]
    seed: int
    key_hex: Optional[str]
    watermark_bits: int = 64

    @property
    def group(self) -> tuple:
        return (self.image, self.scheme_id, _canon(self.scheme_params))

    def describe(self) -> dict:
        return {"image": self.image,
                "scheme": {"id": self.scheme_id, "params": dict(sorted(self.scheme_params.items()))},
                "pipeline": {"name": self.pipeline_name,
                             "stages": [s.to_json() for s in self.stages]}}


def _canon(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_profile(path: os.PathLike | str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ProfileError([f"{path}: cannot read profile ({exc})"]) from exc
    if not isinstance(doc, dict):
        raise ProfileError([f"{path}: profile must be a JSON object"])
    return doc


def _as_grid(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _resolve_grid(descriptor, grid: Mapping[str, Any], where: str, errors: list) -> list[dict]:
    """Range-check a parameter grid and expand it to concrete parameter sets."""
    if not isinstance(grid, Mapping):
        errors.append(f"{where}: params must be an object")
        return []
    axes = []
    names = {p.name for p in descriptor.params}
    for name in sorted(grid):
        if name not in names:
            errors.append(f"{where}.{name}: unknown parameter of {descriptor.id!r}")
            continue
        spec = descriptor.param(name)
        values = _as_grid(grid[name])
        if not values:
            errors.append(f"{where}.{name}: empty value list")
            continue
        checked = []
        for i, v in enumerate(values):
            try:
                checked.append(spec.check(v))
            except WmBenchError as exc:
                errors.append(f"{where}.{name}[{i}]: {exc}")
        axes.append((name, checked))
    defaults = descriptor.defaults()
    combos = []
    for values in itertools.product(*(vals for _, vals in axes)):
        params = dict(defaults)
        params.update(zip((n for n, _ in axes), values))
        combos.append(params)
    return combos


def validate(profile: Mapping, registry: Registry, catalog: MediaCatalog) -> ValidatedProfile:
    """Resolve ids, range-check grids and fill defaults.

    Collects every problem before raising :class:`ProfileError`.
    """
    errors: list[str] = []
    pid = profile.get("profile_id")
    if not isinstance(pid, str) or not pid:
        errors.append("profile_id: must be a non-empty string")
        pid = ""
    seed = profile.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        errors.append("seed: must be an integer in [0, 2^64)")
        seed = 0

    images = _resolve_images(profile.get("images", "*"), catalog, errors)

    schemes = []
    scheme_docs = profile.get("schemes") or []
    if not scheme_docs:
        errors.append("schemes: at least one scheme is required")
    for i, doc in enumerate(scheme_docs):
        where = f"schemes[{i}]"
        if not isinstance(doc, Mapping) or "id" not in doc:
            errors.append(f"{where}: needs an 'id'")
            continue
        try:
            entry = registry.scheme(doc["id"])
        except WmBenchError as exc:
            errors.append(f"{where}.id: {exc}")
            continue
        combos = _resolve_grid(entry.descriptor, doc.get("params", {}), f"{where}.params", errors)
        key = doc.get("key")
        if key is not None:
            try:
                bytes.fromhex(key)
            except (TypeError, ValueError):
                errors.append(f"{where}.key: must be a hex string")
        bits = doc.get("watermark_bits", 64)
        if isinstance(bits, bool) or not isinstance(bits, int) or bits < 1:
            errors.append(f"{where}.watermark_bits: must be a positive integer")
        schemes.append(SchemeRun(doc["id"], tuple(combos), key, bits))

    pipelines = []
    pipe_docs = profile.get("pipelines")
    if pipe_docs is None:
        pipe_docs = [{"name": "no-attack", "stages": [{"id": "identity"}]}]
    for i, doc in enumerate(pipe_docs):
        where = f"pipelines[{i}]"
        stages = doc.get("stages") if isinstance(doc, Mapping) else None
        if not stages:
            errors.append(f"{where}: pipeline has no stages")
            continue
        per_stage = []
        for j, st in enumerate(stages):
            swhere = f"{where}.stages[{j}]"
            if not isinstance(st, Mapping) or "id" not in st:
                errors.append(f"{swhere}: needs an 'id'")
                continue
            try:
                entry = registry.attack(st["id"])
            except WmBenchError as exc:
                errors.append(f"{swhere}.id: {exc}")
                continue
            combos = _resolve_grid(entry.descriptor, st.get("params", {}), f"{swhere}.params",
                                   errors)
            per_stage.append([Stage(st["id"], c) for c in combos])
        if len(per_stage) != len(stages):
            continue
        variants = tuple(itertools.product(*per_stage))
        if variants:
            for problem in check_pipeline(variants[0], registry):
                errors.append(f"{where}: {problem}")
        name = doc.get("name") or "+".join(s["id"] for s in stages)
        pipelines.append(PipelineRun(name, variants))

    metrics = list(profile.get("metrics") or [])
    if not metrics:
        errors.append("metrics: at least one metric is required")
    for i, m in enumerate(metrics):
        if m not in registry.metrics:
            errors.append(f"metrics[{i}]: unknown metric {m!r}")

    dump = profile.get("artifact_dump", "none")
    if dump not in ARTIFACT_DUMPS:
        errors.append(f"artifact_dump: {dump!r} not in {list(ARTIFACT_DUMPS)}")

    if errors:
        raise ProfileError(errors)
    echo = json.loads(_canon(dict(profile)))
    return ValidatedProfile(pid, seed, images, schemes, pipelines, metrics, dump,
                            profile.get("output_path"), echo)


def _resolve_images(spec, catalog: MediaCatalog, errors: list) -> list[str]:
    if spec == "*" or spec is None:
        ids = catalog.ids()
    elif isinstance(spec, str):
        ids = catalog.select(spec)
    elif isinstance(spec, Mapping) and "glob" in spec:
        ids = catalog.select(spec["glob"])
    elif isinstance(spec, list):
        ids = []
        for i, name in enumerate(spec):
            if name in catalog:
                ids.append(name)
            else:
                errors.append(f"images[{i}]: unknown media id {name!r}")
    else:
        errors.append("images: must be '*', a glob, {'glob': ...} or a list of ids")
        return []
    if not ids and not errors:
        errors.append("images: selection matches no catalog entry")
    return ids


def expand(vp: ValidatedProfile) -> list[Cell]:
    """Cartesian product images x schemes x scheme params x pipeline variants."""
    cells = []
    for image in vp.images:
        for scheme in vp.schemes:
            for params in scheme.param_sets:
                key_hex = scheme.key or _derived_key(vp.seed, image, scheme.id, params)
                for pipe in vp.pipelines:
                    for stages in pipe.variants:
                        desc = {"image": image, "scheme": scheme.id, "params": params,
                                "pipeline": [s.to_json() for s in stages]}
                        cells.append(Cell(len(cells), image, scheme.id, params, pipe.name,
                                          stages, derive_seed(vp.seed, _canon(desc)), key_hex,
                                          scheme.watermark_bits))
    return cells


def _derived_key(seed: int, image: str, scheme_id: str, params: Mapping) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(_canon(["key", seed, image, scheme_id, params]).encode())
    return h.hexdigest()


# execution

@dataclass
class _Context:
    registry: Registry
    catalog: MediaCatalog
    metrics: list[str]
    artifact_dump: str
    artifact_dir: Optional[Path]
    profile_id: str


_CTX: Optional[_Context] = None


def _artifact(ctx: _Context, cell: Cell, name: str, work) -> str:
    d = ctx.artifact_dir / f"cell-{cell.index:06d}"
    d.mkdir(parents=True, exist_ok=True)
    save_image(work, d / f"{name}.png")
    return f"{d.name}/{name}.png"


def _metric(ctx, metric_id, first, second):
    try:
        return encode_value(ctx.registry.evaluate_metric(metric_id, first, second))
    except Exception as exc:  # a broken metric must not sink the cell
        return {"error": f"{type(exc).__name__}: {exc}"}


def run_group(cells: Sequence[Cell]) -> list[dict]:
    """Embed once for an (image, scheme, params) group, then run its cells."""
    ctx = _CTX
    first = cells[0]
    entry = ctx.registry.scheme(first.scheme_id)
    desc = entry.descriptor
    key = bytes.fromhex(first.key_hex) if desc.requires_key else None
    metric_kinds = {m: ctx.registry.metric(m).descriptor.inputs for m in ctx.metrics}
    full_ref = [m for m in ctx.metrics if metric_kinds[m] is MetricInputs.FULL_REFERENCE]

    def base(cell):
        return {"profile_id": ctx.profile_id, "cell": cell.index, "cell_seed": cell.seed,
                **cell.describe(), "status": "ok", "error": None,
                "timings": {"embed_s": None, "receive_s": None}, "bpp": None,
                "metrics": {}, "aux": {}, "artifacts": {}}

    def failed(rec, stage, exc):
        rec["status"] = "cell-error"
        rec["error"] = {"stage": stage, "message": f"{type(exc).__name__}: {exc}"}
        log.debug("cell %s failed at %s\n%s", rec["cell"], stage, traceback.format_exc())
        return rec

    watermarks = None
    if desc.requires_external_watermark:
        rng = np.random.default_rng(derive_seed(first.key_hex, "watermark"))
        watermarks = [WatermarkPayload(PayloadKind.GENERIC,
                                       rng.integers(0, 2, first.watermark_bits))]
    try:
        cover = ctx.catalog.load(first.image)
    except Exception as exc:
        return [failed(base(c), "load", exc) for c in cells]
    try:
        sent, embed_s = timed(ctx.registry.embed, first.scheme_id, cover, watermarks, key,
                              first.scheme_params)
    except Exception as exc:
        return [failed(base(c), "embed", exc) for c in cells]
    marked = sent.watermarked
    if watermarks is None and desc.requires_external_watermark:
        watermarks = sent.embedded_watermarks
    imperceptibility = {f"watermarked.{m}": _metric(ctx, m, cover, marked) for m in full_ref}

    records = []
    for cell in cells:
        rec = base(cell)
        rec["timings"]["embed_s"] = embed_s
        rec["aux"]["sender"] = _jsonable(sent.aux)
        attacked = restored = None
        stage = "attack"
        try:
            channel = run_pipeline(marked, AttackPipeline(cell.stages, cell.seed), ctx.registry)
            attacked = channel.work
            rec["bpp"] = channel.bpp
            rec["aux"]["channel"] = _jsonable(channel.stage_aux)
            stage = "receive"
            received, receive_s = timed(ctx.registry.receive, cell.scheme_id, attacked,
                                        watermarks if desc.requires_external_watermark else None,
                                        key, cell.scheme_params)
            rec["timings"]["receive_s"] = receive_s
            rec["aux"]["receiver"] = _jsonable(received.aux)
            restored = received.restored
            stage = "metrics"
            truth = channel.ground_truth or TamperMap.empty_for(attacked)
            values = dict(imperceptibility)
            for m in ctx.metrics:
                kind = metric_kinds[m]
                if kind is MetricInputs.FULL_REFERENCE:
                    values[f"attacked.{m}"] = _metric(ctx, m, cover, attacked)
                    values[f"restored.{m}"] = (_metric(ctx, m, cover, restored)
                                               if restored is not None else encode_value(None))
                elif kind is MetricInputs.DECISION:
                    values[m] = (_metric(ctx, m, truth, received.decision_map)
                                 if received.decision_map is not None else encode_value(None))
                elif kind is MetricInputs.TIMING:
                    values[m] = _metric(ctx, m, embed_s, receive_s)
                else:
                    values[m] = _metric(ctx, m, channel.bpp, None)
            rec["metrics"] = values
        except Exception as exc:
            if isinstance(exc, StageError):
                stage = f"attack[{exc.index}]"
            failed(rec, stage, exc)
        if ctx.artifact_dump == "all" or (ctx.artifact_dump == "failures-only"
                                          and rec["status"] != "ok"):
            try:
                rec["artifacts"]["watermarked"] = _artifact(ctx, cell, "watermarked", marked)
                if attacked is not None:
                    rec["artifacts"]["attacked"] = _artifact(ctx, cell, "attacked", attacked)
                if restored is not None:
                    rec["artifacts"]["restored"] = _artifact(ctx, cell, "restored", restored)
            except OSError as exc:
                log.warning("cannot dump artifacts of cell %d: %s", cell.index, exc)
        records.append(rec)
    return records


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return encode_value(float(obj))
    if isinstance(obj, float):
        return encode_value(obj)
    if isinstance(obj, (str, int, bool)) or obj is None:
        return obj
    return repr(obj)


def _groups(cells: Sequence[Cell]) -> list[list[Cell]]:
    return [list(g) for _, g in itertools.groupby(cells, key=lambda c: c.group)]


def execute(vp: ValidatedProfile, cells: Sequence[Cell], registry: Registry,
            catalog: MediaCatalog, out_path: os.PathLike | str, workers: int = 1) -> Path:
    """Run every cell and write the results database to ``out_path``.

    Records are written in cell order whatever the worker count.
    """
    global _CTX
    out_path = Path(out_path)
    artifact_dir = out_path.with_name(out_path.name + ".artifacts")
    _CTX = _Context(registry, catalog, list(vp.metrics), vp.artifact_dump, artifact_dir,
                    vp.profile_id)
    header = {
        "profile": vp.echo,
        "profile_id": vp.profile_id,
        "registry": registry.describe(),
        "media": {i: _file_digest(catalog.entry(i).path) for i in vp.images},
        "wmbench": __version__,
        "cells": len(cells),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    groups = _groups(cells)
    try:
        with ResultsWriter(out_path, header) as writer:
            if workers <= 1 or len(groups) == 1:
                results = map(run_group, groups)
                for recs in results:
                    for r in recs:
                        writer.write(r)
            else:
                ctx = multiprocessing.get_context("fork")
                with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                    for recs in pool.map(run_group, groups):
                        for r in recs:
                            writer.write(r)
    finally:
        _CTX = None
    return out_path


def _file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_profile(profile: Mapping | os.PathLike | str, registry: Registry, catalog: MediaCatalog,
                out_path: os.PathLike | str | None = None, workers: int = 1) -> Path:
    doc = profile if isinstance(profile, Mapping) else load_profile(profile)
    vp = validate(doc, registry, catalog)
    out = out_path or vp.output_path
    if out is None:
        raise ProfileError(["output_path: no output file given"])
    return execute(vp, expand(vp), registry, catalog, out, workers)


def case_study_profile(profile_id: str = "case-study", seed: int = 2015,
                       images: Any = "*") -> dict:
    """Both built-in schemes under a 10% copy-paste tamper combined with the
    JPEG, additive-noise and multiplicative-noise grids."""
    tamper = {"id": "copy-paste", "params": {"area_fraction": 0.1}}
    return {
        "profile_id": profile_id,
        "seed": seed,
        "images": images,
        "schemes": [{"id": "rs-fragile-lsb"},
                    {"id": "rs-semifragile-dct", "params": {"delta": 12.0}}],
        "pipelines": [
            {"name": "tamper+jpeg",
             "stages": [tamper, {"id": "jpeg", "params": {"qf": list(range(100, 49, -5))}}]},
            {"name": "tamper+additive",
             "stages": [tamper, {"id": "additive-gaussian",
                                 "params": {"mean": 0.0, "variance": list(range(1, 40, 2))}}]},
            {"name": "tamper+multiplicative",
             "stages": [tamper, {"id": "multiplicative-gaussian",
                                 "params": {"mean": 0.0,
                                            "variance": list(range(10, 241, 10))}}]},
        ],
        "metrics": ["psnr", "ssim", "fp", "fn"],
        "artifact_dump": "none",
    }
