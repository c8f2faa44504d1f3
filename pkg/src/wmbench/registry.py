"""Plugin metadata, the plugin registry and search-path discovery."""

from __future__ import annotations

import enum
import hashlib
import importlib
import importlib.util
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

from .model import (AttackOutput, ContractViolation, ReceiverOutput, SenderOutput,
                    TamperMap, ValidationError, WmBenchError, Work,
                    check_attack_output, check_receiver_output, check_sender_output)

log = logging.getLogger(__name__)

MANIFEST_SUFFIX = ".plugin.json"


class RegistrationError(WmBenchError):
    pass


class NotRegisteredError(WmBenchError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "not registered"


class ManifestError(WmBenchError):
    pass


class ValueType(str, enum.Enum):
    INTEGER = "integer"
    REAL = "real"
    BIT_STRING = "bit-string"
    ENUM = "enum"


@dataclass(frozen=True)
class ParamSpec:
    name: str
    value_type: ValueType
    default: Any
    min: Optional[float] = None
    max: Optional[float] = None
    choices: Optional[tuple] = None
    display_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "value_type", ValueType(self.value_type))
        if self.choices is not None:
            object.__setattr__(self, "choices", tuple(self.choices))
        if self.value_type is ValueType.ENUM and not self.choices:
            raise ValidationError(f"enum parameter {self.name!r} needs choices")
        try:
            self.check(self.default)
        except ValidationError as exc:
            raise ValidationError(f"default of parameter {self.name!r}: {exc}") from None

    def check(self, value: Any) -> Any:
        """Return ``value`` coerced to this parameter's type, or raise."""
        t = self.value_type
        if t is ValueType.INTEGER:
            if isinstance(value, bool) or not isinstance(value, (int, float)) \
                    or int(value) != value:
                raise ValidationError(f"{value!r} is not an integer")
            value = int(value)
        elif t is ValueType.REAL:
            if isinstance(value, bool) or not isinstance(value, (int, float)) \
                    or not math.isfinite(value):
                raise ValidationError(f"{value!r} is not a real number")
            value = float(value)
        elif t is ValueType.BIT_STRING:
            if not isinstance(value, str) or set(value) - {"0", "1"}:
                raise ValidationError(f"{value!r} is not a bit string")
        if self.choices is not None and value not in self.choices:
            raise ValidationError(f"{value!r} not in {list(self.choices)}")
        if self.min is not None and value < self.min:
            raise ValidationError(f"{value!r} outside [{self.min}, {self.max}]")
        if self.max is not None and value > self.max:
            raise ValidationError(f"{value!r} outside [{self.min}, {self.max}]")
        return value

    def to_json(self) -> dict:
        d = {"name": self.name, "type": self.value_type.value, "default": self.default}
        for k in ("min", "max"):
            if getattr(self, k) is not None:
                d[k] = getattr(self, k)
        if self.choices is not None:
            d["choices"] = list(self.choices)
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "ParamSpec":
        return cls(name=d["name"], value_type=d["type"], default=d["default"],
                   min=d.get("min"), max=d.get("max"), choices=d.get("choices"),
                   display_name=d.get("display_name", ""))


class MetricInputs(str, enum.Enum):
    FULL_REFERENCE = "full-reference-pair"
    DECISION = "decision-vs-truth"
    TIMING = "timing"
    BITRATE = "bitrate-curve"


@dataclass(frozen=True)
class _Descriptor:
    id: str
    display_name: str = ""
    params: tuple[ParamSpec, ...] = ()
    version: str = "1"

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValidationError(f"{self.id}: duplicate parameter names")

    def param(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise NotRegisteredError(f"{self.id} has no parameter {name!r}")

    def defaults(self) -> dict[str, Any]:
        return {p.name: p.default for p in self.params}

    def resolve_params(self, given: Mapping[str, Any]) -> dict[str, Any]:
        """Check ``given`` against the ParamSpecs and fill in defaults."""
        unknown = set(given) - {p.name for p in self.params}
        if unknown:
            raise ValidationError(f"{self.id}: unknown parameter(s) {sorted(unknown)}")
        return {p.name: p.check(given[p.name]) if p.name in given else p.default
                for p in self.params}


@dataclass(frozen=True)
class SchemeDescriptor(_Descriptor):
    produces_decision_map: bool = False
    produces_restored: bool = False
    requires_external_watermark: bool = False
    requires_key: bool = False


@dataclass(frozen=True)
class AttackDescriptor(_Descriptor):
    content_changing: bool = False


@dataclass(frozen=True)
class MetricDescriptor(_Descriptor):
    inputs: MetricInputs = MetricInputs.FULL_REFERENCE
    units: str = "unitless"

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "inputs", MetricInputs(self.inputs))


@dataclass(frozen=True)
class SchemeEntry:
    descriptor: SchemeDescriptor
    embed: Callable[..., SenderOutput]
    receive: Callable[..., ReceiverOutput]
    source: str = "builtin"


@dataclass(frozen=True)
class AttackEntry:
    descriptor: AttackDescriptor
    fn: Callable[..., Any]
    source: str = "builtin"


@dataclass(frozen=True)
class MetricEntry:
    descriptor: MetricDescriptor
    fn: Callable[..., Any]
    source: str = "builtin"


@dataclass
class Registry:
    """Id -> plugin lookup for schemes, attacks and metrics.

    Built once, then treated as read-only while a benchmark runs.
    """

    schemes: dict[str, SchemeEntry] = field(default_factory=dict)
    attacks: dict[str, AttackEntry] = field(default_factory=dict)
    metrics: dict[str, MetricEntry] = field(default_factory=dict)

    def _add(self, table: dict, entry, replace: bool):
        key = entry.descriptor.id
        if not key:
            raise RegistrationError("plugin id must be non-empty")
        if key in table:
            if not replace:
                raise RegistrationError(f"id {key!r} is already registered")
            log.warning("plugin %r from %s shadows the one from %s",
                        key, entry.source, table[key].source)
        table[key] = entry
        return entry

    def register_scheme(self, descriptor: SchemeDescriptor, embed_fn, receive_fn,
                        *, source="builtin", replace=False) -> SchemeEntry:
        if not callable(embed_fn) or not callable(receive_fn):
            raise RegistrationError(f"{descriptor.id}: embed/receive must be callable")
        return self._add(self.schemes, SchemeEntry(descriptor, embed_fn, receive_fn, source),
                         replace)

    def register_attack(self, descriptor: AttackDescriptor, attack_fn,
                        *, source="builtin", replace=False) -> AttackEntry:
        if not callable(attack_fn):
            raise RegistrationError(f"{descriptor.id}: attack must be callable")
        return self._add(self.attacks, AttackEntry(descriptor, attack_fn, source), replace)

    def register_metric(self, descriptor: MetricDescriptor, metric_fn,
                        *, source="builtin", replace=False) -> MetricEntry:
        if not callable(metric_fn):
            raise RegistrationError(f"{descriptor.id}: metric must be callable")
        return self._add(self.metrics, MetricEntry(descriptor, metric_fn, source), replace)

    def scheme(self, scheme_id: str) -> SchemeEntry:
        try:
            return self.schemes[scheme_id]
        except KeyError:
            raise NotRegisteredError(f"unknown scheme {scheme_id!r}") from None

    def attack(self, attack_id: str) -> AttackEntry:
        try:
            return self.attacks[attack_id]
        except KeyError:
            raise NotRegisteredError(f"unknown attack {attack_id!r}") from None

    def metric(self, metric_id: str) -> MetricEntry:
        try:
            return self.metrics[metric_id]
        except KeyError:
            raise NotRegisteredError(f"unknown metric {metric_id!r}") from None

    def list(self, kind: str) -> list[str]:
        table = {"schemes": self.schemes, "attacks": self.attacks, "metrics": self.metrics}[kind]
        return sorted(table)

    # contract-checked invocation

    def embed(self, scheme_id: str, cover: Work, watermarks=None, key=None,
              params: Mapping[str, Any] | None = None) -> SenderOutput:
        entry = self.scheme(scheme_id)
        params = entry.descriptor.resolve_params(params or {})
        out = entry.embed(cover, watermarks=watermarks, key=key, params=params)
        return check_sender_output(cover, out)

    def receive(self, scheme_id: str, test: Work, watermarks=None, key=None,
                params: Mapping[str, Any] | None = None) -> ReceiverOutput:
        entry = self.scheme(scheme_id)
        params = entry.descriptor.resolve_params(params or {})
        out = entry.receive(test, watermarks=watermarks, key=key, params=params)
        return check_receiver_output(test, out)

    def apply_attack(self, attack_id: str, work: Work, params: Mapping[str, Any] | None = None,
                     seed: int = 0) -> AttackOutput:
        entry = self.attack(attack_id)
        params = entry.descriptor.resolve_params(params or {})
        out = entry.fn(work, params, seed)
        return check_attack_output(work, out, entry.descriptor.content_changing)

    def evaluate_metric(self, metric_id: str, first, second,
                        params: Mapping[str, Any] | None = None):
        entry = self.metric(metric_id)
        kind = entry.descriptor.inputs
        if kind is MetricInputs.FULL_REFERENCE:
            ok = all(isinstance(x, Work) for x in (first, second))
        elif kind is MetricInputs.DECISION:
            ok = all(isinstance(x, TamperMap) for x in (first, second))
        else:
            ok = True
        if not ok:
            raise ContractViolation(
                f"metric {metric_id!r} expects {kind.value} inputs, got "
                f"{type(first).__name__}/{type(second).__name__}")
        params = entry.descriptor.resolve_params(params or {})
        return entry.fn(first, second, params)

    def describe(self) -> dict[str, dict[str, str]]:
        """Id -> "version@source" for every registered plugin, for result headers."""
        return {kind: {k: f"{e.descriptor.version}@{e.source}" for k, e in sorted(table.items())}
                for kind, table in (("schemes", self.schemes), ("attacks", self.attacks),
                                    ("metrics", self.metrics))}


def default_registry(search_paths: Sequence[os.PathLike | str] = ()) -> Registry:
    """Built-in plugins plus anything found on ``search_paths``."""
    from .builtin import register_builtins

    reg = Registry()
    register_builtins(reg)
    if search_paths:
        discover_plugins(search_paths, reg)
    return reg


def discover_plugins(search_paths: Iterable[os.PathLike | str],
                     registry: Optional[Registry] = None) -> Registry:
    """Register every plugin manifest found under ``search_paths``.

    Later paths shadow earlier ones (and built-ins) on id collision.
    """
    if registry is None:
        return default_registry(list(search_paths))
    for root in search_paths:
        root = Path(root)
        if not root.is_dir() or not os.access(root, os.R_OK | os.X_OK):
            log.warning("plugin path %s is not a readable directory; skipped", root)
            continue
        manifests = sorted((p for p in root.rglob("*.json") if _is_manifest(p)),
                           key=lambda p: p.relative_to(root).as_posix().encode())
        for path in manifests:
            load_manifest(path, registry)
    return registry


def _is_manifest(path: Path) -> bool:
    return path.name == "plugin.json" or path.name.endswith(MANIFEST_SUFFIX)


def load_manifest(path: Path, registry: Registry) -> None:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ManifestError(f"{path}: cannot read manifest ({exc})") from exc
    try:
        kind = doc["kind"]
        params = tuple(ParamSpec.from_json(p) for p in doc.get("params", []))
        caps = dict(doc.get("capabilities", {}))
        common = dict(id=doc["id"], display_name=doc.get("display_name", doc["id"]),
                      params=params, version=str(doc.get("version", "1")))
        source = str(path)
        if kind == "scheme":
            eps = doc["entry_points"]
            desc = SchemeDescriptor(**common, **caps)
            registry.register_scheme(desc, _resolve(path, eps["embed"]),
                                     _resolve(path, eps["receive"]),
                                     source=source, replace=True)
        elif kind == "attack":
            desc = AttackDescriptor(**common, **caps)
            registry.register_attack(desc, _resolve(path, doc["entry_point"]),
                                     source=source, replace=True)
        elif kind == "metric":
            desc = MetricDescriptor(**common, **caps)
            registry.register_metric(desc, _resolve(path, doc["entry_point"]),
                                     source=source, replace=True)
        else:
            raise ManifestError(f"{path}: unknown plugin kind {kind!r}")
    except ManifestError:
        raise
    except (KeyError, TypeError, ValueError, WmBenchError, ImportError, AttributeError) as exc:
        raise ManifestError(f"{path}: malformed manifest ({type(exc).__name__}: {exc})") from exc


def _resolve(manifest: Path, ref: str):
    """``"impl.py:func"`` (relative to the manifest) or ``"package.module:func"``."""
    target, _, attr = ref.partition(":")
    if not attr:
        raise ManifestError(f"{manifest}: entry point {ref!r} must look like 'file.py:name'")
    if target.endswith(".py"):
        file = (manifest.parent / target).resolve()
        name = "wmbench_plugin_" + hashlib.sha1(str(file).encode()).hexdigest()[:12]
        module = sys.modules.get(name)
        if module is None:
            spec = importlib.util.spec_from_file_location(name, file)
            if spec is None or spec.loader is None:
                raise ManifestError(f"{manifest}: cannot load {file}")
            module = importlib.util.module_from_spec(spec)
            sys.modules[name] = module
            spec.loader.exec_module(module)
    else:
        module = importlib.import_module(target)
    return getattr(module, attr)
