"""Built-in plugins registered into every default registry."""

from __future__ import annotations

from . import attacks, metrics
from .registry import (AttackDescriptor, MetricDescriptor, ParamSpec, Registry)
from .schemes import fragile, semifragile

ATTACKS = (
    (AttackDescriptor("identity", "No attack"), attacks._identity_plugin),
    (AttackDescriptor("copy-paste", "Copy and paste tamper",
                      (ParamSpec("area_fraction", "real", 0.1, min=0.001, max=0.5),),
                      content_changing=True), attacks._copy_paste_plugin),
    (AttackDescriptor("jpeg", "Baseline JPEG compression",
                      (ParamSpec("qf", "integer", 75, min=1, max=100),)), attacks._jpeg_plugin),
    (AttackDescriptor("additive-gaussian", "Additive Gaussian white noise",
                      (ParamSpec("mean", "real", 0.0, min=-255, max=255),
                       ParamSpec("variance", "real", 1.0, min=0, max=65025))),
     attacks._additive_plugin),
    (AttackDescriptor("multiplicative-gaussian", "Multiplicative Gaussian (speckle) noise",
                      (ParamSpec("mean", "real", 0.0, min=-1, max=1),
                       ParamSpec("variance", "real", 1.0, min=0, max=65025))),
     attacks._multiplicative_plugin),
)

METRICS = (
    (MetricDescriptor("psnr", "PSNR", inputs="full-reference-pair", units="dB"),
     metrics._psnr_plugin),
    (MetricDescriptor("ssim", "SSIM", inputs="full-reference-pair"), metrics._ssim_plugin),
    (MetricDescriptor("fp", "False-positive rate (8x8 blocks)", inputs="decision-vs-truth",
                      units="rate"), metrics._fp_plugin),
    (MetricDescriptor("fn", "False-negative rate (8x8 blocks)", inputs="decision-vs-truth",
                      units="rate"), metrics._fn_plugin),
)


def register_builtins(registry: Registry) -> Registry:
    for mod in (fragile, semifragile):
        registry.register_scheme(mod.DESCRIPTOR, mod.embed, mod.receive)
    for desc, fn in ATTACKS:
        registry.register_attack(desc, fn)
    for desc, fn in METRICS:
        registry.register_metric(desc, fn)
    return registry
