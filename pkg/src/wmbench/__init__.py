"""Profile-driven benchmarking of image watermarking schemes."""

__version__ = "0.1.0"

from .model import (AttackOutput, ReceiverOutput, SenderOutput, TamperMap,  # noqa: E402
                    WatermarkPayload, Work)
from .registry import Registry, default_registry, discover_plugins  # noqa: E402

__all__ = ["AttackOutput", "ReceiverOutput", "Registry", "SenderOutput", "TamperMap",
           "WatermarkPayload", "Work", "default_registry", "discover_plugins"]
