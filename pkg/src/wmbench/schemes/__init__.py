"""Built-in dual-watermark (authentication + self-restoration) schemes."""

from . import fragile, semifragile

__all__ = ["fragile", "semifragile"]
