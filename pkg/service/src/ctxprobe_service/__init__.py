"""Masked-LM scoring service implementing the ctxprobe wire protocol."""

__version__ = "0.1.0"

from .app import create_app  # noqa: F401
from .model import ModelSession  # noqa: F401
