"""Chained polar codes for the broadcast channel with confidential messages."""

from .kernels import BACKEND
from .source import JointSource, RateTuple, load_source, theorem1_corner, validate
from .transform import IndexRule, ScContext, sc_decode, sc_encode, sc_posterior, transform

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "IndexRule", "JointSource", "RateTuple", "ScContext",
    "load_source", "sc_decode", "sc_encode", "sc_posterior", "theorem1_corner",
    "transform", "validate",
]
