"""Blind SAR image formation from raw echo data.

The blind chain (``pri`` -> ``pcm`` -> ``azfocus``) works from samples alone;
``sim`` holds every system parameter and serves as ground truth.
"""
from .errors import (
    ConvergenceError,
    CorruptFileError,
    DegenerateBlockError,
    InsufficientBlocksError,
    InsufficientDataError,
    InvalidArgumentError,
    NoPeriodicityError,
    NoReferenceError,
    NoSignalError,
    PcmSarError,
    UnsupportedFormatError,
)

__version__ = "0.1.0"
