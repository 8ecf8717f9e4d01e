"""Heat-variation statistics of quasi-free gases under two-time measurement."""

__version__ = "0.1.0"

from . import classical, fockttm, formfactor, numerics, oneparticle, stats, vanhove

__all__ = [
    "classical",
    "fockttm",
    "formfactor",
    "numerics",
    "oneparticle",
    "stats",
    "vanhove",
    "__version__",
]
