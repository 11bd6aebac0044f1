"""
amp_lab - executable checks for soundness amplification of random-terminating arguments
"""

from .dist_core import FinitePmf  # noqa: F401
from .skewed import BaseModel, DenseFamily, SkewedModel  # noqa: F401


__version__ = "0.1.0"
version_info = tuple(map(int, __version__.split(".")))
