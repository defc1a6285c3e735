"""Copy-move forgery detection with keypoint matching and evolving circular domains."""

from .config import Config, load_config
from .ecdc import CoverageMask, Detection, detect, run_pipeline
from .errors import CmfdError, DecodeError, InvalidInputError
from .imgcore import GrayImage, load_grayscale

__version__ = "0.1.0"

__all__ = [
    "CmfdError",
    "Config",
    "CoverageMask",
    "DecodeError",
    "Detection",
    "GrayImage",
    "InvalidInputError",
    "detect",
    "load_config",
    "load_grayscale",
    "run_pipeline",
]
