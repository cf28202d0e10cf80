"""Face anti-spoofing with multi-scale color LBP features and a deep-forest cascade."""

__version__ = "1.0.0"

from .cascade import CascadeConfig, CascadeModel, train_cascade
from .evaluation import EvalReport, Label, ScoredSample, eer, evaluate, hter
from .features import extract_all_scales, extract_scale, read_cache, write_cache
from .forest import DegenerateDataError, Forest, ForestKind, train_forest
from .imagio import ColorSpace, Image, ImageError, load_image, prepare
from .lbp import LbpConfig, lbp_codes

__all__ = [
    "CascadeConfig", "CascadeModel", "ColorSpace", "DegenerateDataError", "EvalReport", "Forest", "ForestKind",
    "Image", "ImageError", "Label", "LbpConfig", "ScoredSample", "eer", "evaluate", "extract_all_scales",
    "extract_scale", "hter", "lbp_codes", "load_image", "prepare", "read_cache", "train_cascade",
    "train_forest", "write_cache",
]
