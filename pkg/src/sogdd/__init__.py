"""Corner detection with second-order Gaussian directional derivative filters."""
from .cornermodels import CornerModelParams, psi_closed_form, psi_quadrature
from .detector import Corner, CornerList, DetectorConfig, detect
from .filterbank import FilterBank, build_bank, convolve_bank
from .imagecore import AffineTransform, GrayImage, Homography, load_pgm, save_pgm, warp

__all__ = [
    "AffineTransform",
    "Corner",
    "CornerList",
    "CornerModelParams",
    "DetectorConfig",
    "FilterBank",
    "GrayImage",
    "Homography",
    "build_bank",
    "convolve_bank",
    "detect",
    "load_pgm",
    "psi_closed_form",
    "psi_quadrature",
    "save_pgm",
    "warp",
]
