"""sim2surg: structure-preserving unpaired image translation at desk scale.

Renders a labeled simulated domain, trains asymmetric content/style
translation networks with an MS-SSIM structure loss, batch-translates the
renders into a labeled synthetic dataset, and evaluates its downstream value
with a segmentation harness.
"""

__version__ = "0.1.0"

from .msssim import (
    CANONICAL_SCALE_WEIGHTS,
    GaussianWindow,
    MsSsimConfig,
    SsimConstants,
    brightness,
    gaussian_window,
    ms_ssim,
    ms_ssim_loss,
    ssim,
    ssim_components,
)

__all__ = [
    "CANONICAL_SCALE_WEIGHTS",
    "GaussianWindow",
    "MsSsimConfig",
    "SsimConstants",
    "brightness",
    "gaussian_window",
    "ms_ssim",
    "ms_ssim_loss",
    "ssim",
    "ssim_components",
    "__version__",
]
