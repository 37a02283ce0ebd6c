"""Adaptive high-pass kernel prediction for video deblurring.

Frames are float64 arrays shaped [C,H,W] with values in [0,1]; clips are
[T,C,H,W]. Flow fields are [2,H,W] (x then y displacement, pixels).
"""

from ._hipass import (
    HipassError,
    Model,
    ModelConfig,
    accumulate_blur,
    bilinear_warp,
    combine,
    conv2d,
    conv3d_temporal,
    count_macs,
    dft2d,
    frequency_response,
    generate_dataset,
    gram_schmidt,
    make_basis,
    psnr,
    random_high_pass,
    rotate90,
    ssim,
    subband_mse,
    train,
    unsharp_mask,
    verify_high_pass,
)

__all__ = [
    "HipassError",
    "Model",
    "ModelConfig",
    "accumulate_blur",
    "bilinear_warp",
    "combine",
    "conv2d",
    "conv3d_temporal",
    "count_macs",
    "dft2d",
    "frequency_response",
    "generate_dataset",
    "gram_schmidt",
    "make_basis",
    "psnr",
    "random_high_pass",
    "rotate90",
    "ssim",
    "subband_mse",
    "train",
    "unsharp_mask",
    "verify_high_pass",
]
