"""Adaptive guided upsampling: joint denoising, sharpening and upscaling of
low-light images with class-indexed lookup tables."""

from agu.classify import ClassConfig, brightness_classes, edge_classes
from agu.errors import AguError, InvalidConfigError, InvalidInputError, InvalidModelError
from agu.guided import CoeffField, agf_apply, clamp_xi, compute_ab, fgf_apply
from agu.imaging import (
    KernelConfig,
    bilateral_filter,
    bilinear_resize,
    box_mean,
    log_response,
    rgb_to_gray,
    stub_enhancer,
)
from agu.metrics import MetricsReport, noise_estimate, psnr, sharpness, ssim
from agu.model import AguModel
from agu.train import TrainConfig, TrainPair, TrainReport, train_full
from agu.upsample import agu_apply, agu_apply_same_res, upsample_coeffs

__version__ = "0.1.0"
