from .metrics import (
    PSNR_CAP_DB,
    GlcmFeatures,
    RadiomicsLoss,
    co_occurrence,
    glcm_features,
    psnr,
    quantize,
    radiomics_loss,
    ssim,
)
from .report import METRIC_COLUMNS, ImageMetrics, MetricReport, evaluate_images, image_metrics
from .sweep import SWEEP_COLUMNS, SweepRow, config_echo, finite_metrics, sweep, with_axis_value, write_sweep_csv

__all__ = [
    "GlcmFeatures",
    "ImageMetrics",
    "METRIC_COLUMNS",
    "MetricReport",
    "PSNR_CAP_DB",
    "RadiomicsLoss",
    "SWEEP_COLUMNS",
    "SweepRow",
    "co_occurrence",
    "config_echo",
    "evaluate_images",
    "finite_metrics",
    "glcm_features",
    "image_metrics",
    "psnr",
    "quantize",
    "radiomics_loss",
    "ssim",
    "sweep",
    "with_axis_value",
    "write_sweep_csv",
]
