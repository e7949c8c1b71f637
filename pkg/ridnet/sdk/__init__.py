# -*- coding: utf-8 -*-
"""
RIDnet SDK - graph-convolutional low-dose CT denoising

Core Architecture:
- autodiff/: define-by-run reverse-mode differentiation on numpy arrays
- graph/: in-plane and inter-slice k-NN graphs, edge-conditioned convolution
- model/: RIDnet blocks, the generator and its parameter sets
- training/: critic, perceptual extractor, losses, Adam and the training loop
- data/: phantoms, low-dose simulation, volume files and patch datasets
- evaluation/: PSNR, SSIM, texture statistics and hyperparameter sweeps
- audit/: gradient audits of operations, blocks and the full model
"""

from .errors import CheckpointError, GraphConstructionError, NumericalFailure, RidnetError, ShapeError, VolumeFormatError

__all__ = [
    "CheckpointError",
    "GraphConstructionError",
    "NumericalFailure",
    "RidnetError",
    "ShapeError",
    "VolumeFormatError",
]
