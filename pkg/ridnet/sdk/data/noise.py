"""
Low-dose simulation by Poisson noise in the transmission domain.

HU -> attenuation mu -> expected photon counts -> Poisson draw -> log
transform back to attenuation and HU.
"""

import logging
from typing import Optional

import numpy as np

from ..model.parameters import make_rng
from .volume import HU_MAX, HU_MIN, Volume

logger = logging.getLogger(__name__)

DEFAULT_I0 = 1e5
DEFAULT_MU_WATER = 0.02  # per mm at the effective energy
DEFAULT_PATH_LENGTH = 10.0  # mm
MAX_EXPECTED_COUNT = 1e18  # below the largest mean numpy's Poisson sampler accepts


def hu_to_attenuation(hu, mu_water: float = DEFAULT_MU_WATER) -> np.ndarray:
    """mu = mu_water * (1 + HU / 1000), floored at 0."""
    return np.maximum(mu_water * (1.0 + np.asarray(hu, dtype=np.float64) / 1000.0), 0.0)


def attenuation_to_hu(mu, mu_water: float = DEFAULT_MU_WATER) -> np.ndarray:
    return 1000.0 * (np.asarray(mu, dtype=np.float64) / mu_water - 1.0)


def insert_poisson_noise(
    volume: Volume,
    dose_fraction: float,
    i0: float = DEFAULT_I0,
    seed: int = 0,
    mu_water: float = DEFAULT_MU_WATER,
    path_length: float = DEFAULT_PATH_LENGTH,
    rng: Optional[np.random.Generator] = None,
) -> Volume:
    """
    Simulate a reduced-dose acquisition of `volume`.

    Args:
        volume: Normal-dose volume in HU
        dose_fraction: Tube-current scaling in (0, 1]
        i0: Full-dose incident photon count per ray
        seed: Seed of the Poisson draws (ignored when `rng` is given)
        mu_water: Water attenuation per mm
        path_length: Effective path length in mm

    Returns:
        Noisy Volume; voxels whose counts had to be clamped are counted in
        provenance["flagged_voxels"]
    """
    if not 0.0 < dose_fraction <= 1.0:
        raise ValueError(f"dose_fraction must be in (0, 1], got {dose_fraction}")
    if i0 <= 0:
        raise ValueError(f"I0 must be positive, got {i0}")
    rng = rng if rng is not None else make_rng(seed)
    blank = dose_fraction * i0
    mu = hu_to_attenuation(volume.hu, mu_water)
    expected = blank * np.exp(-mu * path_length)
    bad = ~np.isfinite(expected) | (expected > MAX_EXPECTED_COUNT)
    expected = np.where(np.isfinite(expected), np.minimum(expected, MAX_EXPECTED_COUNT), 1.0)
    counts = rng.poisson(expected).astype(np.float64)
    flagged = bad | (counts < 1)
    counts = np.maximum(counts, 1.0)
    noisy_mu = -np.log(counts / blank) / path_length
    hu = attenuation_to_hu(noisy_mu, mu_water)
    clipped = (hu < HU_MIN) | (hu > HU_MAX)
    flagged_count = int(np.count_nonzero(flagged | clipped))
    if flagged_count:
        logger.debug("low-dose simulation clamped %d voxels", flagged_count)
    provenance = {
        **volume.provenance,
        "dose_fraction": float(dose_fraction),
        "i0": float(i0),
        "noise_seed": int(seed),
        "mu_water": float(mu_water),
        "path_length": float(path_length),
        "flagged_voxels": flagged_count,
    }
    return Volume(hu=np.clip(hu, HU_MIN, HU_MAX), spacing=volume.spacing, provenance=provenance)
