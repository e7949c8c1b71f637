"""
Paired normal-dose / low-dose volumes generated from a DataConfig.
"""

from typing import List, Optional, Tuple

from ..models.config import DataConfig
from .noise import insert_poisson_noise
from .phantom import generate_phantom
from .volume import Volume

# noise seeds sit this far above phantom seeds; datasets stay below this many volumes
NOISE_SEED_OFFSET = 100_003


def simulate_pair(config: DataConfig, index: int) -> Tuple[Volume, Volume]:
    """(clean, noisy) volume `index` of a dataset; each is a pure function of (config, index)."""
    clean = generate_phantom(config.seed + index, config.dims, config.protocol, spacing=config.spacing)
    noisy = insert_poisson_noise(
        clean,
        config.dose,
        i0=config.i0,
        seed=config.seed + NOISE_SEED_OFFSET + index,
        mu_water=config.mu_water,
        path_length=config.path_length,
    )
    return clean, noisy


def simulate_dataset(config: DataConfig, count: Optional[int] = None) -> List[Tuple[Volume, Volume]]:
    """`count` (default config.volumes) clean/noisy pairs in index order."""
    return [simulate_pair(config, k) for k in range(config.volumes if count is None else count)]
