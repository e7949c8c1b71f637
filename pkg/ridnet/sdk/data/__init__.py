from .noise import attenuation_to_hu, hu_to_attenuation, insert_poisson_noise
from .patches import PatchSample, build_dataset, extract_patches, split_by_volume, tile_grid
from .phantom import LesionSpec, generate_phantom
from .synthesis import simulate_dataset, simulate_pair
from .volume import HU_MAX, HU_MIN, Volume, window_denormalize, window_normalize
from .volume_io import export_pgm, list_volume_pairs, read_volume, write_volume

__all__ = [
    "HU_MAX",
    "HU_MIN",
    "LesionSpec",
    "PatchSample",
    "Volume",
    "attenuation_to_hu",
    "build_dataset",
    "export_pgm",
    "extract_patches",
    "generate_phantom",
    "hu_to_attenuation",
    "insert_poisson_noise",
    "list_volume_pairs",
    "read_volume",
    "simulate_dataset",
    "simulate_pair",
    "split_by_volume",
    "tile_grid",
    "window_denormalize",
    "window_normalize",
    "write_volume",
]
