"""
CT volume container and HU windowing.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

from ..models.config import WindowSpec

HU_MIN = -1024.0
HU_MAX = 3071.0


@dataclass
class Volume:
    """HU voxels [slices, rows, cols] with geometry and provenance."""

    hu: np.ndarray
    spacing: Tuple[float, float, float] = (3.0, 0.7, 0.7)
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.hu = np.asarray(self.hu, dtype=np.float32)
        if self.hu.ndim != 3:
            raise ValueError(f"volume must be 3D [slices, rows, cols], got shape {self.hu.shape}")
        if self.hu.size and (self.hu.min() < HU_MIN or self.hu.max() > HU_MAX):
            raise ValueError(
                f"HU values must lie in [{HU_MIN:g}, {HU_MAX:g}], got [{self.hu.min():g}, {self.hu.max():g}]"
            )
        self.spacing = tuple(float(s) for s in self.spacing)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(self.hu.shape)

    def aligned_with(self, other: "Volume") -> bool:
        return self.dims == other.dims and np.allclose(self.spacing, other.spacing)


def window_normalize(values, window: WindowSpec) -> np.ndarray:
    """v = clamp((HU - (level - width/2)) / width, 0, 1)."""
    hu = values.hu if isinstance(values, Volume) else np.asarray(values, dtype=np.float64)
    return np.clip((hu - window.lower) / window.width, 0.0, 1.0)


def window_denormalize(normalized, window: WindowSpec) -> np.ndarray:
    """Inverse of window_normalize on in-window values: HU = v * width + lower."""
    return np.asarray(normalized, dtype=np.float64) * window.width + window.lower
