"""
Training samples: 3-slice low-dose stacks paired with the normal-dose
center patch.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ShapeError
from ..model.parameters import make_rng
from ..models.config import WindowSpec
from .volume import Volume, window_normalize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PatchSample:
    """low_stack [3,p,p] and target [p,p], both window-normalized to [0, 1]."""

    low_stack: np.ndarray
    target: np.ndarray
    volume: int
    slice_index: int
    row: int
    col: int

    @property
    def source(self) -> Tuple[int, int, int, int]:
        return (self.volume, self.slice_index, self.row, self.col)


def tile_grid(extent: int, patch: int, offset: int = 0) -> List[int]:
    """Origins of non-overlapping tiles that fit entirely inside `extent`."""
    return list(range(offset, extent - patch + 1, patch))


def extract_patches(
    low: Volume,
    normal: Volume,
    window: WindowSpec,
    patch: int = 64,
    s: int = 1,
    random_offset: bool = False,
    seed: int = 0,
    volume_id: int = 0,
) -> List[PatchSample]:
    """
    Non-overlapping patch x patch tiles of every interior slice.

    Slice i yields low stacks (i-s .. i+s) and the normal-dose target at i;
    slices without a full window are skipped. With `random_offset` each
    slice's tile grid is shifted by a seeded offset in [0, patch).
    """
    if not low.aligned_with(normal):
        raise ShapeError(f"low-dose {low.dims} and normal-dose {normal.dims} volumes are not aligned")
    depth, rows, cols = low.dims
    if depth < 2 * s + 1:
        raise ShapeError(f"volume needs at least {2 * s + 1} slices, has {depth}")
    if patch > rows or patch > cols:
        raise ShapeError(f"patch {patch} does not fit slices of {rows}x{cols}")
    low_n = window_normalize(low, window).astype(np.float32)
    normal_n = window_normalize(normal, window).astype(np.float32)
    rng = make_rng(seed) if random_offset else None
    samples: List[PatchSample] = []
    for i in range(s, depth - s):
        oy, ox = (int(rng.integers(0, patch)), int(rng.integers(0, patch))) if rng is not None else (0, 0)
        for r in tile_grid(rows, patch, oy):
            for c in tile_grid(cols, patch, ox):
                samples.append(
                    PatchSample(
                        low_stack=low_n[i - s : i + s + 1, r : r + patch, c : c + patch],
                        target=normal_n[i, r : r + patch, c : c + patch],
                        volume=volume_id,
                        slice_index=i,
                        row=r,
                        col=c,
                    )
                )
    logger.debug("volume %d: %d patches of %dx%d", volume_id, len(samples), patch, patch)
    return samples


def build_dataset(
    pairs: Iterable[Tuple[Volume, Volume]],
    window: WindowSpec,
    patch: int,
    max_patches: Optional[int] = None,
    random_offset: bool = False,
    seed: int = 0,
) -> List[PatchSample]:
    """Patches of several (low, normal) pairs in volume order, truncated to `max_patches`."""
    samples: List[PatchSample] = []
    for k, (low, normal) in enumerate(pairs):
        samples.extend(extract_patches(low, normal, window, patch, random_offset=random_offset, seed=seed + k, volume_id=k))
        if max_patches is not None and len(samples) >= max_patches:
            return samples[:max_patches]
    return samples


def split_by_volume(pairs: Sequence, fraction: float) -> Tuple[list, list]:
    """Hold out the last round(fraction * n) volumes (at least one when fraction > 0 and n > 1)."""
    n = len(pairs)
    held = int(round(fraction * n))
    if fraction > 0 and n > 1:
        held = min(max(held, 1), n - 1)
    else:
        held = 0
    return list(pairs[: n - held]), list(pairs[n - held :])
