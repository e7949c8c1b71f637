"""
Synthetic multi-slice phantoms standing in for clinical normal-dose scans.

Structures are ellipsoids, spheres and tubes that extend over several
slices, so neighbouring slices carry useful context.
"""

import logging
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..model.parameters import make_rng
from ..models.canonical_types import Protocol
from .volume import HU_MAX, HU_MIN, Volume

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "phantom-1"
MIN_DIMS = (9, 64, 64)

AIR_HU = -1000.0
SOFT_TISSUE_HU = 40.0
VESSEL_HU = 200.0
LUNG_HU = -850.0


@dataclass(frozen=True)
class LesionSpec:
    """A spherical lesion added on top of the anatomy; radius in pixels, depth radius in slices."""

    center: Tuple[int, int, int]
    radius: float = 4.0
    contrast: float = 20.0
    depth_radius: Optional[float] = None

    def mask(self, dims: Tuple[int, int, int]) -> np.ndarray:
        z, y, x = np.ogrid[: dims[0], : dims[1], : dims[2]]
        cz, cy, cx = self.center
        rz = self.depth_radius if self.depth_radius is not None else max(1.5, self.radius / 3.0)
        return ((z - cz) / rz) ** 2 + ((y - cy) / self.radius) ** 2 + ((x - cx) / self.radius) ** 2 <= 1.0


def _ellipsoid(grid, center, radii) -> np.ndarray:
    z, y, x = grid
    return sum(((axis - c) / r) ** 2 for axis, c, r in zip((z, y, x), center, radii)) <= 1.0


def _tube(grid, start: Tuple[float, float], drift: Tuple[float, float], radius: float, depth: int) -> np.ndarray:
    z, y, x = grid
    t = z / max(depth - 1, 1)
    cy = start[0] + drift[0] * t
    cx = start[1] + drift[1] * t
    return (y - cy) ** 2 + (x - cx) ** 2 <= radius**2


def _inside_body(rng, dims, body_radii, margin: float = 0.7) -> Tuple[float, float]:
    angle = rng.uniform(0, 2 * np.pi)
    scale = margin * np.sqrt(rng.uniform(0, 1))
    return dims[1] / 2 + scale * body_radii[0] * np.sin(angle), dims[2] / 2 + scale * body_radii[1] * np.cos(angle)


def generate_phantom(
    seed: int,
    dims: Sequence[int] = (9, 128, 128),
    protocol: Protocol = Protocol.ABDOMEN,
    lesions: Sequence[LesionSpec] = (),
    spacing: Sequence[float] = (3.0, 0.7, 0.7),
) -> Volume:
    """
    Deterministic phantom for a seed.

    Air outside an elliptic body of soft tissue; the abdomen protocol adds
    organs (-100..100 HU), low-contrast lesions (+/-20 HU) and vessels; the
    chest protocol adds two lung fields with nodules and vessels. Requested
    lesions are added last and do not change the random anatomy.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < m for d, m in zip(dims, MIN_DIMS)):
        raise ValueError(f"phantom dims must be at least {MIN_DIMS}, got {dims}")
    protocol = Protocol(protocol)
    rng = make_rng(seed)
    depth, rows, cols = dims
    grid = np.ogrid[:depth, :rows, :cols]
    hu = np.full(dims, AIR_HU, dtype=np.float64)

    body_radii = (0.40 * rows, 0.45 * cols)
    body = _ellipsoid(grid, (depth / 2, rows / 2, cols / 2), (depth * 10.0, *body_radii))
    hu[body] = SOFT_TISSUE_HU

    placed: List[dict] = []
    if protocol == Protocol.ABDOMEN:
        for _ in range(int(rng.integers(3, 7))):
            cy, cx = _inside_body(rng, dims, body_radii, 0.55)
            radii = (rng.uniform(2.0, depth / 2), rng.uniform(0.08, 0.18) * rows, rng.uniform(0.08, 0.18) * cols)
            organ = _ellipsoid(grid, (rng.uniform(0, depth), cy, cx), radii) & body
            hu[organ] = rng.uniform(-100.0, 100.0)
        lesion_count, lesion_contrast = int(rng.integers(2, 5)), 20.0
        nodule_base = None
    else:
        for side in (-1, 1):
            lung = _ellipsoid(
                grid,
                (depth / 2, rows * 0.48, cols / 2 + side * 0.2 * cols),
                (depth * 10.0, 0.28 * rows, 0.15 * cols),
            )
            hu[lung & body] = LUNG_HU
        lesion_count, lesion_contrast = int(rng.integers(2, 5)), None
        nodule_base = LUNG_HU

    for _ in range(int(rng.integers(2, 5))):
        start = _inside_body(rng, dims, body_radii, 0.6)
        drift = (rng.uniform(-0.05, 0.05) * rows, rng.uniform(-0.05, 0.05) * cols)
        vessel = _tube(grid, start, drift, rng.uniform(0.8, 2.0), depth) & body
        hu[vessel] = VESSEL_HU

    for _ in range(lesion_count):
        cy, cx = _inside_body(rng, dims, body_radii, 0.5)
        radius = float(rng.uniform(3.0, 0.06 * min(rows, cols) + 3.0))
        center = (int(rng.integers(2, depth - 2)), int(cy), int(cx))
        if nodule_base is None:
            contrast = lesion_contrast * (1.0 if rng.uniform() < 0.5 else -1.0)
            spec = LesionSpec(center=center, radius=radius, contrast=contrast)
            hu[spec.mask(dims) & body] += contrast
        else:
            spec = LesionSpec(center=center, radius=radius, contrast=float(rng.uniform(20.0, 60.0)) - nodule_base)
            hu[spec.mask(dims) & body] = float(spec.contrast + nodule_base)
        placed.append(asdict(spec))

    for spec in lesions:
        hu[spec.mask(dims)] += spec.contrast
        placed.append({**asdict(spec), "requested": True})

    hu = np.clip(hu, HU_MIN, HU_MAX)
    logger.debug("phantom seed=%d protocol=%s dims=%s lesions=%d", seed, protocol.value, dims, len(placed))
    provenance = {
        "seed": int(seed),
        "generator_version": GENERATOR_VERSION,
        "protocol": protocol.value,
        "dose_fraction": 1.0,
        "lesions": placed,
    }
    return Volume(hu=hu, spacing=tuple(spacing), provenance=provenance)
