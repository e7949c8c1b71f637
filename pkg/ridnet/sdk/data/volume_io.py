"""
Volume files: a JSON sidecar next to a raw little-endian float32 HU blob,
row-major (slice, row, col). Slices can be exported as 16-bit PGM.
"""

import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..errors import VolumeFormatError
from ..models.config import WindowSpec
from .volume import Volume, window_normalize

logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = ".json"
BLOB_SUFFIX = ".f32"


def write_volume(volume: Volume, path: Path, window: Optional[WindowSpec] = None) -> Path:
    """Write `<path>.json` and `<path>.f32`; returns the sidecar path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = path.with_suffix(BLOB_SUFFIX)
    sidecar = {
        "dims": list(volume.dims),
        "spacing": list(volume.spacing),
        "dtype": "f32le",
        "blob": blob.name,
        "window": window.model_dump() if window is not None else None,
        "provenance": volume.provenance,
    }
    np.ascontiguousarray(volume.hu, dtype="<f4").tofile(blob)
    sidecar_path = path.with_suffix(SIDECAR_SUFFIX)
    with open(sidecar_path, "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")
    return sidecar_path


def read_volume(path: Path) -> Tuple[Volume, Optional[WindowSpec]]:
    """Read a volume from its sidecar (the `.f32` or bare path also works)."""
    sidecar_path = Path(path).with_suffix(SIDECAR_SUFFIX)
    if not sidecar_path.is_file():
        raise FileNotFoundError(f"volume sidecar '{sidecar_path}' not found")
    try:
        with open(sidecar_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
        dims = tuple(int(d) for d in meta["dims"])
        if meta.get("dtype") != "f32le":
            raise VolumeFormatError(f"unsupported volume dtype {meta.get('dtype')!r} in {sidecar_path}")
        blob_path = sidecar_path.with_name(meta["blob"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise VolumeFormatError(f"malformed volume sidecar {sidecar_path}: {e}") from e
    data = np.fromfile(blob_path, dtype="<f4")
    if data.size != int(np.prod(dims)):
        raise VolumeFormatError(f"blob {blob_path} holds {data.size} values, sidecar declares dims {dims}")
    window = WindowSpec(**meta["window"]) if meta.get("window") else None
    try:
        volume = Volume(hu=data.reshape(dims), spacing=tuple(meta["spacing"]), provenance=meta.get("provenance", {}))
    except ValueError as e:
        raise VolumeFormatError(f"{sidecar_path}: {e}") from e
    return volume, window


def list_volume_pairs(directory: Path) -> List[Tuple[Path, Path]]:
    """(noisy, clean) sidecar pairs written by gen-data, in index order."""
    directory = Path(directory)
    pairs = []
    for noisy in sorted(directory.glob("noisy_*" + SIDECAR_SUFFIX)):
        clean = directory / noisy.name.replace("noisy_", "clean_", 1)
        if not clean.is_file():
            raise VolumeFormatError(f"{noisy.name} has no matching clean volume in {directory}")
        pairs.append((noisy, clean))
    return pairs


def export_pgm(volume: Volume, slice_index: int, window: WindowSpec, path: Path) -> Path:
    """Write one windowed slice as a binary 16-bit PGM."""
    image = window_normalize(volume.hu[slice_index], window)
    levels = np.round(image * 65535.0).astype(">u2")
    rows, cols = levels.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        f.write(levels.tobytes())
    return path
