"""
Checkpoint format: a JSON manifest plus one blob of little-endian float32
values, parameters concatenated in manifest order.
"""

import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from ..errors import CheckpointError
from ..model.parameters import ParameterSet

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
BLOB_DTYPE = "<f4"


@dataclass
class Checkpoint:
    generator: ParameterSet
    critic: Optional[ParameterSet] = None
    metadata: Dict[str, Any] = field(default_factory=dict)


def _entries(group: str, params: ParameterSet, offset: int):
    entries = []
    for name, t in params.items():
        entries.append({"group": group, "name": name, "shape": list(t.shape), "offset": offset, "count": t.size})
        offset += t.size
    return entries, offset


def save_checkpoint(
    path: Path,
    generator: ParameterSet,
    critic: Optional[ParameterSet] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write `<path>.json` and `<path>.bin`.

    Args:
        path: Checkpoint path without suffix
        generator: Generator parameters
        critic: Critic parameters, if trained adversarially
        metadata: Hyperparameters, seeds, window and bookkeeping (JSON-serializable)

    Returns:
        Path of the manifest
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, offset = _entries("generator", generator, 0)
    if critic is not None:
        more, offset = _entries("critic", critic, offset)
        entries.extend(more)
    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": "f32le",
        "blob": path.name + ".bin",
        "parameters": entries,
        "metadata": metadata or {},
    }
    groups = [generator] + ([critic] if critic is not None else [])
    with open(path.with_suffix(".bin"), "wb") as f:
        for params in groups:
            for t in params.values():
                f.write(np.ascontiguousarray(t.data, dtype=BLOB_DTYPE).tobytes())
    manifest_path = path.with_suffix(".json")
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug("wrote checkpoint %s (%d values)", manifest_path, offset)
    return manifest_path


def load_checkpoint(manifest_path: Path, dtype=np.float32) -> Checkpoint:
    """Read a checkpoint written by save_checkpoint."""
    manifest_path = Path(manifest_path)
    if manifest_path.suffix != ".json":
        manifest_path = manifest_path.with_suffix(".json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"checkpoint manifest {manifest_path} is not valid JSON: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {manifest.get('format_version')!r}")
    blob = np.fromfile(manifest_path.with_name(manifest["blob"]), dtype=BLOB_DTYPE)
    groups: Dict[str, Dict[str, np.ndarray]] = {"generator": {}, "critic": {}}
    for entry in manifest["parameters"]:
        start, count = entry["offset"], entry["count"]
        if start + count > blob.size:
            raise CheckpointError(f"blob too short for parameter '{entry['name']}'")
        values = blob[start : start + count].reshape(entry["shape"])
        groups.setdefault(entry["group"], {})[entry["name"]] = values
    if not groups["generator"]:
        raise CheckpointError(f"checkpoint {manifest_path} has no generator parameters")
    critic = ParameterSet.from_arrays(groups["critic"], dtype=dtype) if groups["critic"] else None
    return Checkpoint(
        generator=ParameterSet.from_arrays(groups["generator"], dtype=dtype),
        critic=critic,
        metadata=manifest.get("metadata", {}),
    )


def copy_checkpoint(source_manifest: Path, target: Path) -> Path:
    """Copy a checkpoint under a new name (used for the `best` alias)."""
    source_manifest = Path(source_manifest)
    target = Path(target)
    with open(source_manifest, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    shutil.copyfile(source_manifest.with_name(manifest["blob"]), target.with_suffix(".bin"))
    manifest["blob"] = target.name + ".bin"
    with open(target.with_suffix(".json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return target.with_suffix(".json")
