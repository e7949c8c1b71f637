"""Configuration models for ridnet."""

import json
import os
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, Field, field_validator, model_validator

from .canonical_types import (
    ActivationKind,
    LossMode,
    Preset,
    Protocol,
    ThetaMode,
)


class WindowSpec(BaseModel):
    """HU display window used to map volumes into [0, 1]."""

    width: float = Field(default=400.0, gt=0, description="Window width in HU")
    level: float = Field(default=40.0, description="Window level (center) in HU")

    @classmethod
    def abdomen(cls) -> "WindowSpec":
        return cls(width=400.0, level=40.0)

    @classmethod
    def chest(cls) -> "WindowSpec":
        return cls(width=1500.0, level=-600.0)

    @property
    def lower(self) -> float:
        return self.level - self.width / 2.0


PROTOCOL_DEFAULTS: Dict[Protocol, Dict[str, Any]] = {
    Protocol.ABDOMEN: {"dose": 0.25, "window": {"width": 400.0, "level": 40.0}},
    Protocol.CHEST: {"dose": 0.10, "window": {"width": 1500.0, "level": -600.0}},
}


class GraphConfig(BaseModel):
    """Shape of the plane and depth similarity graphs."""

    window: int = Field(default=9, description="Odd non-local search window extent d")
    k_neighbors: int = Field(
        default=8, description="Vertex count K; K-1 neighbours are selected per pixel"
    )
    depth_vertices: int = Field(default=3, description="Depth-graph vertex count M")
    depth_radius: int = Field(
        default=0,
        ge=0,
        description="Spatial search radius inside neighbouring slices (0 = co-located only)",
    )
    theta_mode: ThetaMode = Field(
        default=ThetaMode.FULL, description="Edge network output: full CxC or diagonal"
    )
    edge_hidden: int = Field(default=16, gt=0, description="Hidden width of the edge network")

    @model_validator(mode="after")
    def _check_shape(self) -> "GraphConfig":
        if self.window % 2 == 0 or self.window < 5:
            raise ValueError(f"window must be odd and >= 5, got {self.window}")
        if self.k_neighbors < 2:
            raise ValueError(f"k_neighbors must be >= 2, got {self.k_neighbors}")
        pool = self.window * self.window - 9
        if self.k_neighbors - 1 > pool:
            raise ValueError(
                f"k_neighbors - 1 = {self.k_neighbors - 1} exceeds the candidate pool "
                f"of {pool} pixels for window {self.window}"
            )
        if self.depth_vertices < 2:
            raise ValueError(f"depth_vertices must be >= 2, got {self.depth_vertices}")
        return self

    @property
    def candidate_pool(self) -> int:
        return self.window * self.window - 9


class ModelConfig(BaseModel):
    """Generator architecture."""

    blocks: int = Field(default=3, ge=1, le=5, description="Number of stacked RIDnet blocks")
    channels: int = Field(default=32, gt=0, description="Feature channels inside blocks")
    embed_hidden: int = Field(
        default=64, gt=0, description="Width of the first embedding convolution"
    )
    tail_hidden: int = Field(default=16, gt=0, description="Width of the first tail convolution")
    slices: int = Field(default=3, description="Input slice window 2s+1")
    activation: ActivationKind = Field(
        default=ActivationKind.RELU, description="Nonlinearity after embedding and tail convs"
    )
    leaky_slope: float = Field(default=0.2, ge=0.0, lt=1.0, description="Slope for leaky_relu")
    init_seed: int = Field(default=0, description="Seed for parameter initialization")
    graph: GraphConfig = Field(default_factory=GraphConfig)

    @field_validator("slices")
    @classmethod
    def _three_slices(cls, value: int) -> int:
        if value != 3:
            raise ValueError(f"only a 3-slice input window is supported, got {value}")
        return value


class TrainConfig(BaseModel):
    """Optimization and loss settings."""

    lambda_perceptual: float = Field(default=0.1, ge=0.0, description="Perceptual loss weight")
    lambda_gp: float = Field(default=10.0, ge=0.0, description="Gradient penalty weight")
    lr_g: float = Field(default=1e-4, gt=0.0, description="Generator learning rate")
    lr_d: float = Field(default=4e-4, gt=0.0, description="Critic learning rate")
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    decay_gamma: float = Field(default=0.97, gt=0.0, le=1.0, description="Exponential decay factor")
    decay_interval: Optional[int] = Field(
        default=None, description="Steps between decays; None means once per epoch"
    )
    batch_size: int = Field(default=32, gt=0)
    epochs: int = Field(default=40, gt=0)
    critic_steps: int = Field(default=1, ge=1, description="Critic updates per generator update")
    seed: int = Field(default=0)
    loss_mode: LossMode = Field(default=LossMode.GAN_PERCEPTUAL)
    patch_size: int = Field(default=64, gt=0)
    max_patches: Optional[int] = Field(default=None, description="Cap on training samples")
    random_offset: bool = Field(default=False, description="Jitter tile origins when extracting")
    validation_fraction: float = Field(
        default=0.0, ge=0.0, lt=1.0, description="Fraction of volumes held out for validation"
    )
    dtype: Literal["float32", "float64"] = Field(default="float32")
    phi_seed: int = Field(default=1234, description="Seed of the fixed perceptual extractor")
    threads: int = Field(default=1, ge=1, description="Workers for per-sample gradients")


class DataConfig(BaseModel):
    """Synthetic volume generation and low-dose simulation."""

    seed: int = Field(default=0)
    volumes: int = Field(default=2, gt=0)
    dims: Tuple[int, int, int] = Field(default=(9, 128, 128), description="(slices, rows, cols)")
    spacing: Tuple[float, float, float] = Field(default=(3.0, 0.7, 0.7), description="mm per axis")
    protocol: Protocol = Field(default=Protocol.ABDOMEN)
    dose: float = Field(default=0.25, gt=0.0, le=1.0, description="Dose fraction")
    i0: float = Field(default=1e5, gt=0.0, description="Full-dose incident photon count")
    mu_water: float = Field(default=0.02, gt=0.0, description="Water attenuation per mm")
    path_length: float = Field(default=10.0, gt=0.0, description="Effective path length in mm")
    window: WindowSpec = Field(default_factory=WindowSpec.abdomen)

    @model_validator(mode="before")
    @classmethod
    def _protocol_defaults(cls, values: Any) -> Any:
        if not isinstance(values, dict):
            return values
        protocol = Protocol(values.get("protocol", Protocol.ABDOMEN))
        defaults = PROTOCOL_DEFAULTS[protocol]
        values = dict(values)
        values.setdefault("dose", defaults["dose"])
        values.setdefault("window", defaults["window"])
        return values

    @field_validator("dims", "spacing", mode="before")
    @classmethod
    def _split_triplet(cls, value: Any) -> Any:
        if isinstance(value, str):
            return tuple(part.strip() for part in value.split(","))
        return value


class RunConfig(BaseModel):
    """Fully resolved configuration written beside every command's outputs."""

    preset: Preset = Field(default=Preset.DESK)
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(default="INFO")

    @classmethod
    def from_environment(cls, preset: Preset = Preset.DESK) -> "RunConfig":
        """Create configuration from a preset and environment variables."""
        return cls.resolve(preset=preset)

    @classmethod
    def resolve(
        cls,
        preset: Preset = Preset.DESK,
        config_file: Optional[str] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "RunConfig":
        """
        Merge defaults, preset, key-value config file, environment and flags.

        Args:
            preset: Named configuration bundle to start from
            config_file: Optional dotenv-style file with dotted keys
            overrides: Dotted-key overrides, typically from CLI flags; None values are ignored

        Returns:
            Validated RunConfig
        """
        merged = preset_values(preset)
        if config_file:
            _deep_merge(merged, _nest(load_key_value_file(config_file)))
        _deep_merge(merged, _nest(_environment_values()))
        if overrides:
            _deep_merge(merged, _nest({k: v for k, v in overrides.items() if v is not None}))
        merged["preset"] = Preset(preset).value
        return cls.model_validate(merged)

    def write(self, out_dir: Path) -> Path:
        """Write the resolved configuration as resolved_config.json."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "resolved_config.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.model_dump(mode="json"), f, indent=2, sort_keys=True)
            f.write("\n")
        return path


def preset_values(preset: Preset) -> Dict[str, Any]:
    """Return the nested value dictionary for a preset."""
    preset = Preset(preset)
    if preset == Preset.PAPER:
        return {
            "model": {
                "blocks": 3,
                "channels": 32,
                "embed_hidden": 64,
                "tail_hidden": 16,
                "graph": {"window": 9, "k_neighbors": 8, "depth_vertices": 3, "theta_mode": "full"},
            },
            "train": {
                "batch_size": 32,
                "epochs": 40,
                "patch_size": 64,
                "loss_mode": "gan_perceptual",
                "lr_g": 1e-4,
                "lr_d": 4e-4,
                "validation_fraction": 0.4,
            },
            "data": {"volumes": 10, "dims": (12, 512, 512)},
        }
    if preset == Preset.DESK:
        return {
            "model": {
                "blocks": 1,
                "channels": 8,
                "embed_hidden": 16,
                "tail_hidden": 8,
                "graph": {"window": 9, "k_neighbors": 4, "theta_mode": "diagonal"},
            },
            "train": {
                "batch_size": 4,
                "epochs": 2,
                "patch_size": 32,
                "max_patches": 500,
                "loss_mode": "mse_only",
                "lr_g": 1e-3,
            },
            "data": {"volumes": 4, "dims": (12, 128, 128)},
        }
    return {
        "model": {
            "blocks": 1,
            "channels": 4,
            "embed_hidden": 8,
            "tail_hidden": 4,
            "graph": {"window": 5, "k_neighbors": 4, "theta_mode": "diagonal"},
        },
        "train": {
            "batch_size": 4,
            "epochs": 1,
            "patch_size": 16,
            "max_patches": 32,
            "loss_mode": "mse_only",
            "lr_g": 1e-3,
        },
        "data": {"volumes": 1, "dims": (9, 64, 64)},
    }


def load_key_value_file(path: str) -> Dict[str, Optional[str]]:
    """Read a dotenv-style key-value document with dotted keys."""
    if not Path(path).is_file():
        raise FileNotFoundError(f"Config file '{path}' not found")
    return {k: v for k, v in dotenv_values(path).items() if v is not None}


def _environment_values() -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    if os.getenv("RIDNET_THREADS"):
        values["train.threads"] = os.getenv("RIDNET_THREADS")
    if os.getenv("RIDNET_LOG_LEVEL"):
        values["log_level"] = os.getenv("RIDNET_LOG_LEVEL", "INFO").upper()
    if os.getenv("RIDNET_SEED"):
        values["train.seed"] = os.getenv("RIDNET_SEED")
        values["data.seed"] = os.getenv("RIDNET_SEED")
    return values


def _nest(flat: Mapping[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        parts = key.split(".")
        cursor = nested
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
        cursor[parts[-1]] = value
    return nested


def _deep_merge(base: Dict[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value
    return base
