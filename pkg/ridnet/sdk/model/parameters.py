"""
Named, ordered parameter collections for the generator and the critic.
"""

from typing import Callable, Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from ..autodiff import Tensor
from ..errors import ShapeError
from ..graph import EccParams
from ..models.canonical_types import ThetaMode
from ..models.config import ModelConfig

ALPHA_SUFFIX = ".alpha"


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator so any draw sequence replays exactly from its seed."""
    return np.random.Generator(np.random.Philox(seed))


class ParameterSet(Mapping[str, Tensor]):
    """
    Immutable ordered mapping name -> leaf Tensor (requires_grad=True).

    Updates produce a new ParameterSet; iteration order is insertion order and
    is the order used by checkpoints and gradient reductions.
    """

    def __init__(self, tensors: Mapping[str, Tensor]):
        self._tensors: Dict[str, Tensor] = {}
        for name, value in tensors.items():
            t = value if isinstance(value, Tensor) else Tensor(value)
            if not (t.is_leaf and t.requires_grad and t.name == name):
                t = Tensor(t.data, requires_grad=True, name=name)
            self._tensors[name] = t

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], dtype=np.float64) -> "ParameterSet":
        return cls({name: Tensor(np.asarray(a), dtype=dtype, requires_grad=True, name=name) for name, a in arrays.items()})

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    @property
    def dtype(self):
        return next(iter(self._tensors.values())).dtype

    @property
    def num_parameters(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: t.shape for name, t in self._tensors.items()}

    def scoped(self, prefix: str) -> Dict[str, Tensor]:
        """Entries whose name starts with `prefix.`"""
        head = prefix + "."
        return {name: t for name, t in self._tensors.items() if name.startswith(head)}

    def alpha_names(self) -> List[str]:
        return [name for name in self._tensors if name.endswith(ALPHA_SUFFIX)]

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self._tensors.items()}

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet.from_arrays(self.arrays(), dtype=dtype)

    def replace(self, updates: Mapping[str, np.ndarray]) -> "ParameterSet":
        """New set with some values replaced; shapes must not change."""
        merged: Dict[str, Tensor] = {}
        for name, t in self._tensors.items():
            if name in updates:
                value = np.asarray(updates[name], dtype=t.dtype)
                if value.shape != t.shape:
                    raise ShapeError(f"update for '{name}' has shape {value.shape}, parameter has {t.shape}")
                merged[name] = Tensor(value, requires_grad=True, name=name)
            else:
                merged[name] = t
        return ParameterSet(merged)

    def map(self, fn: Callable[[str, np.ndarray], np.ndarray]) -> "ParameterSet":
        return self.replace({name: fn(name, t.data) for name, t in self._tensors.items()})


def he_normal(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def generator_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape of every generator parameter, in checkpoint order."""
    c, e, t = config.channels, config.embed_hidden, config.tail_hidden
    hidden = config.graph.edge_hidden
    width = c * c if config.graph.theta_mode == ThetaMode.FULL else c
    shapes: Dict[str, Tuple[int, ...]] = {}
    for b in range(config.blocks):
        prefix = f"block{b}"
        if b == 0:
            shapes[f"{prefix}.embed1.weight"] = (e, 1, 3, 3, 3)
            shapes[f"{prefix}.embed1.bias"] = (e,)
            shapes[f"{prefix}.embed2.weight"] = (c, e, 3, 3, 3)
            shapes[f"{prefix}.embed2.bias"] = (c,)
        else:
            shapes[f"{prefix}.embed1.weight"] = (c, c, 3, 3, 3)
            shapes[f"{prefix}.embed1.bias"] = (c,)
        shapes[f"{prefix}.local.weight"] = (c, c, 3, 3)
        shapes[f"{prefix}.local.bias"] = (c,)
        for branch in ("plane", "depth"):
            shapes[f"{prefix}.{branch}.w1"] = (hidden,)
            shapes[f"{prefix}.{branch}.b1"] = (hidden,)
            shapes[f"{prefix}.{branch}.w2"] = (hidden, width)
            shapes[f"{prefix}.{branch}.b2"] = (width,)
            shapes[f"{prefix}.{branch}.bias"] = (c,)
        shapes[f"{prefix}{ALPHA_SUFFIX}"] = (1,)
    shapes["tail1.weight"] = (t, c, 3, 3, 3)
    shapes["tail1.bias"] = (t,)
    shapes["tail2.weight"] = (1, t, 3, 3, 3)
    shapes["tail2.bias"] = (1,)
    return shapes


def init_generator_parameters(config: ModelConfig, dtype=np.float64, seed: Optional[int] = None) -> ParameterSet:
    """
    Seeded initialization: He-normal convolution kernels, zero biases,
    identity edge networks with small noise, alpha_raw = 0.
    """
    rng = make_rng(config.init_seed if seed is None else seed)
    arrays: Dict[str, np.ndarray] = {}
    ecc_cache: Dict[str, Dict[str, np.ndarray]] = {}
    for name, shape in generator_shapes(config).items():
        scope, _, leaf = name.rpartition(".")
        if name.endswith(ALPHA_SUFFIX):
            arrays[name] = np.zeros(shape)
        elif scope.endswith((".plane", ".depth")):
            if scope not in ecc_cache:
                ecc_cache[scope] = EccParams.initial_values(config.channels, config.graph.edge_hidden, config.graph.theta_mode, rng)
            arrays[name] = ecc_cache[scope][leaf]
        elif leaf == "weight":
            arrays[name] = he_normal(rng, shape)
        else:
            arrays[name] = np.zeros(shape)
    return ParameterSet.from_arrays(arrays, dtype=dtype)
