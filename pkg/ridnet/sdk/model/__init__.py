from .parameters import ParameterSet, generator_shapes, init_generator_parameters, make_rng
from .ridnet import (
    GeneratorParams,
    RIDnetBlockParams,
    RIDnetGenerator,
    effective_alpha,
    embed,
    fuse,
    generator_forward,
    local_branch,
    receptive_radius,
    replace_center,
    ridnet_forward,
)

__all__ = [
    "GeneratorParams",
    "ParameterSet",
    "RIDnetBlockParams",
    "RIDnetGenerator",
    "effective_alpha",
    "embed",
    "fuse",
    "generator_forward",
    "generator_shapes",
    "init_generator_parameters",
    "local_branch",
    "make_rng",
    "receptive_radius",
    "replace_center",
    "ridnet_forward",
]
