from enum import Enum


class Padding(str, Enum):
    """Border handling for convolutions"""

    REFLECT = "reflect"
    ZERO = "zero"
    NONE = "none"


class ActivationKind(str, Enum):
    """Pointwise nonlinearities available to the model"""

    RELU = "relu"
    LEAKY_RELU = "leaky_relu"


class ThetaMode(str, Enum):
    """Shape of the per-edge matrix produced by the edge network"""

    FULL = "full"  # C x C matrix per edge
    DIAGONAL = "diagonal"  # C-vector per edge, used as diag(...)


class LossMode(str, Enum):
    """Generator objective"""

    MSE_ONLY = "mse_only"
    GAN_PERCEPTUAL = "gan_perceptual"


class Protocol(str, Enum):
    """Body-region protocol driving phantom anatomy, window and dose"""

    ABDOMEN = "abdomen"
    CHEST = "chest"


class Preset(str, Enum):
    """Named configuration bundles"""

    PAPER = "paper"
    DESK = "desk"
    MICRO = "micro"


class SweepAxis(str, Enum):
    """Hyperparameter swept by the sweep harness"""

    K_NEIGHBORS = "k_neighbors"
    BLOCK_COUNT = "block_count"


class AuditScope(str, Enum):
    """Granularity of gradient audits"""

    OPS = "ops"
    BLOCKS = "blocks"
    MODEL = "model"
