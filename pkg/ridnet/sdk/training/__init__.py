from .checkpoint import Checkpoint, copy_checkpoint, load_checkpoint, save_checkpoint
from .losses import (
    SampleTerms,
    critic_sample_terms,
    discriminator_loss,
    generator_loss,
    generator_sample_terms,
    input_gradient_norm,
    perceptual_distance,
)
from .networks import Discriminator, FeatureExtractor, perceptual_features
from .optimizer import Adam, AdamState, adam_step, decayed_lr
from .trainer import LOG_COLUMNS, TrainResult, Trainer, evaluate_mse, reduce_gradients, train

__all__ = [
    "Adam",
    "AdamState",
    "Checkpoint",
    "Discriminator",
    "FeatureExtractor",
    "LOG_COLUMNS",
    "SampleTerms",
    "TrainResult",
    "Trainer",
    "adam_step",
    "copy_checkpoint",
    "critic_sample_terms",
    "decayed_lr",
    "discriminator_loss",
    "evaluate_mse",
    "generator_loss",
    "generator_sample_terms",
    "input_gradient_norm",
    "load_checkpoint",
    "perceptual_distance",
    "perceptual_features",
    "reduce_gradients",
    "save_checkpoint",
    "train",
]
