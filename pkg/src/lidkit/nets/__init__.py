"""Trainable classifier backends with hand-written gradients.

Everything runs in 64-bit: gradient-check fidelity matters more than speed
at this scale.
"""

from .models import ClassifierConfig, SequenceBatch, build_model, CLASSIFIER_KINDS
from .loss import cross_entropy, softmax
from .optim import adam_step, init_adam_state
from .train import (
    Checkpoint,
    PredictionSet,
    PooledDataset,
    SequenceDataset,
    TrainConfig,
    TrainReport,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from .gradcheck import grad_check

__all__ = [
    "CLASSIFIER_KINDS",
    "Checkpoint",
    "ClassifierConfig",
    "PooledDataset",
    "PredictionSet",
    "SequenceBatch",
    "SequenceDataset",
    "TrainConfig",
    "TrainReport",
    "adam_step",
    "build_model",
    "cross_entropy",
    "grad_check",
    "init_adam_state",
    "load_checkpoint",
    "predict",
    "save_checkpoint",
    "softmax",
    "train",
]
