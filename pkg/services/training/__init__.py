from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .losses import critic_objective, generator_objective, loss_kidot, loss_sup
from .optimizer import RMSPropState, lr_at_epoch, rmsprop_update
from .trainer import Trainer, train, write_history_csv

__all__ = [
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "critic_objective",
    "generator_objective",
    "loss_kidot",
    "loss_sup",
    "RMSPropState",
    "lr_at_epoch",
    "rmsprop_update",
    "Trainer",
    "train",
    "write_history_csv",
]
