"""Training, checkpointing, and batch restoration."""

from .checkpoint import (
    AdamGroupState, Checkpoint, CheckpointError, config_from_text, config_to_text,
    load_checkpoint, save_checkpoint,
)
from .configfile import load_train_config, parse_kv_text
from .data import PatchDataset, augment_batch, epoch_plan
from .loop import (
    DIAGNOSTIC_CHECKPOINT, FINAL_CHECKPOINT, LOSS_LOG, TrainConfig, TrainError,
    TrainResult, train,
)
from .optim import AdamState, ScheduleConfig, adam_step, cosine_lr
from .restore import restore_image, restore_images, write_attention_csv

__all__ = [
    "ScheduleConfig", "cosine_lr", "AdamState", "adam_step",
    "TrainConfig", "TrainResult", "TrainError", "train",
    "FINAL_CHECKPOINT", "DIAGNOSTIC_CHECKPOINT", "LOSS_LOG",
    "Checkpoint", "CheckpointError", "AdamGroupState",
    "save_checkpoint", "load_checkpoint", "config_to_text", "config_from_text",
    "PatchDataset", "epoch_plan", "augment_batch",
    "load_train_config", "parse_kv_text",
    "restore_image", "restore_images", "write_attention_csv",
]
