"""Targets, loss, augmentation, schedule, checkpoints and the training loop.

Typical usage:

from evpose.posenet import ModelConfig
from evpose.trainer import ClipDataset, TrainConfig, train

config = TrainConfig(T=8, epochs_max=20)

dataset = ClipDataset("data/synth", "train", T=config.T)

result = train(dataset, ModelConfig(input_size=64), config, out="runs/a")
"""

from evpose.trainer.augment import (
    LIMB_BAND,
    Sample,
    augment_global_rotation,
    augment_limb_rotation,
    clip_visibility,
    limb_event_mask,
    random_augment,
    rotate_points,
    rotation_matrix,
    segment_distances,
)
from evpose.trainer.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from evpose.trainer.config import TrainConfig
from evpose.trainer.dataset import Clip, ClipDataset, read_manifest, sequence_dir
from evpose.trainer.loop import (
    EpochRecord,
    TrainResult,
    batch_targets,
    evaluate_dataset,
    infer_stream,
    predict_clip,
    train,
    train_step,
)
from evpose.trainer.schedule import ScheduleState, lr_schedule_step, replay_schedule
from evpose.trainer.targets import heatmap_coords, heatmap_loss, make_target
