"""The training loop, and running a trained network over a dataset."""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from evpose.events import (
    DEFAULT_COUNT_CAP,
    DEFAULT_INTERVAL,
    CropWindow,
    EventStream,
    accumulate_frame,
    event_centroid,
    normalize_frame,
    slice_packets,
)
from evpose.events.stream import empty_events
from evpose.exceptions import InvalidArgument, InvalidConfig, NonFiniteLoss
from evpose.metrics import EvalReport, decode, evaluate
from evpose.ndgrad import ParamSet, adam_step, backward
from evpose.pose import Pose
from evpose.posenet import ModelConfig, build_params, unroll
from evpose.settings import worker_count
from evpose.trainer.checkpoint import Checkpoint, save_checkpoint
from evpose.trainer.config import TrainConfig
from evpose.trainer.dataset import Clip, ClipDataset
from evpose.trainer.schedule import lr_schedule_step
from evpose.trainer.targets import heatmap_loss, make_target
from evpose.typing import PathArg

logger = logging.getLogger(__name__)

LOG_NAME = "train.log"
LAST = "last.epc"
BEST = "best.epc"


@dataclass
class EpochRecord:
    """One line of the training log."""

    epoch: int
    lr: float
    loss: float
    pck: Optional[float]
    seconds: float

    def line(self) -> str:
        """Tab-separated: epoch, lr, mean loss, validation PCK or "-", seconds."""
        pck = "-" if self.pck is None else f"{self.pck:.2f}"
        return f"{self.epoch}\t{self.lr:.6g}\t{self.loss:.8f}\t{pck}\t{self.seconds:.2f}"


@dataclass
class TrainResult:
    """Final checkpoint and the epochs this call ran."""

    checkpoint: Checkpoint
    history: list[EpochRecord]


def clip_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Independent augmentation stream for one clip in one epoch."""
    return np.random.default_rng([seed, epoch, index])


def batch_targets(
    clips: list[Clip], model: ModelConfig, sigma: float
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Stacks clips into (T, N, 2, S, S) inputs, per-step targets and masks."""
    steps = len(clips[0].poses)
    inputs = np.stack([c.inputs for c in clips], axis=1)
    targets, masks = [], []
    for t in range(steps):
        targets.append(
            np.stack(
                [make_target(c.poses[t], model.heatmap_size, model.heatmap_stride, sigma) for c in clips]
            ).astype(model.dtype)
        )
        masks.append(np.stack([c.poses[t].visible for c in clips]))
    return inputs, targets, masks


def train_step(
    clips: list[Clip],
    model: ModelConfig,
    params: ParamSet,
    config: TrainConfig,
    lr: float,
    epoch: int = 0,
    batch: int = 0,
) -> float:
    """Forward, loss, backward and one Adam update on a batch of clips.

    Raises:
      NonFiniteLoss: before any parameter changes
    """
    inputs, targets, masks = batch_targets(clips, model, config.sigma)
    result = unroll(inputs, model, params)
    loss = heatmap_loss(result.heatmaps, targets, masks)
    value = loss.item()
    if not math.isfinite(value):
        raise NonFiniteLoss(epoch, batch, value)
    params.zero_grad()
    backward(loss)
    adam_step(params, lr=lr, weight_decay=config.weight_decay)
    return value


def _check(dataset: ClipDataset, model: ModelConfig) -> None:
    if not len(dataset):
        raise InvalidArgument(f"no clips in {dataset}")
    if dataset.T > model.T_max:
        raise InvalidConfig(f"clips of {dataset.T} frames exceed T_max {model.T_max}")


def train(  # pylint: disable=too-many-arguments,too-many-locals
    dataset: ClipDataset,
    model: ModelConfig,
    config: TrainConfig,
    out: Optional[PathArg] = None,
    resume: Optional[Checkpoint] = None,
    val_dataset: Optional[ClipDataset] = None,
    threads: Optional[int] = None,
) -> TrainResult:
    """Trains until the learning rate bottoms out or epochs_max is reached.

    Data order comes from (seed, epoch) and augmentation from (seed,
    epoch, clip), so a run resumed from any of its checkpoints continues
    exactly as if it had never stopped.

    Arguments:
      dataset: training clips
      model: network configuration, ignored in favour of resume.model
      config: training settings
      out: directory for train.log, last.epc and best.epc
      resume: checkpoint to continue from
      val_dataset: clips for per-epoch PCK when config.val_pck is set
      threads: clip preparation workers, EVPOSE_THREADS by default
    """
    if resume is not None:
        model = resume.model
        ckpt = resume
        ckpt.train = config
    else:
        model.validate()
        ckpt = Checkpoint(model, config, build_params(model, config.seed))
    config.validate()
    _check(dataset, model)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        if resume is None:
            (out / LOG_NAME).write_text("", encoding="utf-8")
    workers = threads or worker_count()
    params = ckpt.params
    history = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for epoch in range(ckpt.epoch, config.epochs_max):
            if ckpt.schedule.stop:
                break
            started = time.monotonic()
            lr = ckpt.schedule.lr
            order = np.random.default_rng([config.seed, epoch]).permutation(len(dataset))
            losses = []
            for b, lo in enumerate(range(0, len(order), config.batch_size)):
                indices = [int(i) for i in order[lo : lo + config.batch_size]]
                clips = list(
                    pool.map(
                        lambda i, e=epoch: dataset.prepare(i, model.input_size, config, clip_rng(config.seed, e, i)),
                        indices,
                    )
                )
                if clips[0].poses[0].K != model.K:
                    raise InvalidConfig(f"labels have {clips[0].poses[0].K} joints, model K is {model.K}")
                losses.append(train_step(clips, model, params, config, lr, epoch, b))
                logger.debug("epoch %d batch %d loss %.6f", epoch, b, losses[-1])
            mean = float(np.mean(losses))
            improved = mean < ckpt.schedule.best
            ckpt.schedule = lr_schedule_step(
                ckpt.schedule, mean, config.plateau_patience, config.lr_factor, config.lr_min
            )
            ckpt.epoch = epoch + 1
            ckpt.losses.append(mean)
            pck = None
            if config.val_pck and val_dataset is not None and len(val_dataset):
                pck = evaluate_dataset(val_dataset, model, params, config, threads=workers).PCK
            record = EpochRecord(epoch, lr, mean, pck, time.monotonic() - started)
            history.append(record)
            logger.info("epoch %d lr %.3g loss %.6f", epoch, lr, mean)
            if out is not None:
                with open(out / LOG_NAME, "a", encoding="utf-8") as f:
                    f.write(record.line() + "\n")
                save_checkpoint(ckpt, out / LAST)
                if improved:
                    save_checkpoint(ckpt, out / BEST)
    if ckpt.schedule.stop:
        logger.info("lr %.3g below %.3g, stopped after epoch %d", ckpt.schedule.lr, config.lr_min, ckpt.epoch - 1)
    return TrainResult(ckpt, history)


def predict_clip(clip: Clip, model: ModelConfig, params: ParamSet, threshold: float = 0.1) -> list[Pose]:
    """Decoded poses per frame, in the clip's crop coordinates."""
    result = unroll(clip.inputs, model, params)
    return [decode(b.values[0], model.heatmap_stride, threshold) for b in result.heatmaps]


def evaluate_dataset(
    dataset: ClipDataset,
    model: ModelConfig,
    params: ParamSet,
    config: Optional[TrainConfig] = None,
    crop: str = "pose",
    threads: Optional[int] = None,
) -> EvalReport:
    """Unroll, decode and score every clip, grouped by action.

    Clips run in parallel; results are gathered in clip order.
    """
    _check(dataset, model)

    def run(index: int) -> tuple[Clip, list[Pose]]:
        clip = dataset.prepare(index, model.input_size, config, rng=None, crop=crop)
        return clip, predict_clip(clip, model, params)

    with ThreadPoolExecutor(max_workers=threads or worker_count()) as pool:
        results = list(pool.map(run, range(len(dataset))))
    return evaluate(
        (pred, gt, clip.action) for clip, preds in results for pred, gt in zip(preds, clip.poses)
    )


def infer_stream(  # pylint: disable=too-many-arguments
    stream: EventStream,
    model: ModelConfig,
    params: ParamSet,
    T: int,  # pylint: disable=invalid-name
    interval: int = DEFAULT_INTERVAL,
    count_cap: int = DEFAULT_COUNT_CAP,
    threshold: float = 0.1,
    frames: Optional[int] = None,
) -> list[Pose]:
    """Decoded poses for every frame interval of a raw recording.

    Frame i covers [i * interval, (i + 1) * interval), the numbering the
    label files use, so leading silence still yields poses. ``frames``
    pads or truncates to a known label count; otherwise the last frame
    is the one holding the last event.

    Frames run through the network in consecutive windows of T, each from
    a fresh state and cropped around its own event centroid. Poses come
    back in sensor coordinates.
    """
    if not 1 <= T <= model.T_max:
        raise InvalidConfig(f"T {T} outside 1..{model.T_max}")
    if frames is not None and frames < 0:
        raise InvalidArgument(f"frames must be >= 0, got {frames}")
    size = model.input_size
    duration = frames * interval if frames is not None else None
    packets = slice_packets(stream, interval, t0=0, duration=duration)
    if frames is not None:
        packets = packets[:frames] + [empty_events()] * (frames - len(packets))
    poses: list[Pose] = []
    for lo in range(0, len(packets), T):
        chunk = packets[lo : lo + T]
        window = CropWindow(event_centroid(np.concatenate(chunk), stream.width, stream.height), size)
        inputs = np.stack(
            [normalize_frame(accumulate_frame(window.apply_events(p), size, size), count_cap).grid for p in chunk]
        )
        result = unroll(inputs, model, params)
        poses.extend(window.invert_pose(decode(b.values[0], model.heatmap_stride, threshold)) for b in result.heatmaps)
        logger.debug("inferred frames %d..%d around %s", lo, lo + len(chunk) - 1, window.center)
    return poses
