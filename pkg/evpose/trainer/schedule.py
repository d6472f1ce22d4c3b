"""Plateau learning-rate schedule: halve when training loss stalls, stop at a floor."""

import logging
import math
from dataclasses import dataclass
from typing import Iterable

logger = logging.getLogger(__name__)


@dataclass
class ScheduleState:
    """Where the schedule stands after some epochs.

    Attributes:
      lr: rate for the next epoch
      best: lowest epoch loss so far
      since_best: epochs since best last improved
      stop: lr fell below the floor
    """

    lr: float
    best: float = math.inf
    since_best: int = 0
    stop: bool = False


def lr_schedule_step(
    state: ScheduleState,
    loss: float,
    patience: int = 5,
    factor: float = 0.5,
    lr_min: float = 1e-6,
) -> ScheduleState:
    """Folds one finished epoch's loss into the schedule.

    A loss strictly below the best resets the patience counter; after
    ``patience`` epochs without one, lr is multiplied by ``factor`` and
    the counter starts over. Once lr < lr_min the state says stop.
    """
    best, since_best, lr = state.best, state.since_best, state.lr
    if loss < best:
        best, since_best = loss, 0
    else:
        since_best += 1
        if since_best >= patience:
            lr *= factor
            since_best = 0
            logger.info("loss plateaued at %.6g, lr now %.3g", best, lr)
    return ScheduleState(lr, best, since_best, lr < lr_min)


def replay_schedule(losses: Iterable[float], lr: float, **kwargs) -> list[ScheduleState]:
    """States after each epoch of a loss history, for inspection and tests."""
    state = ScheduleState(lr)
    states = []
    for loss in losses:
        state = lr_schedule_step(state, loss, **kwargs)
        states.append(state)
        if state.stop:
            break
    return states
