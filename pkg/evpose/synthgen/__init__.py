"""Synthetic event recordings of a moving stick figure.

Typical usage:

from evpose.synthgen import make_dataset

rows = make_dataset("data/synth", n_sequences=40, seed=7, static_episode_fraction=0.5)
"""

from evpose.synthgen.config import SynthConfig
from evpose.synthgen.dataset import (
    KINDS,
    MOTIONS,
    SPEEDS,
    make_dataset,
    make_sequence,
    random_script,
)
from evpose.synthgen.simulate import SUBSTEPS, SynthSample, simulate, substep_grid
from evpose.synthgen.skeleton import (
    ROOT,
    MotionScript,
    Oscillation,
    SkeletonSpec,
    StaticEpisode,
    default_skeleton,
    forward_kinematics,
    joint_positions,
)
