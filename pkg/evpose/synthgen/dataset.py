"""Random motion scripts and whole synthetic datasets on disk.

Layout:
  root/manifest.jsonl              one JSON object per sequence
  root/seq_<id>/events.evt1
  root/seq_<id>/poses.jsonl
"""

import json
import logging
import math
import shutil
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from evpose.events import DEFAULT_INTERVAL, write_events
from evpose.exceptions import InvalidArgument
from evpose.pose import JOINTS, write_poses
from evpose.settings import worker_count
from evpose.synthgen.simulate import SynthSample, simulate
from evpose.synthgen.skeleton import MotionScript, Oscillation, SkeletonSpec, StaticEpisode, default_skeleton
from evpose.typing import PathArg

logger = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"
SPEEDS = {"slow": (0.3, 0.6), "medium": (0.6, 1.2), "fast": (1.2, 2.4)}

# kind -> (joint, amplitude in degrees, phase offset in half turns)
MOTIONS = {
    "waving": (
        ("l_elbow", 70, 0.0),
        ("l_wrist", 35, 0.5),
        ("r_elbow", 20, 1.0),
    ),
    "boxing": (
        ("l_elbow", 45, 0.0),
        ("l_wrist", 60, 0.25),
        ("r_elbow", 45, 1.0),
        ("r_wrist", 60, 1.25),
    ),
    "kicking": (
        ("l_knee", 50, 0.0),
        ("l_ankle", 40, 0.5),
        ("l_elbow", 10, 1.0),
    ),
    "marching": (
        ("l_knee", 30, 0.0),
        ("l_ankle", 30, 0.5),
        ("r_knee", 30, 1.0),
        ("r_ankle", 30, 1.5),
        ("l_elbow", 25, 1.0),
        ("r_elbow", 25, 0.0),
    ),
}
KINDS = tuple(MOTIONS)


def random_script(  # pylint: disable=too-many-arguments
    spec: SkeletonSpec,
    kind: str,
    speed: str,
    duration: int,
    rng: np.random.Generator,
    static: bool = False,
    origin: tuple[float, float] = (64.0, 64.0),
) -> MotionScript:
    """A jittered script of one motion kind in one speed band.

    A static script freezes one moving limb, from its torso attachment
    down, for 25% to 50% of the duration.
    """
    if kind not in MOTIONS:
        raise InvalidArgument(f"motion {kind!r} not one of {KINDS}")
    if speed not in SPEEDS:
        raise InvalidArgument(f"speed {speed!r} not one of {tuple(SPEEDS)}")
    freq = rng.uniform(*SPEEDS[speed])
    base_phase = rng.uniform(0, 2 * np.pi)
    angles = {}
    for name, amplitude, half_turns in MOTIONS[kind]:
        angles[JOINTS[name]] = [
            Oscillation(amplitude * rng.uniform(0.8, 1.2), freq, base_phase + np.pi * half_turns)
        ]
    translation = (
        Oscillation(rng.uniform(1.0, 3.0), freq / 2, rng.uniform(0, 2 * np.pi)),
        Oscillation(rng.uniform(0.5, 1.5), freq / 2, rng.uniform(0, 2 * np.pi)),
    )
    episodes = []
    if static:
        limbs = sorted({_limb_root(spec, j) for j in angles})
        root = limbs[rng.integers(len(limbs))]
        span = math.ceil(duration * rng.uniform(0.25, 0.5))
        start = int(rng.integers(0, duration - span + 1))
        episodes.append(StaticEpisode(root, start, start + span))
    return MotionScript(angles, episodes, translation, origin)


def _limb_root(spec: SkeletonSpec, j: int) -> int:
    chain = [j] + spec.ancestors(j)
    return chain[-1]


def make_sequence(  # pylint: disable=too-many-arguments
    index: int,
    seed: int,
    duration: int,
    interval: int,
    speed_mix: Mapping[str, float],
    static: bool,
    width: int = 128,
    height: int = 128,
    rate_per_px_speed: float = 2.0,
    noise_rate: float = 0.0,
) -> SynthSample:
    """One sequence, drawn entirely from the stream seeded by (seed, index)."""
    rng = np.random.default_rng([seed, index])
    spec = default_skeleton()
    kind = KINDS[int(rng.integers(len(KINDS)))]
    bands = sorted(speed_mix)
    weights = np.array([speed_mix[b] for b in bands], dtype=np.float64)
    speed = bands[int(rng.choice(len(bands), p=weights / weights.sum()))]
    script = random_script(spec, kind, speed, duration, rng, static, (width / 2, height / 2))
    sample = simulate(
        spec,
        script,
        duration,
        rate_per_px_speed,
        noise_rate,
        width=width,
        height=height,
        interval=interval,
        action=f"{kind}_{speed}",
        rng=rng,
    )
    sample.meta.update({"kind": kind, "speed": speed, "static": static, "episodes": len(script.episodes)})
    return sample


def _check_fraction(name: str, value: float) -> None:
    if not 0 <= value <= 1:
        raise InvalidArgument(f"{name} must be in [0, 1], got {value}")


def make_dataset(  # pylint: disable=too-many-arguments,too-many-locals
    out: PathArg,
    n_sequences: int,
    duration: int = 1_000_000,
    interval: int = DEFAULT_INTERVAL,
    speed_mix: Optional[Mapping[str, float]] = None,
    static_episode_fraction: float = 0.5,
    seed: int = 0,
    overwrite: bool = False,
    width: int = 128,
    height: int = 128,
    rate_per_px_speed: float = 2.0,
    noise_rate: float = 0.0,
    threads: Optional[int] = None,
) -> list[dict]:
    """Generates and writes a dataset, returning the manifest rows.

    Sequences split train/test by the parity of their position in a
    seeded shuffle. The first ceil(static_episode_fraction * n) sequences
    of a second seeded shuffle get a static episode.

    Raises:
      FileExistsError: out already holds a dataset and overwrite is off
    """
    if n_sequences < 1:
        raise InvalidArgument(f"need at least one sequence, got {n_sequences}")
    _check_fraction("static_episode_fraction", static_episode_fraction)
    speed_mix = dict(speed_mix or {s: 1.0 for s in SPEEDS})
    unknown = set(speed_mix) - set(SPEEDS)
    if unknown or not speed_mix or any(w < 0 for w in speed_mix.values()) or sum(speed_mix.values()) <= 0:
        raise InvalidArgument(f"bad speed mix {speed_mix}")
    out = Path(out)
    existing = out.exists() and any(out.iterdir())
    if existing and not overwrite:
        raise FileExistsError(f"{out} is not empty; pass overwrite to replace it")
    if existing:
        (out / MANIFEST).unlink(missing_ok=True)
        for old in out.glob("seq_*"):
            shutil.rmtree(old)
    out.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    split_order = rng.permutation(n_sequences)
    splits = {int(i): ("train" if pos % 2 == 0 else "test") for pos, i in enumerate(split_order)}
    n_static = math.ceil(static_episode_fraction * n_sequences)
    static = set(int(i) for i in rng.permutation(n_sequences)[:n_static])
    width_digits = max(4, len(str(n_sequences - 1)))

    def build(index: int) -> dict:
        seq_id = f"{index:0{width_digits}d}"
        sample = make_sequence(
            index,
            seed,
            duration,
            interval,
            speed_mix,
            index in static,
            width,
            height,
            rate_per_px_speed,
            noise_rate,
        )
        folder = out / f"seq_{seq_id}"
        write_events(sample.stream, folder / "events.evt1")
        write_poses(sample.poses, folder / "poses.jsonl")
        logger.info("sequence %s: %s, %d events", seq_id, sample.action, len(sample.stream))
        return {
            "id": seq_id,
            "split": splits[index],
            "action": sample.action,
            "kind": sample.meta["kind"],
            "speed": sample.meta["speed"],
            "static": sample.meta["static"],
            "seed": seed,
            "index": index,
            "interval": interval,
            "duration": duration,
            "frames": len(sample.poses),
            "events": len(sample.stream),
            "width": width,
            "height": height,
        }

    with ThreadPoolExecutor(max_workers=threads or worker_count()) as pool:
        rows = list(pool.map(build, range(n_sequences)))
    with open(out / MANIFEST, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True, separators=(",", ":")))
            f.write("\n")
    return rows
