"""Slicing event streams into packets and packets into 2-channel frames.

Channel 0 counts negative-polarity events, channel 1 positive ones.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from evpose.events.stream import EventStream, check_bounds, first_unsorted
from evpose.exceptions import InvalidArgument, InvalidInput
from evpose.pose import Pose
from evpose.typing import Microseconds, Point

logger = logging.getLogger(__name__)

DEFAULT_INTERVAL = 8333  # µs, 8.333 ms truncated to whole microseconds
DEFAULT_COUNT_CAP = 8


@dataclass(frozen=True)
class EventFrame:
    """Per-pixel, per-polarity event histogram over [t_start, t_end).

    Attributes:
      grid: float64 array of shape (2, height, width), values >= 0
      t_start, t_end: interval bounds in µs
    """

    grid: np.ndarray
    t_start: Microseconds = 0
    t_end: Microseconds = 1

    def __post_init__(self):
        if self.grid.ndim != 3 or self.grid.shape[0] != 2:
            raise InvalidArgument(f"frame grid must be (2, H, W), got {self.grid.shape}")
        if self.t_start >= self.t_end:
            raise InvalidArgument(f"t_start {self.t_start} >= t_end {self.t_end}")

    @property
    def width(self) -> int:
        """Columns."""
        return self.grid.shape[2]

    @property
    def height(self) -> int:
        """Rows."""
        return self.grid.shape[1]


@dataclass
class FrameSequence:
    """T consecutive frames that tile time, with optional per-frame poses."""

    frames: list[EventFrame]
    poses: Optional[list[Pose]] = None
    frame_interval: Microseconds = DEFAULT_INTERVAL
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for a, b in zip(self.frames, self.frames[1:]):
            if a.t_end != b.t_start:
                raise InvalidInput(f"frames don't tile: {a.t_end} != {b.t_start}")
        if self.poses is not None and len(self.poses) != len(self.frames):
            raise InvalidInput(f"{len(self.frames)} frames but {len(self.poses)} poses")

    def __len__(self):
        return len(self.frames)

    def stack(self) -> np.ndarray:
        """Frames as one (T, 2, H, W) array."""
        return np.stack([f.grid for f in self.frames])


def slice_packets(
    stream: EventStream,
    interval: Microseconds,
    t0: Optional[Microseconds] = None,
    duration: Optional[Microseconds] = None,
) -> list[np.ndarray]:
    """Cuts a stream into contiguous fixed-length packets.

    Event e lands in packet floor((e.t - t0) / interval). Empty packets
    between occupied ones are kept, and ``duration`` pads the list with
    trailing empties up to ceil(duration / interval) packets.

    Arguments:
      stream: source events
      interval: packet length in µs
      t0: start of packet 0, defaults to the first timestamp (0 if empty)
      duration: minimum covered time in µs

    Returns:
      A list of record arrays (views into stream.events).
    """
    if interval <= 0:
        raise InvalidArgument(f"interval must be positive, got {interval}")
    ts = stream.events["t"]
    if first_unsorted(stream.events) is not None:
        raise InvalidInput("event stream is not sorted by time")
    if t0 is None:
        t0 = int(ts[0]) if len(ts) else 0
    if len(ts) and t0 > ts[0]:
        raise InvalidArgument(f"t0 {t0} is after the first event at {int(ts[0])}")
    n = int((int(ts[-1]) - t0) // interval) + 1 if len(ts) else 0
    if duration is not None:
        n = max(n, math.ceil(duration / interval))
    edges = t0 + interval * np.arange(n + 1, dtype=np.uint64)
    cuts = np.searchsorted(ts, edges[1:-1], side="left")
    packets = np.split(stream.events, cuts) if n else []
    logger.debug("sliced %d events into %d packets of %d µs", len(ts), n, interval)
    return packets


def packet_times(n: int, interval: Microseconds, t0: Microseconds) -> list[tuple[int, int]]:
    """(t_start, t_end) for each of n packets."""
    return [(t0 + i * interval, t0 + (i + 1) * interval) for i in range(n)]


def accumulate_frame(
    packet: np.ndarray,
    width: int,
    height: int,
    t_start: Microseconds = 0,
    t_end: Optional[Microseconds] = None,
) -> EventFrame:
    """Counts a packet's events per pixel and polarity."""
    check_bounds(packet, width, height)
    channel = (packet["p"] > 0).astype(np.int64)
    flat = (channel * height + packet["v"].astype(np.int64)) * width + packet["u"].astype(np.int64)
    counts = np.bincount(flat, minlength=2 * height * width).astype(np.float64)
    if t_end is None:
        t_end = t_start + 1
    return EventFrame(counts.reshape(2, height, width), t_start, t_end)


def normalize_frame(frame: EventFrame, count_cap: int = DEFAULT_COUNT_CAP) -> EventFrame:
    """Clips counts at count_cap and rescales into [0, 1]."""
    if count_cap < 1:
        raise InvalidArgument(f"count_cap must be >= 1, got {count_cap}")
    grid = np.minimum(frame.grid, count_cap) / count_cap
    return EventFrame(grid, frame.t_start, frame.t_end)


@dataclass(frozen=True)
class CropWindow:
    """A size x size window whose centre pixel is ``center``.

    Source pixel (x, y) lands at (x - x0, y - y0) in the crop.
    """

    center: Point
    size: int

    def __post_init__(self):
        if self.size <= 0:
            raise InvalidArgument(f"crop size must be positive, got {self.size}")

    @property
    def x0(self) -> int:
        """Source column of crop column 0."""
        return int(self.center[0]) - self.size // 2

    @property
    def y0(self) -> int:
        """Source row of crop row 0."""
        return int(self.center[1]) - self.size // 2

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        """Source (K, 2) coordinates to crop coordinates."""
        return np.asarray(points, dtype=np.float64) - (self.x0, self.y0)

    def invert_points(self, points: np.ndarray) -> np.ndarray:
        """Crop (K, 2) coordinates back to source coordinates."""
        return np.asarray(points, dtype=np.float64) + (self.x0, self.y0)

    def apply_pose(self, pose: Pose) -> Pose:
        """Shifts a pose into the crop."""
        return pose.moved(self.apply_points(pose.joints))

    def invert_pose(self, pose: Pose) -> Pose:
        """Shifts a crop pose back to the source."""
        return pose.moved(self.invert_points(pose.joints))

    def apply_events(self, packet: np.ndarray) -> np.ndarray:
        """Shifts events into the crop, dropping those that fall outside."""
        u = packet["u"].astype(np.int64) - self.x0
        v = packet["v"].astype(np.int64) - self.y0
        keep = (u >= 0) & (u < self.size) & (v >= 0) & (v < self.size)
        out = packet[keep].copy()
        out["u"] = u[keep]
        out["v"] = v[keep]
        return out


def crop_frame(frame: EventFrame, center: Point, size: int) -> EventFrame:
    """Cuts a size x size window centred on ``center``, zero-padding overhang."""
    window = CropWindow(center, size)
    out = np.zeros((2, size, size), dtype=frame.grid.dtype)
    sx0, sy0 = max(window.x0, 0), max(window.y0, 0)
    sx1, sy1 = min(window.x0 + size, frame.width), min(window.y0 + size, frame.height)
    if sx0 < sx1 and sy0 < sy1:
        out[:, sy0 - window.y0 : sy1 - window.y0, sx0 - window.x0 : sx1 - window.x0] = (
            frame.grid[:, sy0:sy1, sx0:sx1]
        )
    return EventFrame(out, frame.t_start, frame.t_end)


def event_centroid(
    source: Union[EventFrame, np.ndarray],
    width: Optional[int] = None,
    height: Optional[int] = None,
) -> Point:
    """Count-weighted mean pixel of a frame or packet, rounded half up.

    An empty frame/packet yields the frame centre (width // 2, height // 2);
    packets need width and height for that fallback.
    """
    if isinstance(source, EventFrame):
        width, height = source.width, source.height
        weights = source.grid.sum(axis=0)
        total = weights.sum()
        if total > 0:
            ys, xs = np.indices(weights.shape)
            x = (weights * xs).sum() / total
            y = (weights * ys).sum() / total
            return int(math.floor(x + 0.5)), int(math.floor(y + 0.5))
    elif len(source):
        x = source["u"].astype(np.float64).mean()
        y = source["v"].astype(np.float64).mean()
        return int(math.floor(x + 0.5)), int(math.floor(y + 0.5))
    if width is None or height is None:
        raise InvalidArgument("empty packet centroid needs width and height")
    return width // 2, height // 2


def stream_to_frames(
    stream: EventStream,
    interval: Microseconds = DEFAULT_INTERVAL,
    t0: Optional[Microseconds] = None,
    duration: Optional[Microseconds] = None,
) -> FrameSequence:
    """slice_packets + accumulate_frame over a whole stream, raw counts."""
    if t0 is None:
        t0 = stream.span()[0]
    packets = slice_packets(stream, interval, t0, duration)
    frames = [
        accumulate_frame(p, stream.width, stream.height, ts, te)
        for p, (ts, te) in zip(packets, packet_times(len(packets), interval, t0))
    ]
    return FrameSequence(frames, frame_interval=interval)
