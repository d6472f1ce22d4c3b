"""Event streams, their file formats, and frame accumulation.

Typical usage:

from evpose.events import read_events, stream_to_frames, normalize_frame

stream = read_events("seq_0000/events.evt1")

frames = stream_to_frames(stream, interval=8333)

inputs = [normalize_frame(f, 8) for f in frames.frames]
"""

from evpose.events.frames import (
    DEFAULT_COUNT_CAP,
    DEFAULT_INTERVAL,
    CropWindow,
    EventFrame,
    FrameSequence,
    accumulate_frame,
    crop_frame,
    event_centroid,
    normalize_frame,
    packet_times,
    slice_packets,
    stream_to_frames,
)
from evpose.events.stream import (
    EVENT_DTYPE,
    Event,
    EventStream,
    empty_events,
    make_events,
    read_events,
    write_events,
)
