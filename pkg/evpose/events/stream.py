"""Event records, event streams and their two file formats.

Streams keep their events in one packed numpy structured array whose
layout is exactly an EVT1 record, so binary IO is a straight byte copy.

EVT1 (little-endian):
  header: b"EVT1", u16 width, u16 height, u64 count
  record: u16 u, u16 v, u64 t (microseconds), i8 polarity

Text: a header line {"width":W,"height":H} then one {"u":..,"v":..,"t":..,"p":..}
object per line.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Iterator, NamedTuple, Optional

import numpy as np

from evpose.exceptions import FormatError, InvalidArgument, InvalidInput
from evpose.typing import Microseconds, PathArg

logger = logging.getLogger(__name__)

EVENT_DTYPE = np.dtype([("u", "<u2"), ("v", "<u2"), ("t", "<u8"), ("p", "i1")])
MAGIC = b"EVT1"
HEADER = struct.Struct("<4sHHQ")
DIMS_OFFSET = 4  # width, height follow the magic
FORMATS = ("evt1", "text")


class Event(NamedTuple):
    """One brightness change: column u, row v, time t (µs), polarity ±1."""

    u: int
    v: int
    t: Microseconds
    polarity: int


def empty_events(n: int = 0) -> np.ndarray:
    """Zeroed record array of length n."""
    return np.zeros(n, dtype=EVENT_DTYPE)


def make_events(u, v, t, p) -> np.ndarray:
    """Packs column arrays into a record array."""
    u = np.asarray(u)
    out = empty_events(len(u))
    out["u"] = u
    out["v"] = v
    out["t"] = t
    out["p"] = p
    return out


def first_out_of_bounds(events: np.ndarray, width: int, height: int) -> Optional[int]:
    """Index of the first event outside the sensor or with bad polarity, or None."""
    bad = (events["u"] >= width) | (events["v"] >= height) | (np.abs(events["p"]) != 1)
    return int(np.argmax(bad)) if bad.any() else None


def check_bounds(events: np.ndarray, width: int, height: int) -> None:
    """Raises InvalidInput naming the first event outside the sensor or with bad polarity."""
    i = first_out_of_bounds(events, width, height)
    if i is not None:
        e = events[i]
        raise InvalidInput(
            f"event {i} (u={e['u']}, v={e['v']}, p={e['p']}) "
            f"outside {width}x{height} sensor or polarity not ±1"
        )


def first_unsorted(events: np.ndarray) -> Optional[int]:
    """Index of the first event older than its predecessor, None if sorted."""
    if len(events) < 2:
        return None
    drops = np.flatnonzero(events["t"][1:] < events["t"][:-1])
    return int(drops[0]) + 1 if len(drops) else None


class EventStream:
    """Time-ordered events from one sensor.

    Attributes:
      width, height: sensor size in pixels
      events: EVENT_DTYPE record array, non-decreasing in t
    """

    def __init__(self, width: int, height: int, events: Optional[np.ndarray] = None):
        if width <= 0 or height <= 0 or width > 0xFFFF or height > 0xFFFF:
            raise InvalidArgument(f"bad sensor size {width}x{height}")
        self.width = int(width)
        self.height = int(height)
        self.events = empty_events() if events is None else np.asarray(events, EVENT_DTYPE)
        check_bounds(self.events, self.width, self.height)
        unsorted = first_unsorted(self.events)
        if unsorted is not None:
            raise InvalidInput(f"event {unsorted} is earlier than event {unsorted - 1}")

    @classmethod
    def from_events(cls, width: int, height: int, events: list[Event]) -> "EventStream":
        """Builds a stream from Event tuples."""
        cols = np.asarray(events, dtype=np.int64).reshape(-1, 4)
        return cls(width, height, make_events(cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3]))

    def __repr__(self):
        return f"{self.__class__.__name__}({self.width}x{self.height}, {len(self)} events)"

    def __len__(self):
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        for u, v, t, p in self.events.tolist():
            yield Event(u, v, t, p)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.events.tobytes() == other.events.tobytes()
        )

    def span(self) -> tuple[Microseconds, Microseconds]:
        """(first, last) timestamps; (0, 0) when empty."""
        if not len(self):
            return 0, 0
        return int(self.events["t"][0]), int(self.events["t"][-1])

    def time_window(self, t_start: Microseconds, t_end: Microseconds) -> np.ndarray:
        """Events with t_start <= t < t_end."""
        ts = self.events["t"]
        lo, hi = np.searchsorted(ts, [t_start, t_end], side="left")
        return self.events[lo:hi]


def write_events(stream: EventStream, path: PathArg, format: str = "evt1") -> None:  # pylint: disable=redefined-builtin
    """Writes a stream as EVT1 (bit-exact) or text (value-exact)."""
    if format not in FORMATS:
        raise InvalidArgument(f"unknown event format {format!r}, want one of {FORMATS}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if format == "evt1":
        with open(path, "wb") as f:
            f.write(HEADER.pack(MAGIC, stream.width, stream.height, len(stream)))
            f.write(stream.events.tobytes())
    else:
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps({"width": stream.width, "height": stream.height}))
            f.write("\n")
            for e in stream:
                f.write(json.dumps({"u": e.u, "v": e.v, "t": e.t, "p": e.polarity}))
                f.write("\n")
    logger.debug("wrote %s as %s to %s", stream, format, path)


def read_events(path: PathArg) -> EventStream:
    """Reads EVT1 or text, sniffing the magic bytes.

    Raises:
      FormatError: bad magic, truncated record, unsorted or out-of-bounds
        events, with the byte offset (EVT1) or line number (text).
    """
    with open(path, "rb") as f:
        head = f.read(4)
    if head == MAGIC:
        return _read_evt1(path)
    if head[:1] == b"{":
        return _read_text(path)
    raise FormatError(f"bad magic {head!r}", path=path, offset=0)


def _read_evt1(path: PathArg) -> EventStream:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < HEADER.size:
        raise FormatError("truncated header", path=path, offset=len(blob))
    _, width, height, count = HEADER.unpack_from(blob)
    body = len(blob) - HEADER.size
    need = count * EVENT_DTYPE.itemsize
    if body < need:
        whole = body // EVENT_DTYPE.itemsize
        raise FormatError(
            f"truncated record {whole} of {count}",
            path=path,
            offset=HEADER.size + whole * EVENT_DTYPE.itemsize,
        )
    if body > need:
        raise FormatError("trailing bytes after last record", path=path, offset=HEADER.size + need)
    events = np.frombuffer(blob, dtype=EVENT_DTYPE, count=count, offset=HEADER.size).copy()
    bad = first_unsorted(events)
    if bad is not None:
        raise FormatError(
            f"event {bad} out of time order",
            path=path,
            offset=HEADER.size + bad * EVENT_DTYPE.itemsize,
        )
    bad = first_out_of_bounds(events, width, height)
    if bad is not None:
        e = events[bad]
        raise FormatError(
            f"event {bad} (u={e['u']}, v={e['v']}, p={e['p']}) "
            f"outside {width}x{height} sensor or polarity not ±1",
            path=path,
            offset=HEADER.size + bad * EVENT_DTYPE.itemsize,
        )
    try:
        return EventStream(width, height, events)
    except (InvalidInput, InvalidArgument) as e:
        raise FormatError(str(e), path=path, offset=DIMS_OFFSET) from e


def _read_text(path: PathArg) -> EventStream:
    rows = []
    width = height = None
    last_t = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if width is None:
                    width, height = int(obj["width"]), int(obj["height"])
                    continue
                row = (int(obj["u"]), int(obj["v"]), int(obj["t"]), int(obj["p"]))
            except (ValueError, KeyError, TypeError) as e:
                raise FormatError(f"bad event line: {e}", path=path, line=lineno) from e
            if not (0 <= row[0] < width and 0 <= row[1] < height and row[3] in (-1, 1) and row[2] >= 0):
                raise FormatError(f"event {row} invalid for {width}x{height}", path=path, line=lineno)
            if last_t is not None and row[2] < last_t:
                raise FormatError("event out of time order", path=path, line=lineno)
            last_t = row[2]
            rows.append(row)
    if width is None:
        raise FormatError("missing header line", path=path, line=1)
    cols = np.asarray(rows, dtype=np.int64).reshape(-1, 4)
    return EventStream(width, height, make_events(cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3]))
