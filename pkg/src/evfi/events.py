"""Raw event streams, temporal splitting, and voxel-grid encoding.

An event is a signed brightness-change spike (x, y, p, t) with polarity
p in {-1, +1} and timestamp t in microseconds.  Streams are kept columnar
(numpy arrays) so that encoding 1e5+ events stays cheap; individual
``Event`` records are materialized only on demand.

The voxel grid distributes each event's polarity over the two nearest of
B temporal bins with a hat (bilinear) kernel.  Normalized bin position is
computed from the stream's declared window bounds [t_start, t_end], not
from the first/last event times, so that the two segments of a tau-split
stream stay aligned to the split instant and edge bins may be empty.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

EVT1_MAGIC = b"EVT1"
EVT1_HEADER = struct.Struct("<4sHHII")  # magic, sensor_w, sensor_h, t_start, t_end
EVT1_RECORD_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("t", "<u8")])
EVT1_RECORD_SIZE = EVT1_RECORD_DTYPE.itemsize  # 13 bytes


class EventFileError(ValueError):
    """Malformed .evt1 file; ``offset`` is the byte offset of the defect."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Event:
    """A single polarity spike at pixel (x, y) and time t (microseconds)."""

    x: int
    y: int
    p: int
    t: int

    def __post_init__(self):
        if self.p not in (-1, 1):
            raise ValueError(f"polarity must be -1 or +1, got {self.p}")
        if self.t < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.t}")


class EventStream:
    """Time-ordered events over a window [t_start, t_end] on a fixed sensor.

    Stored columnar: ``xs``, ``ys`` (int64), ``ps`` (int8), ``ts`` (int64),
    all the same length and sorted non-decreasing by ``ts``.
    """

    def __init__(self, xs, ys, ps, ts, t_start, t_end, sensor_h, sensor_w):
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        ps = np.asarray(ps, dtype=np.int8)
        ts = np.asarray(ts, dtype=np.int64)
        n = len(ts)
        if not (len(xs) == len(ys) == len(ps) == n):
            raise ValueError("event columns must have equal length")
        if t_end < t_start:
            raise ValueError(f"window end {t_end} before start {t_start}")
        if n:
            if np.any(np.diff(ts) < 0):
                raise ValueError("event timestamps must be sorted non-decreasing")
            if ts[0] < t_start or ts[-1] > t_end:
                raise ValueError(
                    f"event timestamps [{ts.min()}, {ts.max()}] fall outside "
                    f"window [{t_start}, {t_end}]"
                )
            bad = (xs < 0) | (xs >= sensor_w) | (ys < 0) | (ys >= sensor_h)
            if np.any(bad):
                i = int(np.argmax(bad))
                raise ValueError(
                    f"event {i} at (x={xs[i]}, y={ys[i]}) outside "
                    f"{sensor_w}x{sensor_h} sensor"
                )
            if not np.all(np.isin(ps, (-1, 1))):
                i = int(np.argmax(~np.isin(ps, (-1, 1))))
                raise ValueError(f"event {i} has polarity {ps[i]}, expected -1 or +1")
        self.xs = xs
        self.ys = ys
        self.ps = ps
        self.ts = ts
        self.t_start = t_start
        self.t_end = t_end
        self.sensor_h = int(sensor_h)
        self.sensor_w = int(sensor_w)

    @classmethod
    def empty(cls, t_start, t_end, sensor_h, sensor_w):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z.astype(np.int8), z, t_start, t_end, sensor_h, sensor_w)

    @classmethod
    def from_events(cls, events, t_start, t_end, sensor_h, sensor_w):
        events = list(events)
        xs = np.array([e.x for e in events], dtype=np.int64)
        ys = np.array([e.y for e in events], dtype=np.int64)
        ps = np.array([e.p for e in events], dtype=np.int8)
        ts = np.array([e.t for e in events], dtype=np.int64)
        return cls(xs, ys, ps, ts, t_start, t_end, sensor_h, sensor_w)

    def __len__(self):
        return len(self.ts)

    def __getitem__(self, i):
        return Event(int(self.xs[i]), int(self.ys[i]), int(self.ps[i]), int(self.ts[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def signed_count(self):
        """Sum of polarities over the whole stream."""
        return int(self.ps.astype(np.int64).sum())


@dataclass
class VoxelGrid:
    """Signed event accumulation over B temporal bins, shape (B, H, W)."""

    data: np.ndarray  # float32

    @property
    def num_bins(self):
        return self.data.shape[0]

    def total_mass(self):
        return float(self.data.sum(dtype=np.float64))


def voxelize(stream: EventStream, num_bins: int, height: int, width: int) -> VoxelGrid:
    """Encode a stream into a (num_bins, height, width) voxel grid.

    Each event contributes its polarity split bilinearly between the two
    integer bins nearest to its normalized position
    (t - t_start) / (t_end - t_start) * (num_bins - 1).  A degenerate
    window (t_end == t_start) puts everything in bin 0; an empty stream
    gives an all-zero grid.
    """
    if num_bins < 2:
        raise ValueError(f"need at least 2 temporal bins, got {num_bins}")
    if (stream.sensor_h, stream.sensor_w) != (height, width):
        raise ValueError(
            f"stream resolution {stream.sensor_w}x{stream.sensor_h} does not "
            f"match requested {width}x{height}"
        )
    grid = np.zeros((num_bins, height, width), dtype=np.float64)
    n = len(stream)
    if n:
        window = float(stream.t_end - stream.t_start)
        if window > 0:
            k = (stream.ts - stream.t_start) / window * (num_bins - 1)
            k = np.clip(k, 0.0, float(num_bins - 1))
        else:
            k = np.zeros(n)
        k0 = np.floor(k).astype(np.int64)
        frac = k - k0
        p = stream.ps.astype(np.float64)
        flat = grid.reshape(num_bins, -1)
        pix = stream.ys * width + stream.xs
        np.add.at(flat, (k0, pix), p * (1.0 - frac))
        hi = frac > 0
        np.add.at(flat, (np.minimum(k0[hi] + 1, num_bins - 1), pix[hi]), p[hi] * frac[hi])
    return VoxelGrid(grid.astype(np.float32))


def split_at_tau(stream: EventStream, tau: float):
    """Split a stream at t_start + tau * (t_end - t_start).

    Events with t <= split time (ties included) go to the first segment.
    The two segments partition the input and carry the sub-windows
    [t_start, t_split] and [t_split, t_end].
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly inside (0, 1), got {tau}")
    t_split = stream.t_start + tau * (stream.t_end - stream.t_start)
    first = stream.ts <= t_split
    second = ~first
    a = EventStream(
        stream.xs[first], stream.ys[first], stream.ps[first], stream.ts[first],
        stream.t_start, t_split, stream.sensor_h, stream.sensor_w,
    )
    b = EventStream(
        stream.xs[second], stream.ys[second], stream.ps[second], stream.ts[second],
        t_split, stream.t_end, stream.sensor_h, stream.sensor_w,
    )
    return a, b


def write_events(stream: EventStream, path):
    """Serialize a stream to the binary .evt1 format (see module docs)."""
    for name, v in (("t_start", stream.t_start), ("t_end", stream.t_end)):
        if v != int(v):
            raise ValueError(f"{name}={v} is not an integral microsecond count")
        if not 0 <= int(v) < 2**32:
            raise ValueError(f"{name}={v} does not fit the u32 header field")
    header = EVT1_HEADER.pack(
        EVT1_MAGIC, stream.sensor_w, stream.sensor_h,
        int(stream.t_start), int(stream.t_end),
    )
    records = np.empty(len(stream), dtype=EVT1_RECORD_DTYPE)
    records["x"] = stream.xs
    records["y"] = stream.ys
    records["p"] = stream.ps
    records["t"] = stream.ts
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def read_events(path) -> EventStream:
    """Parse a binary .evt1 file, validating structure record by record."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < EVT1_HEADER.size:
        raise EventFileError("truncated header", len(blob))
    magic, sensor_w, sensor_h, t_start, t_end = EVT1_HEADER.unpack_from(blob)
    if magic != EVT1_MAGIC:
        raise EventFileError(f"bad magic {magic!r}", 0)
    body = blob[EVT1_HEADER.size:]
    n_full, leftover = divmod(len(body), EVT1_RECORD_SIZE)
    if leftover:
        raise EventFileError(
            "truncated record", EVT1_HEADER.size + n_full * EVT1_RECORD_SIZE
        )
    records = np.frombuffer(body, dtype=EVT1_RECORD_DTYPE)
    bad_p = ~np.isin(records["p"], (-1, 1))
    if np.any(bad_p):
        i = int(np.argmax(bad_p))
        raise EventFileError(
            f"polarity {records['p'][i]} out of range",
            EVT1_HEADER.size + i * EVT1_RECORD_SIZE + 4,
        )
    ts = records["t"].astype(np.int64)
    if len(ts) and np.any(np.diff(ts) < 0):
        i = int(np.argmax(np.diff(ts) < 0)) + 1
        raise EventFileError(
            "timestamps not sorted", EVT1_HEADER.size + i * EVT1_RECORD_SIZE + 5
        )
    return EventStream(
        records["x"].astype(np.int64), records["y"].astype(np.int64),
        records["p"].astype(np.int8), ts,
        t_start, t_end, sensor_h, sensor_w,
    )
