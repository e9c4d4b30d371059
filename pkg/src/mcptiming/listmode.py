"""List-mode record I/O, tag-filtered histogramming and tag statistics.

File format: a header line ``ticks_ps=<tick>,version=1`` followed by one
``<interval_ticks>,<tag>`` line per record, LF line endings.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Union

import numpy as np

FORMAT_VERSION = 1
DEFAULT_TICK_PS = 0.305

_HEADER_RE = re.compile(r"^ticks_ps=([0-9.eE+-]+),version=(\d+)$")
_RECORD_RE = re.compile(r"(-?\d+),(\d+)")


class ListModeError(ValueError):
    pass


class ParseError(ListModeError):
    def __init__(self, line_no: int, msg: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {msg}")


class VersionError(ListModeError):
    pass


class ListModeRecord(NamedTuple):
    interval_ticks: int
    tag: int


@dataclass
class ListModeData:
    """Column-oriented records plus the tick size read from the header."""

    interval_ticks: np.ndarray
    tags: np.ndarray
    tick_ps: float = DEFAULT_TICK_PS

    def __post_init__(self):
        self.interval_ticks = np.asarray(self.interval_ticks, dtype=np.int64)
        self.tags = np.asarray(self.tags, dtype=np.int64)
        if self.interval_ticks.shape != self.tags.shape:
            raise ListModeError("interval and tag columns differ in length")
        if len(self.tags) and (self.tags.min() < 0 or self.tags.max() > 15):
            raise ListModeError("tags must lie in [0, 15]")

    def __len__(self):
        return len(self.tags)

    @property
    def records(self) -> list[ListModeRecord]:
        return [ListModeRecord(int(t), int(g)) for t, g in zip(self.interval_ticks, self.tags)]

    @classmethod
    def from_records(cls, records: Iterable[ListModeRecord], tick_ps=DEFAULT_TICK_PS):
        recs = list(records)
        ticks = np.fromiter((r[0] for r in recs), dtype=np.int64, count=len(recs))
        tags = np.fromiter((r[1] for r in recs), dtype=np.int64, count=len(recs))
        return cls(ticks, tags, tick_ps)


def _as_data(records, tick_ps=DEFAULT_TICK_PS) -> ListModeData:
    if isinstance(records, ListModeData):
        return records
    return ListModeData.from_records(records, tick_ps)


def format_tick(tick_ps: float) -> str:
    return repr(float(tick_ps))


def dumps(records, tick_ps: float = DEFAULT_TICK_PS) -> bytes:
    data = _as_data(records, tick_ps)
    out = io.StringIO()
    out.write(f"ticks_ps={format_tick(data.tick_ps)},version={FORMAT_VERSION}\n")
    if len(data):
        body = np.char.add(np.char.add(data.interval_ticks.astype(str), ","),
                           data.tags.astype(str))
        out.write("\n".join(body.tolist()))
        out.write("\n")
    return out.getvalue().encode("ascii")


def write_listmode(records, destination, tick_ps: float = DEFAULT_TICK_PS) -> bytes:
    """Serialise records to ``destination`` (path or binary file object);
    returns the bytes written."""
    payload = dumps(records, tick_ps)
    if hasattr(destination, "write"):
        destination.write(payload)
    else:
        with open(destination, "wb") as fh:
            fh.write(payload)
    return payload


def loads(payload: Union[bytes, str]) -> ListModeData:
    text = payload.decode("ascii") if isinstance(payload, bytes) else payload
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise VersionError("missing header line")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise VersionError(f"unrecognised header {lines[0]!r}")
    if int(m.group(2)) != FORMAT_VERSION:
        raise VersionError(f"unsupported list-mode version {m.group(2)}")
    tick = float(m.group(1))
    ticks = np.empty(len(lines) - 1, dtype=np.int64)
    tags = np.empty(len(lines) - 1, dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        m = _RECORD_RE.fullmatch(line)
        if m is None:
            raise ParseError(i + 2, f"malformed record {line!r}")
        ticks[i] = int(m.group(1))
        tags[i] = int(m.group(2))
        if not 0 <= tags[i] <= 15:
            raise ParseError(i + 2, f"tag {tags[i]} outside [0, 15]")
    return ListModeData(ticks, tags, tick)


def read_listmode(source) -> ListModeData:
    if hasattr(source, "read"):
        return loads(source.read())
    with open(source, "rb") as fh:
        return loads(fh.read())


# -- tag filters -----------------------------------------------------------

START_BIT = 1
STOP_BIT = 2


def tag_filter(spec: str) -> Callable[[np.ndarray], np.ndarray]:
    """Parse ``all``, ``nontagged`` or ``tag==N`` into a vectorised predicate."""
    spec = spec.strip()
    if spec == "all":
        return lambda tags: np.ones(len(tags), dtype=bool)
    if spec == "nontagged":
        return lambda tags: (np.asarray(tags) & (START_BIT | STOP_BIT)) == 0
    m = re.fullmatch(r"tag\s*==\s*(\d+)", spec)
    if m and 0 <= int(m.group(1)) <= 15:
        n = int(m.group(1))
        return lambda tags: np.asarray(tags) == n
    raise ValueError(f"bad tag filter {spec!r}; expected all, nontagged or tag==N")


# -- histograms ------------------------------------------------------------


@dataclass
class Histogram:
    bin_width_ticks: int
    origin_ticks: int
    counts: np.ndarray
    tick_ps: float = DEFAULT_TICK_PS
    out_of_range: int = 0
    n_selected: int = 0

    @property
    def edges_ticks(self) -> np.ndarray:
        return self.origin_ticks + self.bin_width_ticks * np.arange(len(self.counts) + 1)

    @property
    def centers_ps(self) -> np.ndarray:
        b = np.arange(len(self.counts))
        return (self.origin_ticks + (b + 0.5) * self.bin_width_ticks) * self.tick_ps

    @property
    def bin_width_ps(self) -> float:
        return self.bin_width_ticks * self.tick_ps

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "Histogram") -> "Histogram":
        if (self.bin_width_ticks, self.origin_ticks, len(self.counts)) != (
                other.bin_width_ticks, other.origin_ticks, len(other.counts)):
            raise ValueError("histograms have different binning")
        return Histogram(self.bin_width_ticks, self.origin_ticks,
                         self.counts + other.counts, self.tick_ps,
                         self.out_of_range + other.out_of_range,
                         self.n_selected + other.n_selected)

    def to_csv(self) -> str:
        lines = ["bin_center_ps,counts"]
        lines += [f"{c:.4f},{int(n)}" for c, n in zip(self.centers_ps, self.counts)]
        return "\n".join(lines) + "\n"


def build_histogram(records, filter=None, bin_width_ticks: int = 1,
                    range_ticks: tuple[int, int] = None,
                    tick_ps: float = None) -> Histogram:
    """Bin filtered records; bin ``b`` covers
    ``[lo + b*w, lo + (b+1)*w)`` in ticks. Records outside the range are
    counted in ``out_of_range``."""
    data = _as_data(records)
    if tick_ps is None:
        tick_ps = data.tick_ps
    w = int(bin_width_ticks)
    if w < 1:
        raise ValueError("bin width must be >= 1 tick")
    if range_ticks is None:
        raise ValueError("histogram range is required")
    lo, hi = int(range_ticks[0]), int(range_ticks[1])
    if hi <= lo:
        raise ValueError(f"empty histogram range [{lo}, {hi})")
    if isinstance(filter, str):
        filter = tag_filter(filter)
    sel = filter(data.tags) if filter is not None else np.ones(len(data), dtype=bool)
    ticks = data.interval_ticks[sel]
    nbins = -(-(hi - lo) // w)
    idx = (ticks - lo) // w
    inside = (ticks >= lo) & (idx < nbins)
    counts = np.bincount(idx[inside], minlength=nbins).astype(np.int64)
    return Histogram(w, lo, counts, tick_ps, int(np.count_nonzero(~inside)), int(len(ticks)))


def range_ps_to_ticks(lo_ps: float, hi_ps: float, tick_ps: float) -> tuple[int, int]:
    return math.floor(lo_ps / tick_ps), math.ceil(hi_ps / tick_ps)


# -- tag statistics --------------------------------------------------------


@dataclass(frozen=True)
class TagStatistics:
    nontagged_percent_start: float
    nontagged_percent_stop: float
    combined_x: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "combined_x",
                           math.hypot(self.nontagged_percent_start, self.nontagged_percent_stop))


def tag_statistics(records) -> TagStatistics:
    data = _as_data(records)
    if len(data) == 0:
        raise ValueError("tag statistics need at least one record")
    tags = data.tags
    start = 100.0 * np.count_nonzero((tags & START_BIT) == 0) / len(tags)
    stop = 100.0 * np.count_nonzero((tags & STOP_BIT) == 0) / len(tags)
    return TagStatistics(float(start), float(stop))
