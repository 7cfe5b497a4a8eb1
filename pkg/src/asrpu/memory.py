"""Simulated memory hierarchy: shared scratchpad buffers, model memory
with DMA prefetch, and the LRU cache used during hypothesis expansion.

Buffers are typed by item (a feature frame or an activation vector), not by
raw bytes, so setup-thread arithmetic stays testable.  Items are addressed
by their absolute position in the logical stream; readers keep independent
cursors and storage is trimmed to the lowest cursor.
"""

from collections import OrderedDict

import numpy as np

from .backend import NUMBA_ENABLED, njit
from .errors import CapacityError, SimulationError


class TensorBuffer:
    """Ring buffer of fixed-shape items backed by shared memory.

    The occupancy window of a buffer is ``[first_live, reserved_end)`` over
    the logical stream: reservations made by setup threads count as live
    immediately, commits fill them in kernel order, and ``consume`` moves a
    reader's cursor forward.  Storage below the lowest cursor is dropped by
    :meth:`trim`, which the engine calls after each kernel completes.
    """

    def __init__(self, name, item_shape, dtype, capacity_items, scale=1.0):
        self.name = name
        self.item_shape = tuple(item_shape)
        self.dtype = np.dtype(dtype)
        self.item_bytes = int(self.dtype.itemsize * int(np.prod(self.item_shape, initial=1)))
        self.capacity_items = int(capacity_items)
        self.scale = float(scale)  # dequantization scale for int8 buffers
        self._items = []
        self._base = 0  # absolute index of _items[0]
        self.written_end = 0  # absolute index past the last committed item
        self.reserved = 0  # reserved but not yet committed
        self.readers = {}

    # -- stream bookkeeping -------------------------------------------------

    @property
    def reserved_end(self):
        return self.written_end + self.reserved

    @property
    def first_live(self):
        if not self.readers:
            return self._base
        return min(self.readers.values())

    @property
    def live_items(self):
        return self.reserved_end - self.first_live

    @property
    def live_bytes(self):
        return self.live_items * self.item_bytes

    def add_reader(self, reader):
        if reader in self.readers:
            raise ValueError(f"duplicate reader {reader!r} on buffer {self.name!r}")
        self.readers[reader] = self._base

    def unread(self, reader):
        """Committed items the reader has not consumed yet."""

        return self.written_end - self.readers[reader]

    def cursor(self, reader):
        return self.readers[reader]

    def reserve(self, n_items):
        """Reserve output slots (called from a setup routine)."""

        if n_items < 0:
            raise ValueError("cannot reserve a negative item count")
        if (self.live_items + n_items) > self.capacity_items:
            raise CapacityError(
                f"buffer {self.name!r} overflow: {self.live_items} live + {n_items} "
                f"reserved > capacity {self.capacity_items}"
            )
        start = self.reserved_end
        self.reserved += n_items
        self._items.extend(
            np.zeros(self.item_shape, dtype=self.dtype) for _ in range(n_items)
        )
        return start

    def _slot(self, abs_index):
        """Raw access to a retained (committed or reserved) item for writes."""

        if not (self._base <= abs_index < self.reserved_end):
            raise SimulationError(
                f"buffer {self.name!r}: write to item {abs_index} outside "
                f"[{self._base}, {self.reserved_end})"
            )
        return self._items[abs_index - self._base]

    def write(self, abs_index, value):
        """Fill one reserved item (or a slice of it via write_slice)."""

        arr = self._slot(abs_index)
        arr[...] = value

    def write_slice(self, abs_index, lo, hi, value):
        self._slot(abs_index)[lo:hi] = value

    def commit(self, n_items):
        """Mark reserved items as written, in stream order."""

        if n_items > self.reserved:
            raise SimulationError(
                f"buffer {self.name!r}: committing {n_items} items with only "
                f"{self.reserved} reserved"
            )
        self.written_end += n_items
        self.reserved -= n_items

    def consume(self, reader, n_items):
        """Advance a reader past items it will never need again."""

        if n_items < 0:
            raise SimulationError("cannot consume a negative item count")
        cur = self.readers[reader]
        if cur + n_items > self.written_end:
            raise SimulationError(
                f"buffer {self.name!r}: reader {reader!r} over-consumes "
                f"({cur} + {n_items} > {self.written_end})"
            )
        self.readers[reader] = cur + n_items

    def seed_zeros(self, n_items):
        """Pre-populate committed zero items (initial left context)."""

        if self._items or self.written_end != self._base:
            raise SimulationError(f"buffer {self.name!r}: seeding a non-empty buffer")
        self._items.extend(np.zeros(self.item_shape, dtype=self.dtype) for _ in range(n_items))
        self.written_end += n_items

    def get(self, abs_index):
        if not (self._base <= abs_index < self.written_end):
            raise SimulationError(
                f"buffer {self.name!r}: read of item {abs_index} outside "
                f"[{self._base}, {self.written_end})"
            )
        return self._items[abs_index - self._base]

    def get_range(self, lo, hi):
        """Stack items [lo, hi) into one array (reads committed data only)."""

        if lo == hi:
            return np.empty((0,) + self.item_shape, dtype=self.dtype)
        if not (self._base <= lo and hi <= self.written_end):
            raise SimulationError(
                f"buffer {self.name!r}: read of range [{lo}, {hi}) outside "
                f"[{self._base}, {self.written_end})"
            )
        return np.stack(self._items[lo - self._base : hi - self._base])

    def trim(self):
        """Drop storage below the lowest reader cursor."""

        target = min(self.first_live, self.written_end)
        drop = target - self._base
        if drop > 0:
            del self._items[:drop]
            self._base = target

    def clear(self):
        self._items.clear()
        self._base = 0
        self.written_end = 0
        self.reserved = 0
        for r in self.readers:
            self.readers[r] = 0


class SharedMemory:
    """Registry of tensor buffers with a global byte budget."""

    def __init__(self, capacity_bytes):
        self.capacity_bytes = int(capacity_bytes)
        self.buffers = {}
        self.peak_bytes = 0

    def create_buffer(self, name, item_shape, dtype, scale=1.0, capacity_items=None):
        if name in self.buffers:
            raise ValueError(f"buffer {name!r} already exists")
        itemsize = np.dtype(dtype).itemsize * int(np.prod(tuple(item_shape), initial=1))
        if capacity_items is None:
            capacity_items = max(1, self.capacity_bytes // itemsize)
        buf = TensorBuffer(name, item_shape, dtype, capacity_items, scale=scale)
        self.buffers[name] = buf
        return buf

    def buffer(self, name):
        return self.buffers[name]

    @property
    def live_bytes(self):
        return sum(b.live_bytes for b in self.buffers.values())

    def check_occupancy(self):
        live = self.live_bytes
        self.peak_bytes = max(self.peak_bytes, live)
        if live > self.capacity_bytes:
            raise CapacityError(
                f"shared memory overflow: {live} live bytes > {self.capacity_bytes}"
            )
        return live

    def trim_all(self):
        for b in self.buffers.values():
            b.trim()

    def clear_all(self):
        for b in self.buffers.values():
            b.clear()
        # peak survives clears so a run report can show the high-water mark


class SampleQueue:
    """Host-fed audio sample stream consumed by the frontend kernel.

    ``consume`` is logical (cursor only); storage is dropped by ``trim`` so
    kernel threads can still read the windows their setup just scheduled.
    """

    def __init__(self):
        self._data = np.empty(0, dtype=np.float64)
        self._retained_abs = 0  # absolute index of _data[0]
        self.appended = 0
        self.consumed = 0

    def append(self, samples):
        samples = np.asarray(samples, dtype=np.float64).ravel()
        if samples.size:
            self._data = np.concatenate([self._data, samples])
            self.appended += samples.size

    @property
    def available(self):
        """Samples not yet consumed (live window of the stream)."""

        return self.appended - self.consumed

    def consume(self, n):
        if n < 0 or self.consumed + n > self.appended:
            raise SimulationError("sample queue over-consumption")
        self.consumed += n

    def trim(self):
        drop = self.consumed - self._retained_abs
        if drop > 0:
            self._data = self._data[drop:]
            self._retained_abs = self.consumed

    def slice(self, abs_lo, abs_hi):
        """Samples [abs_lo, abs_hi) of the whole-utterance stream."""

        if abs_lo < self._retained_abs or abs_hi > self.appended:
            raise SimulationError(
                f"sample read [{abs_lo}, {abs_hi}) outside retained "
                f"[{self._retained_abs}, {self.appended})"
            )
        lo = abs_lo - self._retained_abs
        return self._data[lo : lo + (abs_hi - abs_lo)]

    def clear(self):
        self._data = np.empty(0, dtype=np.float64)
        self._retained_abs = 0
        self.appended = 0
        self.consumed = 0


class ModelMemory:
    """On-accelerator weight store fed by a DMA engine.

    Residency only gates the timeline (kernel threads may not start before
    their blob's transfer completes); functional reads always succeed.  The
    memory holds one blob at a time and is flushed when it switches into
    cache mode at the hypothesis-expansion boundary.
    """

    def __init__(self, capacity_bytes, bytes_per_cycle):
        self.capacity_bytes = int(capacity_bytes)
        self.bytes_per_cycle = int(bytes_per_cycle)
        self.resident_blob = None
        self._busy_until = 0

    def prefetch(self, blob_id, size_bytes, issue_cycle):
        """Issue a DMA for ``blob_id``; returns the completion cycle."""

        if size_bytes > self.capacity_bytes:
            raise CapacityError(
                f"blob {blob_id!r} of {size_bytes} bytes exceeds model memory "
                f"({self.capacity_bytes} bytes)"
            )
        if blob_id == self.resident_blob:
            return int(issue_cycle)
        start = max(int(issue_cycle), self._busy_until)
        done = start + -(-int(size_bytes) // self.bytes_per_cycle)
        self.resident_blob = blob_id
        self._busy_until = done
        return done

    def flush(self):
        self.resident_blob = None
        self._busy_until = 0

    def end_of_step(self):
        # any in-flight transfer drains in the gap between steps
        self._busy_until = 0


class LruCache:
    """Fully-associative LRU cache model, statistics only.

    ``access`` updates the model one address at a time; ``run_cold_trace``
    replays a whole trace from the flushed state (this is how the expansion
    phase feeds it, since the cache is flushed at the phase boundary) using
    the accelerated kernel when available.
    """

    def __init__(self, capacity_bytes, line_bytes):
        self.capacity_bytes = int(capacity_bytes)
        self.line_bytes = int(line_bytes)
        self.capacity_lines = max(1, self.capacity_bytes // self.line_bytes)
        self.hits = 0
        self.misses = 0
        self._lines = OrderedDict()

    def access(self, address, size=1):
        """Touch the line(s) covering [address, address+size); returns
        True when every touched line hit."""

        first = int(address) // self.line_bytes
        last = (int(address) + max(int(size), 1) - 1) // self.line_bytes
        all_hit = True
        for line in range(first, last + 1):
            if line in self._lines:
                self._lines.move_to_end(line)
                self.hits += 1
            else:
                all_hit = False
                self.misses += 1
                self._lines[line] = True
                if len(self._lines) > self.capacity_lines:
                    self._lines.popitem(last=False)
        return all_hit

    def run_cold_trace(self, addresses):
        """Flush, then replay a trace of byte addresses; returns (hits, misses)."""

        self.flush_contents()
        addresses = np.asarray(addresses, dtype=np.int64)
        if addresses.size == 0:
            return 0, 0
        lines = addresses // self.line_bytes
        _, ids = np.unique(lines, return_inverse=True)
        if NUMBA_ENABLED:
            h, m = _lru_trace_jit(ids.astype(np.int64), self.capacity_lines)
        else:
            h, m = _lru_trace_py(ids, self.capacity_lines)
        self.hits += int(h)
        self.misses += int(m)
        return int(h), int(m)

    def flush_contents(self):
        self._lines.clear()

    def reset_stats(self):
        self.hits = 0
        self.misses = 0

    @property
    def hit_rate(self):
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


def _lru_trace_py(line_ids, capacity_lines):
    lines = OrderedDict()
    hits = misses = 0
    for lid in line_ids:
        lid = int(lid)
        if lid in lines:
            lines.move_to_end(lid)
            hits += 1
        else:
            misses += 1
            lines[lid] = True
            if len(lines) > capacity_lines:
                lines.popitem(last=False)
    return hits, misses


@njit(cache=True)
def _lru_trace_jit(line_ids, capacity_lines):  # pragma: no cover - jitted
    n_lines = 0
    for i in range(line_ids.shape[0]):
        if line_ids[i] + 1 > n_lines:
            n_lines = line_ids[i] + 1
    # doubly-linked MRU list over dense line ids, with sentinel slot n_lines
    nxt = np.full(n_lines + 1, -1, np.int64)
    prv = np.full(n_lines + 1, -1, np.int64)
    present = np.zeros(n_lines, np.bool_)
    head = n_lines  # sentinel
    nxt[head] = head
    prv[head] = head
    count = 0
    hits = 0
    misses = 0
    for i in range(line_ids.shape[0]):
        lid = line_ids[i]
        if present[lid]:
            hits += 1
            # unlink
            prv[nxt[lid]] = prv[lid]
            nxt[prv[lid]] = nxt[lid]
        else:
            misses += 1
            present[lid] = True
            count += 1
        # push to MRU front (after sentinel)
        nxt[lid] = nxt[head]
        prv[lid] = head
        prv[nxt[head]] = lid
        nxt[head] = lid
        if count > capacity_lines:
            tail = prv[head]
            prv[nxt[tail]] = prv[tail]
            nxt[prv[tail]] = nxt[tail]
            present[tail] = False
            count -= 1
    return hits, misses
