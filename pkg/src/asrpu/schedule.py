"""Greedy thread scheduling on the PE pool and the per-step timeline.

Scheduling rules:

* Each kernel has one setup thread and ``n`` kernel threads.  The setup
  thread of kernel ``k+1`` is dispatched at the same moment kernel ``k``'s
  threads become runnable, so it overlaps kernel ``k``'s execution and
  occupies a PE like any other thread.
* Kernel ``k``'s threads become runnable once its setup has finished, all
  of kernel ``k-1``'s threads have finished, and its model blob (if any)
  has arrived in model memory.
* Threads are dispatched in ascending thread id to the earliest-free PE,
  ties to the lowest PE id; setup threads dispatch first (thread id -1).

The dispatch loop is the hottest piece of the timing model; it runs under
numba by default with a pure-NumPy fallback (uniform-cost kernels take a
closed-form vectorized path there).
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import NUMBA_ENABLED, njit
from .errors import SimulationError

KIND_SETUP = 0
KIND_KERNEL = 1


@dataclass
class KernelSpec:
    """One kernel's contribution to the step timeline."""

    index: int
    name: str
    kind: str  # frontend | conv1d | fc | layernorm | hyp_expansion | custom
    setup_cost: int
    thread_costs: np.ndarray  # int64, one entry per kernel thread
    blob_id: str = None
    blob_bytes: int = 0
    phase: str = "acoustic"  # or "expansion"
    has_setup: bool = True  # repeat executions of one kernel share one setup

    @property
    def n_threads(self):
        return int(self.thread_costs.shape[0])


@dataclass
class KernelTiming:
    """Aggregated timing of one kernel within a step."""

    index: int
    name: str
    kind: str
    phase: str
    n_threads: int
    busy_cycles: int  # kernel threads only
    setup_cycles: int
    first_start: int  # first kernel-thread start (== setup start when no threads)
    last_end: int
    dma_wait_cycles: int = 0


@dataclass
class Timeline:
    """Schedule of every simulated thread in one decoding step."""

    num_pes: int
    step_cycles: int = 0
    early_stop: bool = False
    early_stop_kernel: int = None
    kernels: list = field(default_factory=list)  # KernelTiming, in order
    records: np.ndarray = None  # optional (N, 6) int64 array, see RECORD_FIELDS

    RECORD_FIELDS = ("kernel_index", "thread_id", "kind", "pe_id", "start_cycle", "end_cycle")

    @property
    def per_kernel_cycles(self):
        return {k.index: k.busy_cycles for k in self.kernels}

    def acoustic_span_cycles(self):
        ends = [k.last_end for k in self.kernels if k.phase == "acoustic"]
        return max(ends) if ends else 0

    def validate(self):
        """Assert PE exclusivity and per-kernel phase ordering (needs records)."""

        if self.records is None:
            raise ValueError("timeline was built without thread records")
        rec = self.records
        for pe in range(self.num_pes):
            mine = rec[rec[:, 3] == pe]
            order = np.argsort(mine[:, 4], kind="stable")
            starts, ends = mine[order, 4], mine[order, 5]
            if np.any(starts[1:] < ends[:-1]):
                raise AssertionError(f"overlapping intervals on PE {pe}")
        # kernel threads of k all end before kernel threads of k+1 start
        kernel_rows = rec[rec[:, 2] == KIND_KERNEL]
        indices = sorted(set(kernel_rows[:, 0].tolist()))
        for a, b in zip(indices, indices[1:]):
            end_a = kernel_rows[kernel_rows[:, 0] == a][:, 5].max()
            start_b = kernel_rows[kernel_rows[:, 0] == b][:, 4].min()
            if end_a > start_b:
                raise AssertionError(f"kernel {b} started before kernel {a} finished")
        return True


def compute_makespan(timeline, config):
    """Step wall time in seconds at the configured clock."""

    return timeline.step_cycles / config.frequency_hz


@njit(cache=True)
def _dispatch_jit(costs, pe_free, gate):  # pragma: no cover - jitted
    n = costs.shape[0]
    num_pes = pe_free.shape[0]
    pes = np.empty(n, np.int64)
    starts = np.empty(n, np.int64)
    ends = np.empty(n, np.int64)
    for i in range(n):
        best = 0
        best_t = pe_free[0]
        for p in range(1, num_pes):
            if pe_free[p] < best_t:
                best_t = pe_free[p]
                best = p
        st = best_t if best_t > gate else gate
        en = st + costs[i]
        pes[i] = best
        starts[i] = st
        ends[i] = en
        pe_free[best] = en
    return pes, starts, ends


def _dispatch_py(costs, pe_free, gate):
    n = costs.shape[0]
    pes = np.empty(n, np.int64)
    starts = np.empty(n, np.int64)
    ends = np.empty(n, np.int64)
    free = pe_free.tolist()
    for i in range(n):
        p = free.index(min(free))
        st = max(free[p], gate)
        en = st + int(costs[i])
        pes[i] = p
        starts[i] = st
        ends[i] = en
        free[p] = en
    pe_free[:] = free
    return pes, starts, ends


def dispatch_threads(costs, pe_free, gate):
    """Greedily place threads (in id order) onto idle PEs from ``gate`` on.

    Mutates ``pe_free`` in place; returns (pe_ids, starts, ends).
    """

    costs = np.ascontiguousarray(costs, dtype=np.int64)
    if np.any(costs < 0):
        raise SimulationError("negative thread cost")
    if NUMBA_ENABLED:
        return _dispatch_jit(costs, pe_free, np.int64(gate))
    return _dispatch_py(costs, pe_free, int(gate))


class PoolScheduler:
    """Builds the step timeline for an ordered list of KernelSpec.

    ``model_memory`` (optional) supplies DMA completion cycles for kernels
    that declare a blob; residency persists on that object across steps.
    """

    def __init__(self, num_pes, model_memory=None, keep_records=False):
        self.num_pes = num_pes
        self.model_memory = model_memory
        self.keep_records = keep_records

    def run(self, specs, early_stop_index=None, expansion_flush=True):
        """Schedule one step.

        ``specs`` contains every kernel that ran, in execution order; if the
        step stopped early, ``early_stop_index`` names the kernel whose setup
        returned zero (its spec must carry an empty thread_costs array).
        """

        pe_free = np.zeros(self.num_pes, dtype=np.int64)
        records = [] if self.keep_records else None
        timings = []
        dma_ready = {}
        setup_end = {}
        flushed = False

        def dispatch_setup(spec, at):
            if not spec.has_setup:
                setup_end[spec.index] = int(at)
                dma_ready[spec.index] = int(at)
                return int(at), int(at)
            pes, starts, ends = dispatch_threads(
                np.array([spec.setup_cost], dtype=np.int64), pe_free, at
            )
            if records is not None:
                records.append(
                    (spec.index, -1, KIND_SETUP, int(pes[0]), int(starts[0]), int(ends[0]))
                )
            setup_end[spec.index] = int(ends[0])
            if spec.blob_id is not None and self.model_memory is not None:
                dma_ready[spec.index] = self.model_memory.prefetch(
                    spec.blob_id, spec.blob_bytes, int(starts[0])
                )
            else:
                dma_ready[spec.index] = int(starts[0])
            return int(starts[0]), int(ends[0])

        if not specs:
            return Timeline(self.num_pes, 0, False, None, [], self._pack(records))

        dispatch_setup(specs[0], 0)
        prev_threads_end = 0
        step_end = setup_end[specs[0].index]

        for pos, spec in enumerate(specs):
            if spec.phase == "expansion" and not flushed and self.model_memory is not None:
                if expansion_flush:
                    self.model_memory.flush()
                flushed = True
            gate = max(setup_end[spec.index], prev_threads_end, dma_ready[spec.index])
            dma_wait = max(0, dma_ready[spec.index] - max(setup_end[spec.index], prev_threads_end))
            if early_stop_index is not None and spec.index == early_stop_index:
                timings.append(
                    KernelTiming(
                        spec.index, spec.name, spec.kind, spec.phase, 0, 0,
                        setup_cycles=spec.setup_cost,
                        first_start=setup_end[spec.index] - spec.setup_cost,
                        last_end=setup_end[spec.index],
                        dma_wait_cycles=0,
                    )
                )
                break
            # the next kernel's setup dispatches alongside this kernel's threads
            if pos + 1 < len(specs):
                dispatch_setup(specs[pos + 1], gate)
            pes, starts, ends = dispatch_threads(spec.thread_costs, pe_free, gate)
            if records is not None and spec.n_threads:
                kind_col = np.full(spec.n_threads, KIND_KERNEL, dtype=np.int64)
                idx_col = np.full(spec.n_threads, spec.index, dtype=np.int64)
                tid_col = np.arange(spec.n_threads, dtype=np.int64)
                block = np.stack([idx_col, tid_col, kind_col, pes, starts, ends], axis=1)
                records.extend(map(tuple, block.tolist()))
            last_end = int(ends.max()) if spec.n_threads else gate
            first_start = int(starts.min()) if spec.n_threads else gate
            timings.append(
                KernelTiming(
                    spec.index, spec.name, spec.kind, spec.phase,
                    spec.n_threads,
                    busy_cycles=int(spec.thread_costs.sum()),
                    setup_cycles=spec.setup_cost,
                    first_start=first_start,
                    last_end=last_end,
                    dma_wait_cycles=dma_wait,
                )
            )
            prev_threads_end = last_end
            step_end = max(step_end, last_end, setup_end.get(spec.index, 0))

        step_end = max([step_end] + list(setup_end.values()))
        tl = Timeline(
            num_pes=self.num_pes,
            step_cycles=int(step_end),
            early_stop=early_stop_index is not None,
            early_stop_kernel=early_stop_index,
            kernels=timings,
            records=self._pack(records),
        )
        return tl

    @staticmethod
    def _pack(records):
        if records is None:
            return None
        if not records:
            return np.empty((0, 6), dtype=np.int64)
        return np.asarray(records, dtype=np.int64)


def export_timeline(timeline, fh):
    """Write one 'kernel_index thread_id kind pe_id start end' line per record."""

    if timeline.records is None:
        raise ValueError("timeline export requires thread records")
    for row in timeline.records:
        kind = "setup" if row[2] == KIND_SETUP else "kernel"
        fh.write(f"{row[0]} {row[1]} {kind} {row[3]} {row[4]} {row[5]}\n")
