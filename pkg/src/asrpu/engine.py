"""The accelerator: external command set, per-step execution and reports.

Commands mirror the hardware interface: configure the acoustic-scoring
kernel list and the hypothesis-expansion kernel, set the beam width, start
a decoding step on a signal chunk, and clean up between utterances.  One
decoding step runs the acoustic kernels in order (a setup returning zero
stops the step early), then the expansion phase once per emitted acoustic
vector.  Functional results never depend on the PE count; the timeline is
built afterwards from the recorded thread costs.
"""

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .costs import PEContext
from .decoder import backtrack
from .errors import BusyError, ConfigurationError, SimulationError
from .hypothesis import HypothesisStore
from .layers import SETUP_BASE_COST
from .memory import LruCache, ModelMemory, SampleQueue, SharedMemory
from .schedule import KernelSpec, PoolScheduler, Timeline, compute_makespan

SCORES_BUFFER = "scores"
_EXPANSION_READER = "hyp_expansion"


@dataclass
class DecoderState:
    beam_width: float = math.inf
    utterance_open: bool = False
    step_counter: int = 0


class KernelContext:
    """Execution services handed to setup routines and kernel bodies."""

    def __init__(self, machine, kernel_index):
        self.machine = machine
        self.kernel_index = kernel_index
        self.shared = machine.shared
        self.samples = machine.samples
        self.pe = PEContext(table=machine.config.costs,
                            mac_width=machine.config.accelerator.mac_width)


class ThreadContext(KernelContext):
    def __init__(self, machine, kernel_index, thread_id):
        super().__init__(machine, kernel_index)
        self.thread_id = thread_id


class ExpansionContext(KernelContext):
    """Extra services for expansion setups and threads."""

    def __init__(self, machine, kernel_index, n_new_scores, new_score_items):
        super().__init__(machine, kernel_index)
        self.n_new_scores = n_new_scores
        self.new_score_items = new_score_items
        self.hypothesis = None
        self.scores = None
        self.thread_id = None

    def submit(self, hyp):
        self.machine.hyp_store.submit(hyp)


@dataclass
class StepReport:
    """Everything one decoding step produced."""

    step_index: int
    timeline: Timeline
    acoustic_vectors_emitted: int
    hyp_expansion_repeats: int
    active_hypotheses_after: int
    best_partial_transcript: list
    step_time_seconds: float
    early_stop: bool
    early_stop_kernel: int | None
    shared_live_bytes: int
    shared_peak_bytes: int
    cache_hits: int
    cache_misses: int
    peak_incoming_hypotheses: int

    def to_dict(self):
        return {
            "step_index": self.step_index,
            "step_cycles": self.timeline.step_cycles,
            "step_time_seconds": self.step_time_seconds,
            "early_stop": self.early_stop,
            "early_stop_kernel": self.early_stop_kernel,
            "acoustic_vectors_emitted": self.acoustic_vectors_emitted,
            "hyp_expansion_repeats": self.hyp_expansion_repeats,
            "active_hypotheses_after": self.active_hypotheses_after,
            "best_partial_transcript": list(self.best_partial_transcript),
            "shared_live_bytes": self.shared_live_bytes,
            "shared_peak_bytes": self.shared_peak_bytes,
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
            "peak_incoming_hypotheses": self.peak_incoming_hypotheses,
            "per_kernel": [
                {
                    "index": k.index,
                    "name": k.name,
                    "kind": k.kind,
                    "phase": k.phase,
                    "threads": k.n_threads,
                    "busy_cycles": k.busy_cycles,
                    "setup_cycles": k.setup_cycles,
                    "first_start": k.first_start,
                    "last_end": k.last_end,
                    "dma_wait_cycles": k.dma_wait_cycles,
                }
                for k in self.timeline.kernels
            ],
        }


class _Slot:
    def __init__(self, setup, kernel):
        self.setup = setup
        self.kernel = kernel
        self.owner = getattr(setup, "__self__", None)

    @property
    def name(self):
        return getattr(self.owner, "name", f"kernel{id(self.kernel) & 0xFFFF}")

    @property
    def kind(self):
        return getattr(self.owner, "kind", "custom")

    @property
    def blob_id(self):
        return getattr(self.owner, "blob_id", None)

    @property
    def blob_bytes(self):
        return getattr(self.owner, "blob_bytes", 0)


class Accelerator:
    """Simulated accelerator instance driven through its command set."""

    def __init__(self, config: SystemConfig, keep_timeline_records=False):
        config.validate()
        self.config = config
        acc = config.accelerator
        self.shared = SharedMemory(acc.shared_mem_bytes)
        self.samples = SampleQueue()
        self.model_mem = ModelMemory(acc.model_mem_bytes, acc.dma_bytes_per_cycle)
        self.cache = LruCache(acc.model_mem_bytes, acc.cache_line_bytes)
        self.hyp_store = HypothesisStore.from_memory_bytes(
            acc.hyp_mem_bytes, merge_mode=config.decode.merge_mode
        )
        self.state = DecoderState(beam_width=config.decode.beam_width)
        self.scores_buffer = SCORES_BUFFER
        self.keep_timeline_records = keep_timeline_records
        self.score_tap = None  # set to a list to collect emitted score vectors
        self._acoustic = []
        self._expansion = None
        self._busy = False
        self._cleaned = False

    # -- command set --------------------------------------------------------

    def configure_acoustic_scoring(self, n_kernel, setup, kernel):
        """Install (setup, kernel) at slot n_kernel; append or overwrite."""

        self._check_idle()
        if n_kernel > len(self._acoustic) or n_kernel < 0:
            raise ConfigurationError(
                f"kernel index {n_kernel} leaves a gap (have {len(self._acoustic)} slots)"
            )
        slot = _Slot(setup, kernel)
        if n_kernel == len(self._acoustic):
            self._acoustic.append(slot)
        else:
            self._acoustic[n_kernel] = slot
        return None

    def configure_hyp_expansion(self, kernel, setup=None):
        self._check_idle()
        self._expansion = (kernel, setup)
        return None

    def configure_beam_width(self, beam):
        self._check_idle()
        if not (beam >= 0):
            raise ValueError(f"beam width must be >= 0, got {beam!r}")
        self.state.beam_width = float(beam)
        return None

    def clean_decoding(self):
        """Reset per-utterance state and seed the root hypothesis."""

        self._check_idle()
        self.shared.clear_all()
        self.samples.clear()
        self.hyp_store.reset(self.config.decode.blank_id)
        self.cache.flush_contents()
        self.state.step_counter = 0
        self.state.utterance_open = True
        # model memory keeps its prefetched blob: it is read-only data
        for slot in self._acoustic:
            hook = getattr(slot.owner, "prepare", None)
            if hook is not None:
                hook(KernelContext(self, 0))
        for slot in self._acoustic:
            hook = getattr(slot.owner, "on_clean", None)
            if hook is not None:
                hook(KernelContext(self, 0))
        self._cleaned = True
        return None

    def decoding_step(self, signal_chunk):
        """Append a chunk and run one decoding step; returns a StepReport."""

        if self._busy:
            raise BusyError("a decoding step is already in flight")
        if not self._acoustic or self._expansion is None:
            raise ConfigurationError("both decoding phases must be configured first")
        if not self._cleaned:
            self.clean_decoding()
        self._busy = True
        try:
            return self._run_step(np.asarray(signal_chunk, dtype=np.float64))
        finally:
            self._busy = False

    # -- step execution ------------------------------------------------------

    def _check_idle(self):
        if self._busy:
            raise BusyError("command issued while a decoding step is executing")

    def _run_step(self, chunk):
        acc = self.config.accelerator
        self.samples.append(chunk)
        step_index = self.state.step_counter
        self.state.step_counter += 1

        specs = []
        early_stop_kernel = None
        scores_before = self._scores_written()

        for k, slot in enumerate(self._acoustic):
            ctx = KernelContext(self, k)
            try:
                n_threads = slot.setup(ctx)
            except SimulationError:
                raise
            except Exception as e:
                raise SimulationError(str(e), kernel_index=k) from e
            setup_cost = ctx.pe.instruction_count
            self.shared.check_occupancy()
            if n_threads == 0:
                specs.append(
                    KernelSpec(k, slot.name, slot.kind, setup_cost,
                               np.empty(0, dtype=np.int64),
                               blob_id=slot.blob_id, blob_bytes=slot.blob_bytes)
                )
                early_stop_kernel = k
                break
            costs = self._run_kernel(slot, k, n_threads)
            self.shared.check_occupancy()
            self.shared.trim_all()
            specs.append(
                KernelSpec(k, slot.name, slot.kind, setup_cost, costs,
                           blob_id=slot.blob_id, blob_bytes=slot.blob_bytes)
            )

        n_vectors = self._scores_written() - scores_before
        repeats = 0
        if early_stop_kernel is None:
            repeats = self._run_expansion_phase(n_vectors, specs)

        scheduler = PoolScheduler(
            acc.num_pes, self.model_mem, keep_records=self.keep_timeline_records
        )
        timeline = scheduler.run(specs, early_stop_index=early_stop_kernel)
        if early_stop_kernel is not None and self._acoustic:
            # the stopping setup may prefetch kernel 0's model data for the
            # next step
            first = self._acoustic[0]
            if first.blob_id is not None:
                self.model_mem.prefetch(first.blob_id, first.blob_bytes, timeline.step_cycles)
        self.model_mem.end_of_step()

        best_words = []
        if self.hyp_store.active:
            best = self.hyp_store.best_hypothesis()
            rt = getattr(self._expansion[0], "rt", None)
            if rt is not None:
                best_words = backtrack(best, rt)
        return StepReport(
            step_index=step_index,
            timeline=timeline,
            acoustic_vectors_emitted=int(n_vectors),
            hyp_expansion_repeats=int(repeats),
            active_hypotheses_after=self.hyp_store.active_count(),
            best_partial_transcript=best_words,
            step_time_seconds=compute_makespan(timeline, acc),
            early_stop=early_stop_kernel is not None,
            early_stop_kernel=early_stop_kernel,
            shared_live_bytes=self.shared.live_bytes,
            shared_peak_bytes=self.shared.peak_bytes,
            cache_hits=self.cache.hits,
            cache_misses=self.cache.misses,
            peak_incoming_hypotheses=self.hyp_store.peak_incoming,
        )

    def _scores_written(self):
        buf = self.shared.buffers.get(self.scores_buffer)
        return 0 if buf is None else buf.written_end

    def _run_kernel(self, slot, k, n_threads):
        kernel = slot.kernel
        try:
            if getattr(kernel, "kernel_mode", "thread") == "batch":
                ctx = KernelContext(self, k)
                costs = np.ascontiguousarray(kernel(ctx, n_threads), dtype=np.int64)
                if costs.shape[0] != n_threads:
                    raise SimulationError(
                        f"batch kernel returned {costs.shape[0]} thread costs "
                        f"for {n_threads} threads"
                    )
                return costs
            costs = np.empty(n_threads, dtype=np.int64)
            for tid in range(n_threads):
                tctx = ThreadContext(self, k, tid)
                kernel(tctx, tid)
                costs[tid] = tctx.pe.instruction_count
            return costs
        except SimulationError as e:
            if e.kernel_index is None:
                raise SimulationError(str(e), kernel_index=k) from e
            raise
        except Exception as e:
            raise SimulationError(str(e), kernel_index=k) from e

    def _run_expansion_phase(self, n_vectors, specs):
        """Run the expansion kernel once per emitted acoustic vector."""

        kernel, setup = self._expansion
        exp_index = len(self._acoustic)
        buf = self.shared.buffers.get(self.scores_buffer)
        new_items = []
        if buf is not None and n_vectors:
            if _EXPANSION_READER not in buf.readers:
                buf.add_reader(_EXPANSION_READER)
            first_new = buf.written_end - n_vectors
            new_items = [buf.get(i) for i in range(first_new, buf.written_end)]

        sctx = ExpansionContext(self, exp_index, n_vectors, new_items)
        setup_fn = setup or getattr(kernel, "setup", None)
        if setup_fn is not None:
            declared = setup_fn(sctx)
        else:
            sctx.pe.charge_raw(SETUP_BASE_COST)
            declared = n_vectors
        exp_setup_cost = sctx.pe.instruction_count
        if declared != n_vectors:
            raise SimulationError(
                f"expansion setup declared {declared} vectors, {n_vectors} were emitted",
                kernel_index=exp_index,
            )
        if n_vectors == 0:
            return 0

        # model memory switches to cache mode for the expansion phase
        self.cache.flush_contents()
        cache_addrs = []
        for r in range(n_vectors):
            if self.hyp_store.active_count() == 0:
                raise SimulationError("expansion with zero active hypotheses",
                                      kernel_index=exp_index + r)
            row = np.asarray(buf.get(buf.cursor(_EXPANSION_READER)), dtype=np.float64)
            buf.consume(_EXPANSION_READER, 1)
            if self.score_tap is not None:
                self.score_tap.append(row.copy())
            try:
                if hasattr(kernel, "run_round"):
                    costs = kernel.run_round(self.hyp_store, row, cache_addrs)
                else:
                    active = self.hyp_store.active_list()
                    costs = np.empty(len(active), dtype=np.int64)
                    for tid, h in enumerate(active):
                        tctx = ExpansionContext(self, exp_index + r, n_vectors, [])
                        tctx.hypothesis = h
                        tctx.scores = row
                        tctx.thread_id = tid
                        kernel(tctx, tid)
                        costs[tid] = tctx.pe.instruction_count
            except SimulationError as e:
                if e.kernel_index is None:
                    raise SimulationError(str(e), kernel_index=exp_index + r) from e
                raise
            self.hyp_store.finalize_step(self.state.beam_width)
            specs.append(
                KernelSpec(
                    exp_index + r,
                    f"hyp_expansion[{r}]",
                    getattr(kernel, "kind", "hyp_expansion"),
                    exp_setup_cost if r == 0 else 0,
                    np.ascontiguousarray(costs, dtype=np.int64),
                    phase="expansion",
                    has_setup=(r == 0),
                )
            )
        if cache_addrs:
            self.cache.run_cold_trace(np.asarray(cache_addrs, dtype=np.int64))
        self.shared.trim_all()
        return n_vectors
