"""CONV / FC / LayerNorm kernels and the acoustic-scoring program builder.

Every layer runs as one kernel (FC layers too large for model memory are
split into partition kernels).  A kernel's setup routine does the buffer
arithmetic and returns the thread count; the kernel itself has a batch
implementation (vectorized, numba-accelerated integer cores) plus a literal
per-thread implementation used by the tests to pin the instruction-count
formulas.  Integer arithmetic is exact on both backends, so results are
bit-identical regardless of path.
"""

import numpy as np

from .backend import NUMBA_ENABLED, njit
from .costs import DEFAULT_COSTS, loop_cost
from .errors import ConfigurationError, SimulationError
from .frontend import MfccConstants, frames_fitting, mfcc_frames_batch, mfcc_thread_cost
from .model import partition_fc, quantize

SETUP_BASE_COST = 30  # buffer checks, parameter stores in shared memory
SETUP_DMA_COST = 6  # programming the DMA for the layer's weight blob


# -- exact integer compute cores (numba with a pure-NumPy fallback) --------

@njit(cache=True)
def _matmul_i8_jit(x, w):  # pragma: no cover - jitted
    n, d = x.shape
    m = w.shape[0]
    out = np.empty((n, m), np.int64)
    for j in range(m):
        for i in range(n):
            acc = np.int64(0)
            for k in range(d):
                acc += np.int64(x[i, k]) * np.int64(w[j, k])
            out[i, j] = acc
    return out


def _matmul_i8_np(x, w):
    # products and partial sums stay far below 2**53, so float64 GEMM is exact
    return np.rint(x.astype(np.float64) @ w.astype(np.float64).T).astype(np.int64)


def matmul_i8(x, w):
    """Exact integer product of int8 activations (n, d) with rows (m, d)."""

    if NUMBA_ENABLED:
        return _matmul_i8_jit(np.ascontiguousarray(x), np.ascontiguousarray(w))
    return _matmul_i8_np(x, w)


@njit(cache=True)
def _conv_grouped_i8_jit(xw, w, groups):  # pragma: no cover - jitted
    n, width, feat = xw.shape
    c = feat // groups
    out = np.empty((n, feat), np.int64)
    for i in range(n):
        for g in range(groups):
            base = g * c
            for co in range(c):
                acc = np.int64(0)
                for dt in range(width):
                    for ci in range(c):
                        acc += np.int64(xw[i, dt, base + ci]) * np.int64(w[dt, co, ci])
                out[i, base + co] = acc
    return out


def _conv_grouped_i8_np(xw, w, groups):
    n, width, feat = xw.shape
    c = feat // groups
    x4 = xw.reshape(n, width, groups, c).astype(np.float64)
    wf = w.astype(np.float64)
    out = np.einsum("nwgc,wdc->ngd", x4, wf)
    return np.rint(out.reshape(n, feat)).astype(np.int64)


def conv_grouped_i8(xw, w, groups):
    """Grouped 1-D conv with one (width, c, c) filter shared by all groups."""

    if NUMBA_ENABLED:
        return _conv_grouped_i8_jit(np.ascontiguousarray(xw), np.ascontiguousarray(w), groups)
    return _conv_grouped_i8_np(xw, w, groups)


@njit(cache=True)
def _conv_dense_i8_jit(xw, w):  # pragma: no cover - jitted
    n, width, d_in = xw.shape
    d_out = w.shape[1]
    out = np.empty((n, d_out), np.int64)
    for i in range(n):
        for co in range(d_out):
            acc = np.int64(0)
            for dt in range(width):
                for ci in range(d_in):
                    acc += np.int64(xw[i, dt, ci]) * np.int64(w[dt, co, ci])
            out[i, co] = acc
    return out


def _conv_dense_i8_np(xw, w):
    return np.rint(
        np.einsum("nwi,woi->no", xw.astype(np.float64), w.astype(np.float64))
    ).astype(np.int64)


def conv_dense_i8(xw, w):
    if NUMBA_ENABLED:
        return _conv_dense_i8_jit(np.ascontiguousarray(xw), np.ascontiguousarray(w))
    return _conv_dense_i8_np(xw, w)


# -- instruction-count formulas (defaults shown; any cost table works) ------

def mac_iters(length, mac_width):
    return -(-length // mac_width)


def fc_thread_cost(d_in, mac_width, relu, residual, quant_out, table=DEFAULT_COSTS):
    """One FC neuron evaluation:
    13 fixed + loop(ceil(d/8), 3) + 4 + 2*relu + 3*residual + (6 int8 store | 1 f32 store)
    """

    t = table
    cost = 8 * t.load + 4 * t.add + t.move
    cost += loop_cost(mac_iters(d_in, mac_width), 2 * t.load + t.mac, t)
    cost += (t.load + t.mul) + (t.load + t.add)
    if relu:
        cost += t.compare + t.move
    if residual:
        cost += t.load + t.mul + t.add
    cost += (t.load + t.mul + t.add + 2 * t.compare + t.store) if quant_out else t.store
    return cost


def conv_thread_cost(width, cpg, mac_width, relu, residual, quant_out, table=DEFAULT_COSTS):
    """One conv output scalar: per tap, a row-addressing pair plus the lane
    MAC loop over that tap's channels."""

    t = table
    cost = 8 * t.load + 6 * t.add + t.move
    tap_body = 2 * t.add + loop_cost(mac_iters(cpg, mac_width), 2 * t.load + t.mac, t)
    cost += loop_cost(width, tap_body, t)
    cost += (t.load + t.mul) + (t.load + t.add)
    if relu:
        cost += t.compare + t.move
    if residual:
        cost += t.load + t.mul + t.add
    cost += (t.load + t.mul + t.add + 2 * t.compare + t.store) if quant_out else t.store
    return cost


def layernorm_thread_cost(d, table=DEFAULT_COSTS):
    """One frame normalized: two reduction passes plus the write-back pass."""

    t = table
    cost = 6 * t.load + 2 * t.add  # parameters
    cost += t.move + loop_cost(d, t.load + t.mul + t.add, t) + t.mul  # mean
    cost += t.move + loop_cost(d, t.load + 2 * t.mul + 2 * t.add, t) + t.mul  # variance
    cost += t.add + t.sfu + t.mul  # + eps, sqrt, reciprocal
    body = 4 * t.load + 4 * t.mul + 3 * t.add + 2 * t.compare + t.store
    cost += loop_cost(d, body, t)
    return cost


# -- literal per-thread kernels (tests; charge exactly the formulas) --------

def fc_thread_literal(pe, x_i8, w_row_i8, bias, in_scale, w_scale, out_scale,
                      relu, residual_value=None, quant_out=True):
    """One FC neuron through the costed primitives; returns the stored value
    (int8 code when quant_out, else the f32 score)."""

    pe.load(8)
    pe.add(4)
    pe.move()
    acc = 0.0
    d = len(x_i8)
    iters = mac_iters(d, pe.mac_width)
    pe.loop_overhead(iters)
    for i in range(iters):
        lo = i * pe.mac_width
        lanes_x = np.zeros(pe.mac_width, np.int8)
        lanes_w = np.zeros(pe.mac_width, np.int8)
        chunk = x_i8[lo : lo + pe.mac_width]
        lanes_x[: len(chunk)] = chunk
        lanes_w[: len(chunk)] = w_row_i8[lo : lo + pe.mac_width]
        pe.load(2)
        acc = pe.vector_mac(acc, lanes_x, lanes_w)
    pe.load(); pe.mul()
    acc = acc * (in_scale * w_scale)
    pe.load(); pe.add()
    acc = acc + float(bias)
    if relu:
        pe.compare(); pe.move()
        acc = acc if acc > 0.0 else 0.0
    if residual_value is not None:
        pe.load(); pe.mul(); pe.add()
        acc = acc + residual_value
    if quant_out:
        pe.load(); pe.mul(); pe.add(); pe.compare(2); pe.store()
        q = np.rint(acc / out_scale)
        return np.int8(min(127, max(-127, q)))
    pe.store()
    return np.float32(acc)


def conv_thread_literal(pe, window_i8, w_tap_rows_i8, bias, in_scale, w_scale,
                        out_scale, relu, residual_value=None, quant_out=True):
    """One conv output scalar through the costed primitives.

    ``window_i8`` is (width, cpg) input lanes for this output's group;
    ``w_tap_rows_i8`` is the matching (width, cpg) filter slice.
    """

    pe.load(8)
    pe.add(6)
    pe.move()
    acc = 0.0
    width, cpg = window_i8.shape
    iters = mac_iters(cpg, pe.mac_width)
    pe.loop_overhead(width)
    for dt in range(width):
        pe.add(2)
        pe.loop_overhead(iters)
        for i in range(iters):
            lo = i * pe.mac_width
            lanes_x = np.zeros(pe.mac_width, np.int8)
            lanes_w = np.zeros(pe.mac_width, np.int8)
            chunk = window_i8[dt, lo : lo + pe.mac_width]
            lanes_x[: len(chunk)] = chunk
            lanes_w[: len(chunk)] = w_tap_rows_i8[dt, lo : lo + pe.mac_width]
            pe.load(2)
            acc = pe.vector_mac(acc, lanes_x, lanes_w)
    pe.load(); pe.mul()
    acc = acc * (in_scale * w_scale)
    pe.load(); pe.add()
    acc = acc + float(bias)
    if relu:
        pe.compare(); pe.move()
        acc = acc if acc > 0.0 else 0.0
    if residual_value is not None:
        pe.load(); pe.mul(); pe.add()
        acc = acc + residual_value
    if quant_out:
        pe.load(); pe.mul(); pe.add(); pe.compare(2); pe.store()
        q = np.rint(acc / out_scale)
        return np.int8(min(127, max(-127, q)))
    pe.store()
    return np.float32(acc)


def layernorm_thread_literal(pe, x_i8, gamma, beta, in_scale, out_scale, eps=1e-5):
    """One frame through the costed primitives; returns int8 codes."""

    d = len(x_i8)
    pe.load(6); pe.add(2)
    pe.move()
    acc = 0.0
    pe.loop_overhead(d)
    for i in range(d):
        pe.load(); pe.mul(); pe.add()
        acc += float(x_i8[i]) * in_scale
    pe.mul()
    mean = acc * (1.0 / d)
    pe.move()
    acc2 = 0.0
    pe.loop_overhead(d)
    for i in range(d):
        pe.load(); pe.mul(); pe.add(); pe.mul(); pe.add()
        diff = float(x_i8[i]) * in_scale - mean
        acc2 += diff * diff
    pe.mul()
    var = acc2 * (1.0 / d)
    pe.add(); pe.charge("sfu"); pe.mul()
    inv = 1.0 / np.sqrt(var + eps)
    out = np.empty(d, np.int8)
    pe.loop_overhead(d)
    for i in range(d):
        pe.load(); pe.mul(); pe.add(); pe.mul()
        v = (float(x_i8[i]) * in_scale - mean) * inv
        pe.load(); pe.mul(); pe.load(); pe.add()
        v = v * float(gamma[i]) + float(beta[i])
        pe.load(); pe.mul(); pe.add(); pe.compare(2); pe.store()
        q = np.rint(v / out_scale)
        out[i] = np.int8(min(127, max(-127, q)))
    return out


# -- functional batch math shared by the kernel classes ---------------------

def fc_forward(x_i8, layer, lo, hi, residual_f64=None):
    """Exact batch evaluation of neurons [lo, hi); returns float64 (n, hi-lo)."""

    acc = matmul_i8(x_i8, layer.weights[lo:hi])
    out = acc.astype(np.float64) * (layer.in_scale * layer.w_scale)
    out += layer.bias[lo:hi].astype(np.float64)
    if layer.relu:
        out = np.maximum(out, 0.0)
    if layer.residual:
        if residual_f64 is None:
            raise SimulationError("residual input missing")
        out = out + residual_f64[:, lo:hi]
    return out


def conv_forward(xw_i8, layer, residual_f64=None):
    """Exact batch conv over stacked windows (n, width, d_in)."""

    if layer.groups > 1:
        acc = conv_grouped_i8(xw_i8, layer.weights, layer.groups)
        bias = np.tile(layer.bias.astype(np.float64), layer.groups)
    else:
        acc = conv_dense_i8(xw_i8, layer.weights)
        bias = layer.bias.astype(np.float64)
    out = acc.astype(np.float64) * (layer.in_scale * layer.w_scale)
    out += bias
    if layer.relu:
        out = np.maximum(out, 0.0)
    if layer.residual:
        out = out + residual_f64
    return out


def layernorm_forward(x_f64, gamma, beta, eps=1e-5):
    mean = x_f64.mean(axis=1, keepdims=True)
    var = ((x_f64 - mean) ** 2).mean(axis=1, keepdims=True)
    return (x_f64 - mean) / np.sqrt(var + eps) * gamma + beta


# -- kernel classes ----------------------------------------------------------

def _batch(fn):
    def runner(ctx, n_threads):
        return fn(ctx, n_threads)

    runner.kernel_mode = "batch"
    return runner


class KernelBase:
    """Common plumbing: lazy buffer/reader registration and blob requests."""

    blob_id = None
    blob_bytes = 0
    phase = "acoustic"

    def __init__(self, name):
        self.name = name
        self.run = _batch(self._run_batch)

    def setup_cost(self):
        return SETUP_BASE_COST + (SETUP_DMA_COST if self.blob_id else 0)

    def _reader(self, buf):
        if self.name not in buf.readers:
            buf.add_reader(self.name)
        return self.name

    def prepare(self, ctx):
        """Create this kernel's output buffer and register its readers.

        Runs at clean_decoding in kernel order, so every buffer exists and
        every consumer's cursor is pinned before any data flows (a reader
        registered late would miss items trimmed in the meantime).
        """

        out = getattr(self, "_out", None)
        if out is not None:
            out(ctx)
        for attr in ("in_buf", "residual_buf"):
            name = getattr(self, attr, None)
            if name is not None and name in ctx.shared.buffers:
                self._reader(ctx.shared.buffer(name))

    def on_clean(self, ctx):
        pass


class MfccKernel(KernelBase):
    """Feature extraction: one thread per emitted frame."""

    kind = "frontend"

    def __init__(self, frontend_params, out_buf="features", name="feature_extraction"):
        super().__init__(name)
        self.params = frontend_params
        self.consts = MfccConstants(frontend_params)
        self.out_buf = out_buf
        self.blob_id = "blob/frontend"
        self.blob_bytes = self.consts.blob_bytes
        self.thread_cost = None  # filled on first setup (needs cost table)
        self._seed_base = None  # zero items seeded into the output by consumers

    def _out(self, ctx):
        shared = ctx.shared
        if self.out_buf not in shared.buffers:
            shared.create_buffer(self.out_buf, (self.params.n_mels,), np.float32)
        return shared.buffer(self.out_buf)

    def on_clean(self, ctx):
        self._seed_base = None

    def setup(self, ctx):
        p = self.params
        out = self._out(ctx)
        if self._seed_base is None:
            self._seed_base = out.reserved_end
        ctx.pe.charge_raw(self.setup_cost())
        emitted = out.reserved_end - self._seed_base
        total = frames_fitting(ctx.samples.appended, p.frame_len, p.frame_shift)
        n_new = total - emitted
        if n_new <= 0:
            return 0
        out.reserve(n_new)
        # samples below the next future frame's window start are dead
        ctx.samples.consume(total * p.frame_shift - ctx.samples.consumed)
        return n_new

    def _run_batch(self, ctx, n_threads):
        out = self._out(ctx)
        p = self.params
        first = out.written_end
        first_frame = first - self._seed_base
        frame_ids = list(range(first_frame, first_frame + n_threads))
        lo = first_frame * p.frame_shift
        hi = (first_frame + n_threads - 1) * p.frame_shift + p.frame_len
        samples = (lo, ctx.samples.slice(lo, hi))
        frames = mfcc_frames_batch(samples, frame_ids, self.consts)
        for i in range(n_threads):
            out.write(first + i, frames[i])
        out.commit(n_threads)
        ctx.samples.trim()
        if self.thread_cost is None:
            self.thread_cost = mfcc_thread_cost(self.consts, ctx.pe.table)
        return np.full(n_threads, self.thread_cost, dtype=np.int64)


class FcKernel(KernelBase):
    """One FC partition: threads compute single neurons of [lo, hi)."""

    kind = "fc"

    def __init__(self, layer, index_in_model, lo, hi, part, n_parts,
                 in_buf, out_buf, residual_buf=None, final=False, name=None):
        self.layer = layer
        self.lo = lo
        self.hi = hi
        self.part = part
        self.n_parts = n_parts
        self.in_buf = in_buf
        self.out_buf = out_buf
        self.residual_buf = residual_buf
        self.final = final
        if name is None:
            name = f"L{index_in_model:02d}.fc"
            if n_parts > 1:
                name += f".p{part}"
        super().__init__(name)
        self.blob_id = f"blob/{name}"
        self.blob_bytes = (hi - lo) * layer.d_in
        self._pending = None

    def _out(self, ctx):
        shared = ctx.shared
        if self.out_buf not in shared.buffers:
            if self.final:
                shared.create_buffer(self.out_buf, (self.layer.d_out,), np.float32)
            else:
                shared.create_buffer(
                    self.out_buf, (self.layer.d_out,), np.int8, scale=self.layer.out_scale
                )
        return shared.buffer(self.out_buf)

    def setup(self, ctx):
        inb = ctx.shared.buffer(self.in_buf)
        reader = self._reader(inb)
        out = self._out(ctx)
        ctx.pe.charge_raw(self.setup_cost())
        n_new = inb.unread(reader)
        if n_new == 0:
            return 0
        start_in = inb.cursor(reader)
        if self.part == 0:
            out.reserve(n_new)
        inb.consume(reader, n_new)
        res_start = None
        if self.residual_buf is not None:
            resb = ctx.shared.buffer(self.residual_buf)
            rreader = self._reader(resb)
            res_start = resb.cursor(rreader)
            resb.consume(rreader, n_new)
        self._pending = (start_in, n_new, out.written_end, res_start)
        return n_new * (self.hi - self.lo)

    def _run_batch(self, ctx, n_threads):
        start_in, n_new, start_out, res_start = self._pending
        self._pending = None
        inb = ctx.shared.buffer(self.in_buf)
        x = inb.get_range(start_in, start_in + n_new)
        if x.dtype != np.int8:
            x = quantize(x, self.layer.in_scale)
        residual = None
        if self.residual_buf is not None:
            resb = ctx.shared.buffer(self.residual_buf)
            res = resb.get_range(res_start, res_start + n_new)
            residual = res.astype(np.float64) * resb.scale
        out_f = fc_forward(x, self.layer, self.lo, self.hi, residual)
        out = ctx.shared.buffer(self.out_buf)
        if self.final:
            vals = out_f.astype(np.float32)
        else:
            vals = quantize(out_f, self.layer.out_scale)
        for i in range(n_new):
            out.write_slice(start_out + i, self.lo, self.hi, vals[i])
        if self.part == self.n_parts - 1:
            out.commit(n_new)
        cost = fc_thread_cost(
            self.layer.d_in, ctx.pe.mac_width, self.layer.relu,
            self.layer.residual, quant_out=not self.final, table=ctx.pe.table,
        )
        return np.full(n_threads, cost, dtype=np.int64)


class ConvKernel(KernelBase):
    """1-D convolution over time: one thread per (position, out channel)."""

    kind = "conv1d"

    def __init__(self, layer, index_in_model, in_buf, out_buf, name=None):
        self.layer = layer
        self.in_buf = in_buf
        self.out_buf = out_buf
        if name is None:
            name = f"L{index_in_model:02d}.conv"
        super().__init__(name)
        self.blob_id = f"blob/{name}"
        self.blob_bytes = layer.weight_bytes()
        self._pending = None

    def _out(self, ctx):
        shared = ctx.shared
        if self.out_buf not in shared.buffers:
            shared.create_buffer(
                self.out_buf, (self.layer.d_out,), np.int8, scale=self.layer.out_scale
            )
        return shared.buffer(self.out_buf)

    def on_clean(self, ctx):
        # zero left context so the first windows are complete at utterance
        # start; the seeds play the role of a previous step's retained items
        pad = self.layer.width - self.layer.stride
        if pad > 0:
            ctx.shared.buffer(self.in_buf).seed_zeros(pad)

    def setup(self, ctx):
        w, s = self.layer.width, self.layer.stride
        inb = ctx.shared.buffer(self.in_buf)
        reader = self._reader(inb)
        out = self._out(ctx)
        ctx.pe.charge_raw(self.setup_cost())
        avail = inb.written_end - inb.cursor(reader)
        n_new = (avail - w) // s + 1 if avail >= w else 0
        if n_new <= 0:
            return 0
        start_in = inb.cursor(reader)
        out.reserve(n_new)
        inb.consume(reader, n_new * s)
        self._pending = (start_in, n_new, out.written_end)
        return n_new * self.layer.d_out

    def _run_batch(self, ctx, n_threads):
        start_in, n_new, start_out = self._pending
        self._pending = None
        layer = self.layer
        w, s = layer.width, layer.stride
        inb = ctx.shared.buffer(self.in_buf)
        rows = inb.get_range(start_in, start_in + (n_new - 1) * s + w)
        if rows.dtype != np.int8:
            rows = quantize(rows, layer.in_scale)
        win_idx = (np.arange(n_new)[:, None] * s) + np.arange(w)[None, :]
        xw = rows[win_idx]
        residual = None
        if layer.residual:
            # align the residual to the newest row of each window
            res_rows = rows[np.arange(n_new) * s + (w - 1)]
            residual = res_rows.astype(np.float64) * layer.in_scale
        out_f = conv_forward(xw, layer, residual)
        out = ctx.shared.buffer(self.out_buf)
        vals = quantize(out_f, layer.out_scale)
        for i in range(n_new):
            out.write(start_out + i, vals[i])
        out.commit(n_new)
        cpg = layer.channels_per_group if layer.groups > 1 else layer.d_in
        cost = conv_thread_cost(
            w, cpg, ctx.pe.mac_width, layer.relu, layer.residual,
            quant_out=True, table=ctx.pe.table,
        )
        return np.full(n_threads, cost, dtype=np.int64)


class LayerNormKernel(KernelBase):
    """Per-frame layer normalization: one thread per frame."""

    kind = "layernorm"

    def __init__(self, layer, index_in_model, in_buf, out_buf, name=None):
        self.layer = layer
        self.in_buf = in_buf
        self.out_buf = out_buf
        if name is None:
            name = f"L{index_in_model:02d}.layernorm"
        super().__init__(name)
        self.blob_id = f"blob/{name}"
        self.blob_bytes = 8 * layer.d_in  # f32 gamma + beta
        self._pending = None

    def _out(self, ctx):
        shared = ctx.shared
        if self.out_buf not in shared.buffers:
            shared.create_buffer(
                self.out_buf, (self.layer.d_out,), np.int8, scale=self.layer.out_scale
            )
        return shared.buffer(self.out_buf)

    def setup(self, ctx):
        inb = ctx.shared.buffer(self.in_buf)
        reader = self._reader(inb)
        out = self._out(ctx)
        ctx.pe.charge_raw(self.setup_cost())
        n_new = inb.unread(reader)
        if n_new == 0:
            return 0
        start_in = inb.cursor(reader)
        out.reserve(n_new)
        inb.consume(reader, n_new)
        self._pending = (start_in, n_new, out.written_end)
        return n_new

    def _run_batch(self, ctx, n_threads):
        start_in, n_new, start_out = self._pending
        self._pending = None
        layer = self.layer
        inb = ctx.shared.buffer(self.in_buf)
        x = inb.get_range(start_in, start_in + n_new)
        xf = x.astype(np.float64) * (layer.in_scale if x.dtype == np.int8 else 1.0)
        out_f = layernorm_forward(
            xf, layer.gamma.astype(np.float64), layer.beta.astype(np.float64)
        )
        out = ctx.shared.buffer(self.out_buf)
        vals = quantize(out_f, layer.out_scale)
        for i in range(n_new):
            out.write(start_out + i, vals[i])
        out.commit(n_new)
        cost = layernorm_thread_cost(layer.d_in, ctx.pe.table)
        return np.full(n_threads, cost, dtype=np.int64)


def logical_kernel_count(descriptor):
    """Kernels before FC partitioning: the frontend plus one per layer."""

    return 1 + len(descriptor.layers)


def build_program(descriptor, config, frontend_params, scores_buf="scores"):
    """Expand a model descriptor into the ordered acoustic-scoring kernels.

    The frontend kernel comes first; every FC layer whose weights exceed
    model memory is split by :func:`partition_fc`.  Returns the kernel list;
    the final kernel writes float32 score vectors to ``scores_buf``.
    """

    descriptor.validate()
    if frontend_params.n_mels != descriptor.layers[0].d_in:
        raise ConfigurationError(
            f"model expects {descriptor.layers[0].d_in} input features, "
            f"frontend produces {frontend_params.n_mels}"
        )
    kernels = [MfccKernel(frontend_params)]
    buf_names = ["features"]
    for i, ls in enumerate(descriptor.layers):
        buf_names.append(scores_buf if i == len(descriptor.layers) - 1 else f"act{i}")
    for i, ls in enumerate(descriptor.layers):
        in_buf = buf_names[i]
        out_buf = buf_names[i + 1]
        final = i == len(descriptor.layers) - 1
        if ls.kind == "conv1d":
            if ls.weight_bytes() > config.model_mem_bytes:
                raise ConfigurationError(
                    f"conv layer {i} weights exceed model memory; only fc "
                    f"layers can be partitioned"
                )
            if final:
                raise ConfigurationError("the final layer must be an fc layer")
            kernels.append(ConvKernel(ls, i, in_buf, out_buf))
        elif ls.kind == "layernorm":
            kernels.append(LayerNormKernel(ls, i, in_buf, out_buf))
        else:
            residual_buf = None
            if ls.residual:
                if i == 0:
                    raise ConfigurationError("fc residual needs a preceding layer")
                residual_buf = buf_names[i - 1]
            ranges = partition_fc(ls, config.model_mem_bytes)
            for p, (lo, hi) in enumerate(ranges):
                kernels.append(
                    FcKernel(ls, i, lo, hi, p, len(ranges), in_buf, out_buf,
                             residual_buf=residual_buf, final=final)
                )
    return kernels
