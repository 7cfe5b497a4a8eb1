"""Feature-extraction kernel: 80-dim MFCC frames from raw audio.

Per frame: DC removal, pre-emphasis, window, power spectrum, mel triangular
filterbank, log with a floor, orthonormal DCT-II keeping all coefficients.
The batch path computes all of a step's frames with vectorized NumPy; the
literal path computes one frame through the costed PE primitives and is
used to pin down the instruction-count formula.
"""

import math

import numpy as np

from .config import FrontendParams
from .costs import DEFAULT_COSTS, loop_cost


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(n_mels, n_fft, sample_rate, fmin=0.0, fmax=None):
    """Triangular filters on the mel scale spanning 0 Hz to Nyquist.

    Returns an (n_mels, n_fft//2 + 1) weight matrix.
    """

    if fmax is None:
        fmax = sample_rate / 2.0
    points_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    weights = np.zeros((n_mels, n_fft // 2 + 1), dtype=np.float64)
    for m in range(n_mels):
        left, center, right = points_hz[m], points_hz[m + 1], points_hz[m + 2]
        rising = (bin_hz - left) / (center - left)
        falling = (right - bin_hz) / (right - center)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def build_dct_matrix(n):
    """Orthonormal DCT-II basis; row k dotted with x gives coefficient k."""

    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    mat *= math.sqrt(2.0 / n)
    mat[0] *= math.sqrt(0.5)
    return mat


def dct2(x):
    """Orthonormal DCT-II of a 1-D vector."""

    x = np.asarray(x, dtype=np.float64)
    return build_dct_matrix(x.shape[0]) @ x


def mel_project(power_spectrum, filterbank):
    """Apply the triangular filterbank to a non-negative power spectrum."""

    ps = np.asarray(power_spectrum, dtype=np.float64)
    if np.any(ps < 0):
        raise ValueError("power spectrum must be non-negative")
    return filterbank @ ps


def build_window(kind, length):
    if kind == "hamming":
        return np.hamming(length)
    if kind == "hann":
        return np.hanning(length)
    if kind == "rect":
        return np.ones(length, dtype=np.float64)
    raise ValueError(f"unknown window {kind!r}")


def frames_fitting(n_samples, frame_len, frame_shift):
    """How many whole analysis windows fit into the first n_samples."""

    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // frame_shift + 1


def _bit_reverse_table(n):
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.int64)
    for i in range(n):
        r = 0
        x = i
        for _ in range(bits):
            r = (r << 1) | (x & 1)
            x >>= 1
        rev[i] = r
    return rev


class MfccConstants:
    """Precomputed tables shared by both compute paths; these constants are
    the frontend kernel's model blob."""

    def __init__(self, params: FrontendParams):
        self.params = params
        self.window = build_window(params.window, params.frame_len)
        self.mel = build_mel_filterbank(params.n_mels, params.n_fft, params.sample_rate)
        self.dct = build_dct_matrix(params.n_mels)
        self.bitrev = _bit_reverse_table(params.n_fft)
        n = params.n_fft
        self.tw_cos = []
        self.tw_sin = []
        m = 2
        while m <= n:
            j = np.arange(m // 2)
            self.tw_cos.append(np.cos(-2.0 * np.pi * j / m))
            self.tw_sin.append(np.sin(-2.0 * np.pi * j / m))
            m *= 2
        self.mel_spans = [int(np.count_nonzero(row)) for row in self.mel]

    @property
    def blob_bytes(self):
        # f32 window + mel weights + dct basis, as stored in model memory
        return 4 * (self.window.size + self.mel.size + self.dct.size)


def mfcc_frames_batch(samples, frame_ids, consts):
    """Compute MFCC frames ``frame_ids`` from the whole-utterance sample
    stream slice ``samples`` starting at absolute sample ``base``.

    ``samples`` must cover every requested window.  Returns float32
    (n_frames, n_mels).
    """

    p = consts.params
    base, signal = samples
    out = np.empty((len(frame_ids), p.n_mels), dtype=np.float64)
    if not frame_ids:
        return out.astype(np.float32)
    idx = np.asarray(frame_ids, dtype=np.int64)
    starts = idx * p.frame_shift - base
    win = np.stack([signal[s : s + p.frame_len] for s in starts]).astype(np.float64)
    win = win - win.mean(axis=1, keepdims=True)
    pre = np.empty_like(win)
    pre[:, 1:] = win[:, 1:] - p.preemphasis * win[:, :-1]
    pre[:, 0] = win[:, 0] - p.preemphasis * win[:, 0]
    pre *= consts.window
    spec = np.fft.rfft(pre, n=p.n_fft, axis=1)
    power = spec.real**2 + spec.imag**2
    mel = power @ consts.mel.T
    logmel = np.log(np.maximum(mel, p.log_floor))
    out = logmel @ consts.dct.T
    return out.astype(np.float32)


def mfcc_frame_literal(pe, window_samples, consts):
    """One MFCC frame through the costed primitives; returns float32 coeffs.

    Charges exactly ``mfcc_thread_cost`` instructions.  The FFT here is an
    iterative radix-2 transform, so values can differ from the batch path's
    FFT in the last few ulps.
    """

    p = consts.params
    w = p.frame_len
    n = p.n_fft
    x = np.asarray(window_samples, dtype=np.float64)

    # DC removal: mean accumulation then scale
    acc = 0.0
    pe.loop_overhead(w)
    for i in range(w):
        pe.load()
        pe.add()
        acc += x[i]
    pe.mul()
    mean = acc * (1.0 / w)

    # pre-emphasis + window into the real FFT buffer
    re = np.zeros(n, dtype=np.float64)
    pe.loop_overhead(w)
    for i in range(w):
        pe.load(); pe.add()  # x[i] - mean
        xi = x[i] - mean
        pe.load(); pe.add()  # x[i-1] - mean (x[0] reused at i=0)
        xp = x[i - 1] - mean if i > 0 else xi
        pe.mul(); pe.add()
        v = xi - p.preemphasis * xp
        pe.load(); pe.mul(); pe.store()
        re[i] = v * consts.window[i]
    pe.loop_overhead(n - w)
    pe.store(n - w)  # zero tail

    # radix-2 FFT: bit-reverse copy (imaginary part zeroed on the way),
    # then log2(n) butterfly stages
    a = np.empty(n, dtype=np.float64)
    b = np.zeros(n, dtype=np.float64)
    pe.loop_overhead(n)
    for i in range(n):
        pe.load(2)
        pe.store(2)
        a[i] = re[consts.bitrev[i]]
        b[i] = 0.0
    stages = n.bit_length() - 1
    pe.loop_overhead(stages)
    for s in range(stages):
        m = 2 << s
        half = m >> 1
        pe.add(2)  # per-stage setup
        pe.loop_overhead(n // 2)
        for k in range(n // 2):
            grp = (k // half) * m
            j = k % half
            i1 = grp + j
            i2 = i1 + half
            pe.add(3)  # index arithmetic
            pe.load(2)
            wr = consts.tw_cos[s][j]
            wi = consts.tw_sin[s][j]
            pe.load(2)
            xr = a[i2]
            xi2 = b[i2]
            pe.mul(2); pe.add()
            tr = wr * xr - wi * xi2
            pe.mul(2); pe.add()
            ti = wr * xi2 + wi * xr
            pe.load(2)
            ur = a[i1]
            ui = b[i1]
            pe.add(2); pe.store(2)
            a[i1] = ur + tr
            b[i1] = ui + ti
            pe.add(2); pe.store(2)
            a[i2] = ur - tr
            b[i2] = ui - ti

    # power spectrum of the first n/2+1 bins
    nbins = n // 2 + 1
    power = np.empty(nbins, dtype=np.float64)
    pe.loop_overhead(nbins)
    for i in range(nbins):
        pe.load(2); pe.mul(2); pe.add(); pe.store()
        power[i] = a[i] * a[i] + b[i] * b[i]

    # sparse triangular filters, log with floor
    m_out = np.empty(p.n_mels, dtype=np.float64)
    pe.loop_overhead(p.n_mels)
    for f in range(p.n_mels):
        pe.move()
        acc = 0.0
        row = consts.mel[f]
        nz = np.nonzero(row)[0]
        pe.loop_overhead(len(nz))
        for kbin in nz:
            pe.load(2); pe.mul(); pe.add()
            acc += row[kbin] * power[kbin]
        pe.compare()
        if acc < p.log_floor:
            acc = p.log_floor
        m_out[f] = pe.sfu_eval("log", acc)
        pe.store()

    # dense DCT
    coeffs = np.empty(p.n_mels, dtype=np.float64)
    pe.loop_overhead(p.n_mels)
    for k in range(p.n_mels):
        pe.move()
        acc = 0.0
        pe.loop_overhead(p.n_mels)
        for i in range(p.n_mels):
            pe.load(2); pe.mul(); pe.add()
            acc += consts.dct[k, i] * m_out[i]
        pe.store()
        coeffs[k] = acc
    return coeffs.astype(np.float32)


def mfcc_thread_cost(consts, table=DEFAULT_COSTS):
    """Closed-form instruction count of one feature-extraction thread.

    Mirrors ``mfcc_frame_literal`` piece by piece:

    * DC mean:        loop(W, load+add) + mul
    * pre-emph/window loop(W, 9)
    * zero pad:       loop(N-W, store)
    * bit-reverse:    loop(N, 4)
    * butterflies:    loop(log2 N, 2 + loop(N/2, 23))
    * power:          loop(N/2+1, 6)
    * mel filters:    1 + sum_f(3 + 1 + loop(span_f, 4) + 3)
    * DCT:            loop(M, 2 + loop(M, 4))
    """

    p = consts.params
    w, n, m = p.frame_len, p.n_fft, p.n_mels
    t = table
    cost = loop_cost(w, t.load + t.add, t) + t.mul
    body_pre = 2 * (t.load + t.add) + (t.mul + t.add) + (t.load + t.mul + t.store)
    cost += loop_cost(w, body_pre, t)
    cost += loop_cost(n - w, t.store, t)
    cost += loop_cost(n, 2 * t.load + 2 * t.store, t)
    body_bfly = 3 * t.add + 2 * t.load + 2 * t.load + (2 * t.mul + t.add) * 2 + 2 * t.load + (2 * t.add + 2 * t.store) * 2
    stage_body = 2 * t.add + loop_cost(n // 2, body_bfly, t)
    cost += loop_cost(n.bit_length() - 1, stage_body, t)
    cost += loop_cost(n // 2 + 1, 2 * t.load + 2 * t.mul + t.add + t.store, t)
    mel_total = t.loop_init
    for span in consts.mel_spans:
        body = t.move + loop_cost(span, 2 * t.load + t.mul + t.add, t) + t.compare + t.sfu + t.store
        mel_total += t.loop_iter_overhead + body
    cost += mel_total
    dct_body = t.move + loop_cost(m, 2 * t.load + t.mul + t.add, t) + t.store
    cost += loop_cost(m, dct_body, t)
    return cost
