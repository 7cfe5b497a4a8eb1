"""Workload generators: the reference acoustic model, demo lexicon and LM,
synthetic audio, and the planted-signal correctness workload.

The reference model reproduces the published layer mix (18 conv, 29 fc,
32 layernorm), 1200-wide FC trunk layers that split in two under the 1 MB
model memory, and a 9000-token output layer.  No trained checkpoint is
claimed: weights are seeded pseudo-random for performance runs, and the
planted workload wires matched-filter weights so the pipeline provably
decodes a known sentence.
"""

import wave

import numpy as np

from .config import FrontendParams, SystemConfig, dump_config
from .errors import InputError
from .frontend import MfccConstants, mfcc_frames_batch
from .lexicon import LexiconTrie, TokenTable
from .lm import NGramLM, UNK
from .model import LayerSpec, ModelDescriptor, materialize_weights, quantize, save_model

LETTERS = "abcdefghijklmnopqrstuvwxyz"

DEMO_WORDS = [
    "and", "ask", "bat", "bed", "big", "cab", "cat", "cut", "dig", "dog",
    "eat", "fig", "fun", "get", "hat", "hit", "jam", "kit", "log", "man",
    "net", "owl", "pit", "rat", "red", "sun", "ten", "the", "tip", "wet",
]


def reference_descriptor(n_tokens=9000):
    """The 79-layer time-depth-separable trunk used by the reference runs."""

    layers = [
        LayerSpec("conv1d", 80, 80, width=10, stride=2, groups=10, relu=True),
        LayerSpec("layernorm", 80, 80),
        LayerSpec("fc", 80, 1200, relu=True),
        LayerSpec("layernorm", 1200, 1200),
    ]
    for _ in range(13):
        layers.extend([
            LayerSpec("conv1d", 1200, 1200, width=14, stride=1, groups=100,
                      relu=True, residual=True),
            LayerSpec("layernorm", 1200, 1200),
            LayerSpec("fc", 1200, 1200, relu=True),
            LayerSpec("fc", 1200, 1200, residual=True),
            LayerSpec("layernorm", 1200, 1200),
        ])
    for _ in range(4):
        layers.extend([
            LayerSpec("conv1d", 1200, 1200, width=14, stride=1, groups=100,
                      relu=True, residual=True),
            LayerSpec("layernorm", 1200, 1200),
        ])
    layers.append(LayerSpec("fc", 1200, 1200, relu=True))
    layers.append(LayerSpec("fc", 1200, n_tokens, log_softmax=True))
    return ModelDescriptor(layers, n_tokens, name="reference-tds")


def reference_model(n_tokens=9000, seed=0):
    return materialize_weights(reference_descriptor(n_tokens), seed=seed)


def reference_tokens(n_tokens=9000):
    symbols = [TokenTable.BLANK] + list(LETTERS)
    symbols += [f"u{i}" for i in range(len(symbols), n_tokens)]
    return TokenTable(symbols[:n_tokens])


def demo_lexicon(tokens, words=DEMO_WORDS):
    return LexiconTrie.from_entries(
        [(w, [tokens.id(ch) for ch in w]) for w in words]
    )


def make_bigram_lm(words, seed=0, n_bigram_contexts=8):
    """A small, exactly normalized back-off bigram LM over ``words``.

    For every stored context the probabilities over the full vocabulary sum
    to one: explicit bigram rows get mass ``m`` and the back-off weight
    redistributes ``1 - m`` over the remaining words.
    """

    rng = np.random.default_rng(seed)
    vocab = list(words) + [UNK]
    raw = rng.random(len(vocab)) + 0.2
    p1 = raw / raw.sum()
    probs = {(w,): float(np.log10(p1[i])) for i, w in enumerate(vocab)}
    backoffs = {}
    contexts = list(rng.choice(len(words), size=min(n_bigram_contexts, len(words)),
                               replace=False))
    for ci in contexts:
        ctx = vocab[ci]
        k = min(int(rng.integers(2, max(3, len(words) // 3))), len(words))
        followers = list(rng.choice(len(words), size=k, replace=False))
        mass = 0.55
        raw2 = rng.random(k) + 0.3
        q = raw2 / raw2.sum() * mass
        p1_followers = sum(p1[f] for f in followers)
        if p1_followers >= 0.999:
            continue
        backoff = (1.0 - mass) / (1.0 - p1_followers)
        for f, qf in zip(followers, q):
            probs[(ctx, vocab[f])] = float(np.log10(qf))
        backoffs[(ctx,)] = float(np.log10(backoff))
    return NGramLM(2, probs, backoffs)


# -- audio -------------------------------------------------------------------

def write_wav(path, samples, sample_rate=16000):
    """PCM 16-bit mono WAV."""

    pcm = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 32767.0 / 32768.0)
    data = (pcm * 32768.0).astype("<i2").tobytes()
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(data)


def synth_speechlike_audio(seconds=2.0, sample_rate=16000, seed=0):
    """Band-limited modulated noise; exercises the reference pipeline."""

    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    sig = np.zeros(n)
    for f0, a in ((160, 0.25), (410, 0.18), (960, 0.12), (2300, 0.07)):
        phase = rng.random() * 2 * np.pi
        sig += a * np.sin(2 * np.pi * f0 * t + phase)
    sig *= 0.6 + 0.4 * np.sin(2 * np.pi * 3.1 * t + rng.random())
    sig += 0.02 * rng.standard_normal(n)
    return np.clip(sig * 0.5, -0.99, 0.99)


# -- planted-signal workload --------------------------------------------------

class PlantedWorkload:
    """Everything needed to decode a known sentence end to end."""

    def __init__(self, descriptor, tokens, trie, lm, audio, sentence, frame_symbols):
        self.descriptor = descriptor
        self.tokens = tokens
        self.trie = trie
        self.lm = lm
        self.audio = audio
        self.sentence = sentence
        self.frame_symbols = frame_symbols


def _tone(freq, n, sample_rate, t0):
    t = (t0 + np.arange(n)) / sample_rate
    return 0.35 * np.sin(2 * np.pi * freq * t)


def build_planted_workload(frontend: FrontendParams = None, seed=0,
                           sentence=("hi", "my", "cat")):
    """Construct audio plus a matched-filter model that spells ``sentence``.

    The audio alternates letter tones with silence; the model's single FC
    layer holds one matched filter per token built from that token's MFCC
    prototype, scaled so the log-softmax output is near one-hot.  The
    builder verifies the per-frame argmax before returning.
    """

    if frontend is None:
        frontend = FrontendParams()
    letters = sorted({ch for w in sentence for ch in w})
    symbols = [TokenTable.BLANK] + letters
    tokens = TokenTable(symbols)
    freqs = {ch: 500.0 + 420.0 * i for i, ch in enumerate(letters)}

    # frame plan: silence-separated letter segments with internal repeats
    rng = np.random.default_rng(seed)
    plan = ["~"] * 3  # '~' is silence
    for w in sentence:
        for ch in w:
            plan += [ch] * int(rng.integers(4, 6))
            plan += ["~"] * 3
        plan += ["~"] * 2
    plan += ["~"] * 3

    shift, width = frontend.frame_shift, frontend.frame_len
    n_samples = len(plan) * shift + (width - shift)
    audio = np.zeros(n_samples)
    for f, sym in enumerate(plan):
        lo = f * shift
        hi = min(lo + shift, n_samples)
        if sym != "~":
            audio[lo:hi] = _tone(freqs[sym], hi - lo, frontend.sample_rate, lo)
    # extend the final region so the last frames see defined signal
    audio[len(plan) * shift:] = 0.0

    # MFCC prototypes per symbol from pure windows
    consts = MfccConstants(frontend)
    protos = {}
    for sym in symbols:
        if sym == TokenTable.BLANK:
            win = np.zeros(width)
        else:
            win = _tone(freqs[sym], width, frontend.sample_rate, 0)
        protos[sym] = mfcc_frames_batch((0, win), [0], consts)[0].astype(np.float64)

    # matched filters over the representation the layer actually sees: the
    # int8-quantized MFCC prototypes, mean-centered across the letter tones.
    # Coefficient 0 (overall log energy) saturates the int8 range, so the
    # filters ignore it; the tone identity lives in the AC coefficients.
    # Blank is "no tone present": a zero filter plus a positive bias that
    # every letter's self-score has to beat.
    in_scale = 0.25
    proto_mat = np.stack([protos[s] for s in symbols])
    q_protos = quantize(proto_mat, in_scale).astype(np.float64)
    tone_rows = q_protos[1:]
    centered = tone_rows - tone_rows.mean(axis=0, keepdims=True)
    centered[:, 0] = 0.0
    w_int8 = np.zeros_like(q_protos, dtype=np.int8)
    w_int8[1:] = quantize(127.0 * centered / np.abs(centered).max(), 1.0)
    cross = q_protos @ w_int8.T.astype(np.float64)  # row i: scores of proto i
    tone_diag = np.diag(cross)[1:]
    off = cross.copy()
    np.fill_diagonal(off, -np.inf)
    worst_off = off[:, 1:].max()  # best non-matching tone response anywhere
    theta = 0.5 * tone_diag.min()
    gap = min(tone_diag.min() - theta, theta - off[0, 1:].max(),
              tone_diag.min() - worst_off)
    if gap <= 0:
        raise InputError("planted prototypes are not separable")
    # aim for ~40 logits of margin between the planted token and the rest
    w_scale = float(40.0 / (gap * in_scale))
    bias = np.zeros(len(symbols), dtype=np.float32)
    bias[0] = theta * in_scale * w_scale
    layer = LayerSpec(
        "fc", frontend.n_mels, len(symbols), log_softmax=True,
        in_scale=in_scale, w_scale=w_scale, out_scale=1.0,
        weights=w_int8, bias=bias,
    )
    descriptor = ModelDescriptor([layer], len(symbols), name="planted")

    # verify: pure frames must classify to their planted symbol
    n_frames = (n_samples - width) // shift + 1
    feats = mfcc_frames_batch(
        (0, audio), list(range(n_frames)), consts
    ).astype(np.float64)
    logits = quantize(feats, in_scale).astype(np.float64) @ w_int8.T.astype(np.float64)
    logits = logits * (in_scale * w_scale) + bias
    arg = logits.argmax(axis=1)
    for f in range(n_frames):
        window_syms = {plan[min(f + d, len(plan) - 1)] for d in range(3)}
        if len(window_syms) == 1:
            want = window_syms.pop()
            want = TokenTable.BLANK if want == "~" else want
            got = symbols[arg[f]]
            if got != want:
                raise InputError(
                    f"planted workload failed self-check at frame {f}: "
                    f"expected {want!r}, classified {got!r}"
                )

    words = list(dict.fromkeys(sentence))
    trie = LexiconTrie.from_entries([(w, [tokens.id(ch) for ch in w]) for w in words])
    lm = make_bigram_lm(words, seed=seed + 1)
    return PlantedWorkload(descriptor, tokens, trie, lm, audio, list(sentence), plan)


# -- on-disk asset bundles -----------------------------------------------------

def trie_entries_text(trie, tokens):
    lines = []
    seen = set()

    def walk(node, prefix):
        for wid in trie.words_at(node):
            if wid not in seen:
                seen.add(wid)
                lines.append(f"{trie.words[wid]} {' '.join(tokens.symbol(t) for t in prefix)}")
        for t, child in trie.node_children(node):
            walk(child, prefix + [t])

    walk(trie.root, [])
    return "\n".join(lines) + "\n"


def write_reference_assets(out_dir, seed=0, seconds=2.0, n_tokens=9000,
                           beam_width=14.0):
    """Write config, model, tokens, lexicon, LM and audio for the reference
    workload; returns the path map."""

    import os

    os.makedirs(out_dir, exist_ok=True)
    cfg = SystemConfig()
    cfg.decode.beam_width = beam_width
    cfg.decode.lm_weight = 0.8
    paths = {name: os.path.join(out_dir, fname) for name, fname in (
        ("config", "config.cfg"), ("model", "model.bin"), ("tokens", "tokens.txt"),
        ("lexicon", "lexicon.txt"), ("lm", "lm.arpa"), ("audio", "audio.wav"),
    )}
    with open(paths["config"], "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))
    model = reference_model(n_tokens=n_tokens, seed=seed)
    save_model(model, paths["model"])
    tokens = reference_tokens(n_tokens)
    with open(paths["tokens"], "w", encoding="utf-8") as fh:
        fh.write(tokens.dump())
    trie = demo_lexicon(tokens)
    with open(paths["lexicon"], "w", encoding="utf-8") as fh:
        fh.write(trie_entries_text(trie, tokens))
    lm = make_bigram_lm(DEMO_WORDS, seed=seed)
    with open(paths["lm"], "w", encoding="utf-8") as fh:
        fh.write(lm.dump())
    write_wav(paths["audio"], synth_speechlike_audio(seconds, cfg.frontend.sample_rate, seed))
    return paths


def write_planted_assets(out_dir, seed=0, sentence=("hi", "my", "cat")):
    """Write the planted-signal bundle; returns (paths, expected sentence)."""

    import os

    os.makedirs(out_dir, exist_ok=True)
    cfg = SystemConfig()
    cfg.decode.beam_width = 25.0
    cfg.decode.lm_weight = 0.5
    wl = build_planted_workload(cfg.frontend, seed=seed, sentence=sentence)
    paths = {name: os.path.join(out_dir, fname) for name, fname in (
        ("config", "config.cfg"), ("model", "model.bin"), ("tokens", "tokens.txt"),
        ("lexicon", "lexicon.txt"), ("lm", "lm.arpa"), ("audio", "audio.wav"),
        ("expected", "expected.txt"),
    )}
    with open(paths["config"], "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))
    save_model(wl.descriptor, paths["model"])
    with open(paths["tokens"], "w", encoding="utf-8") as fh:
        fh.write(wl.tokens.dump())
    with open(paths["lexicon"], "w", encoding="utf-8") as fh:
        fh.write(trie_entries_text(wl.trie, wl.tokens))
    with open(paths["lm"], "w", encoding="utf-8") as fh:
        fh.write(wl.lm.dump())
    write_wav(paths["audio"], wl.audio, cfg.frontend.sample_rate)
    with open(paths["expected"], "w", encoding="utf-8") as fh:
        fh.write(" ".join(wl.sentence) + "\n")
    return paths, wl.sentence
