"""Shared test fixtures and, above all, the independent oracles.

Every oracle here is deliberately written against the *definition* of the
operation (enumeration, naive O(N^2) transforms, list-scan LRU), not
against the implementation under test.
"""

import math

import numpy as np
import pytest

from asrpu.config import DecodeParams, SystemConfig
from asrpu.lexicon import LexiconTrie, TokenTable


# -- naive signal-processing oracles ----------------------------------------

def naive_dft_power(padded, n_fft):
    """O(N^2) DFT power spectrum of an already windowed/padded frame."""

    bins = n_fft // 2 + 1
    n = np.arange(n_fft)
    power = np.zeros(bins)
    for k in range(bins):
        ang = -2.0 * np.pi * k * n / n_fft
        re = float((padded * np.cos(ang)).sum())
        im = float((padded * np.sin(ang)).sum())
        power[k] = re * re + im * im
    return power


def naive_mfcc_frame(window_samples, consts):
    """MFCC of one frame via naive DFT, direct mel sums and cosine-sum DCT."""

    p = consts.params
    x = np.asarray(window_samples, dtype=np.float64)
    x = x - x.mean()
    pre = np.empty_like(x)
    pre[1:] = x[1:] - p.preemphasis * x[:-1]
    pre[0] = x[0] - p.preemphasis * x[0]
    pre = pre * consts.window
    padded = np.zeros(p.n_fft)
    padded[: x.shape[0]] = pre
    power = naive_dft_power(padded, p.n_fft)
    mel = np.zeros(p.n_mels)
    for f in range(p.n_mels):
        mel[f] = float((consts.mel[f] * power).sum())
    logmel = np.log(np.maximum(mel, p.log_floor))
    out = np.zeros(p.n_mels)
    for k in range(p.n_mels):
        scale = math.sqrt(1.0 / p.n_mels) if k == 0 else math.sqrt(2.0 / p.n_mels)
        angles = np.pi * k * (2 * np.arange(p.n_mels) + 1) / (2 * p.n_mels)
        out[k] = scale * float((logmel * np.cos(angles)).sum())
    return out


# -- LRU oracle ---------------------------------------------------------------

def lru_oracle(line_ids, capacity_lines):
    """List-scan LRU (move-to-front over a plain list); returns (hits, misses)."""

    stack = []
    hits = misses = 0
    for lid in line_ids:
        lid = int(lid)
        if lid in stack:
            hits += 1
            stack.remove(lid)
        else:
            misses += 1
            if len(stack) >= capacity_lines:
                stack.pop()  # least recent lives at the tail
        stack.insert(0, lid)
    return hits, misses


# -- exhaustive CTC decode oracle ----------------------------------------------

def exhaustive_ctc_best(score_rows, trie, lm, params):
    """Enumerate every frame-symbol path and score it under the decoder's
    automaton semantics; returns (best score, set of best transcripts).

    A path chooses per frame: the blank, a repeat of the previous frame's
    token, or a trie child (excluding the just-emitted token unless a blank
    intervened).  Word-final nodes emit their word (branching over
    homophones), add the weighted LM score plus the word penalty, and reset
    to the root.
    """

    rows = np.asarray(score_rows, dtype=np.float64)
    T, n_tok = rows.shape
    blank = params.blank_id
    best = [-math.inf, set()]

    def visit(t, node, context, last, score, words):
        if t == T:
            if score > best[0] + 1e-12:
                best[0] = score
                best[1] = {tuple(words)}
            elif abs(score - best[0]) <= 1e-12:
                best[1].add(tuple(words))
            return
        row = rows[t]
        visit(t + 1, node, context, blank, score + row[blank], words)
        if last != blank:
            visit(t + 1, node, context, last, score + row[last], words)
        for tok, child in trie.node_children(node):
            if tok >= n_tok:
                continue
            if last != blank and tok == last:
                continue
            base = score + row[tok]
            finals = trie.words_at(child)
            if finals:
                for wid in finals:
                    word = trie.words[wid]
                    lm_score, new_ctx = lm.score_word(context, word)
                    visit(
                        t + 1, trie.root, new_ctx, tok,
                        base + params.lm_weight * lm_score + params.word_penalty,
                        words + [word],
                    )
            else:
                visit(t + 1, child, context, tok, base, words)

    visit(0, trie.root, (), blank, 0.0, [])
    return best[0], best[1]


def random_ctc_instance(rng, max_tokens=5, max_words=4, t_max=6):
    """A random tiny decode problem: lexicon, normalized bigram LM, scores."""

    n_tokens = int(rng.integers(3, max_tokens + 1))  # includes blank
    alphabet = list(range(1, n_tokens))
    n_words = int(rng.integers(1, max_words + 1))
    words = []
    spellings = set()
    for i in range(n_words):
        for _ in range(20):
            length = int(rng.integers(1, 4))
            sp = tuple(int(rng.choice(alphabet)) for _ in range(length))
            if sp not in spellings:
                spellings.add(sp)
                words.append((f"w{i}", list(sp)))
                break
    trie = LexiconTrie.from_entries(words)
    from asrpu.assets import make_bigram_lm

    lm = make_bigram_lm([w for w, _ in words], seed=int(rng.integers(1 << 30)))
    T = int(rng.integers(2, t_max + 1))
    rows = rng.standard_normal((T, n_tokens)) * 2.0
    params = DecodeParams(
        beam_width=math.inf,
        lm_weight=float(rng.uniform(0.3, 1.5)),
        word_penalty=float(rng.uniform(-0.5, 0.5)),
    )
    return rows, trie, lm, params


# -- tiny engine workloads -----------------------------------------------------

@pytest.fixture
def small_system():
    """Config + model + decoder assets small enough for fast engine runs."""

    from asrpu.assets import make_bigram_lm
    from asrpu.model import LayerSpec, ModelDescriptor, materialize_weights

    cfg = SystemConfig()
    cfg.decode.beam_width = 12.0
    desc = ModelDescriptor(
        [
            LayerSpec("conv1d", 80, 80, width=2, stride=2, groups=1, relu=True),
            LayerSpec("layernorm", 80, 80),
            LayerSpec("fc", 80, 6, log_softmax=True),
        ],
        n_tokens=6,
    )
    materialize_weights(desc, seed=3)
    tokens = TokenTable(["<blank>", "a", "b", "c", "d", "e"])
    trie = LexiconTrie.from_entries(
        [("cab", [3, 1, 2]), ("dad", [4, 1, 4]), ("be", [2, 5])]
    )
    lm = make_bigram_lm(["cab", "dad", "be"], seed=5)
    return cfg, desc, tokens, trie, lm


def build_small_accelerator(cfg, desc, trie, lm, **kw):
    from asrpu.runner import build_accelerator

    return build_accelerator(cfg, desc, trie, lm, **kw)


TINY_LM_TEXT = """\\data\\
ngram 1=3
ngram 2=2

\\1-grams:
-0.8\tthe\t-0.3
-2.0\tdog
-0.7\tcat

\\2-grams:
-0.5\tthe cat
-1.2\tthe the

\\end\\
"""
