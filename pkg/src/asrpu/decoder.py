"""CTC hypothesis expansion over a lexicon trie with n-gram LM fusion.

Each expansion thread takes one active hypothesis and submits:

* a blank extension (labeling unchanged, last token becomes blank),
* a repeat extension when the last token is not blank (state unchanged),
* one extension per trie child, skipping the child whose token equals the
  last emitted token when no blank intervened (consecutive repeats collapse
  in CTC, so re-entering the same unit needs a blank in between).  Reaching
  a word-final node adds the weighted LM score and the word penalty,
  records the word in the backlink arena and resets the node to the root;
  nodes carrying several words (homophones) branch once per word.

Thread instruction counts depend only on the node's out-degree: excluded
children and non-final children charge the same predicated per-child cost.
"""

from dataclasses import dataclass, replace

import numpy as np

from .costs import DEFAULT_COSTS, loop_cost
from .errors import KernelFault
from .hypothesis import (
    Hypothesis,
    HypothesisStore,
    TAG_BLANK,
    TAG_TOKEN,
    TAG_WORD,
    fnv1a_mix,
)
from .lm import LmStateTable

EXPAND_BASE_COST = 40  # hypothesis fetch, blank and repeat submissions
EXPAND_PER_CHILD_COST = 28  # child fetch, score add, hash, LM fuse, submit

# synthetic address map for the graph structures touched during expansion;
# only the LRU cache statistics ever see these
_NODE_REGION = 0x1000_0000
_CHILD_REGION = 0x2000_0000
_LM_REGION = 0x3000_0000
_NODE_STRIDE = 32
_CHILD_STRIDE = 8
_LM_STRIDE = 16


def expand_thread_cost(out_degree, table=DEFAULT_COSTS):
    """Charged instructions for expanding one hypothesis."""

    return EXPAND_BASE_COST + EXPAND_PER_CHILD_COST * out_degree


@dataclass
class DecoderRuntime:
    """Read-only decode state shared by all expansion threads."""

    trie: object
    lm: object
    params: object  # DecodeParams
    states: LmStateTable
    arena: object

    def lm_fuse(self, lm_state, word_id):
        context = self.states.context(lm_state)
        score, new_ctx = self.lm.score_word(context, self.trie.words[word_id])
        return score, self.states.id(new_ctx)


def expand_hypothesis(h, scores, rt, submit, cache_addrs=None):
    """Expand one hypothesis against one acoustic score vector.

    Calls ``submit`` for every generated hypothesis, appends touched graph
    addresses to ``cache_addrs`` and returns the submission count.
    """

    params = rt.params
    blank = params.blank_id
    n_tok = scores.shape[0]
    if cache_addrs is not None:
        cache_addrs.append(_NODE_REGION + h.lexicon_node * _NODE_STRIDE)

    submitted = 0
    submit(
        Hypothesis(
            hash=fnv1a_mix(h.label_hash, TAG_BLANK, 0),
            score=h.score + float(scores[blank]),
            lexicon_node=h.lexicon_node,
            lm_state=h.lm_state,
            backlink=h.backlink,
            last_token=blank,
            label_hash=h.label_hash,
        )
    )
    submitted += 1
    if h.last_token != blank:
        if h.last_token >= n_tok:
            raise KernelFault(f"token id {h.last_token} outside score vector")
        submit(replace(h, score=h.score + float(scores[h.last_token])))
        submitted += 1

    children = rt.trie.node_children(h.lexicon_node)
    base_ptr = rt.trie.csr()[0][h.lexicon_node]
    for j, (t, child) in enumerate(children):
        if cache_addrs is not None:
            cache_addrs.append(_CHILD_REGION + (int(base_ptr) + j) * _CHILD_STRIDE)
        if t >= n_tok:
            raise KernelFault(f"token id {t} outside score vector of {n_tok}")
        if h.last_token != blank and t == h.last_token:
            continue  # same unit without an intervening blank: repeat only
        label = fnv1a_mix(h.label_hash, TAG_TOKEN, t)
        base_score = h.score + float(scores[t])
        words = rt.trie.words_at(child)
        if words:
            for wid in words:
                lm_score, new_state = rt.lm_fuse(h.lm_state, wid)
                if cache_addrs is not None:
                    cache_addrs.append(
                        _LM_REGION + ((h.lm_state << 16) + wid) * _LM_STRIDE
                    )
                wh = fnv1a_mix(label, TAG_WORD, wid)
                submit(
                    Hypothesis(
                        hash=wh,
                        score=base_score + params.lm_weight * lm_score + params.word_penalty,
                        lexicon_node=rt.trie.root,
                        lm_state=new_state,
                        backlink=rt.arena.add(h.backlink, wid),
                        last_token=t,
                        label_hash=wh,
                    )
                )
                submitted += 1
        else:
            submit(
                Hypothesis(
                    hash=label,
                    score=base_score,
                    lexicon_node=child,
                    lm_state=h.lm_state,
                    backlink=h.backlink,
                    last_token=t,
                    label_hash=label,
                )
            )
            submitted += 1
    return submitted


def backtrack(h, rt):
    """Words emitted along the hypothesis's backlink chain."""

    return [rt.trie.words[wid] for wid in rt.arena.backtrack(h.backlink)]


class CtcExpandKernel:
    """Engine-facing expansion kernel: one thread per active hypothesis."""

    kind = "hyp_expansion"
    phase = "expansion"
    name = "hyp_expansion"
    blob_id = None
    blob_bytes = 0

    def __init__(self, runtime: DecoderRuntime, apply_log_softmax=False):
        self.rt = runtime
        self.apply_log_softmax = apply_log_softmax

    def setup(self, ctx):
        """Phase setup: count the emitted score vectors and, when the model
        leaves normalization to the decoder side, log-softmax them in place."""

        from .layers import SETUP_BASE_COST

        ctx.pe.charge_raw(SETUP_BASE_COST)
        if self.apply_log_softmax:
            from .model import log_softmax

            for item in ctx.new_score_items:
                item[...] = log_softmax(item.astype(np.float64)).astype(item.dtype)
                ctx.pe.charge_raw(softmax_vector_cost(item.shape[0], ctx.pe.table))
        return ctx.n_new_scores

    def run_round(self, store: HypothesisStore, scores, cache_addrs=None):
        """Expand every active hypothesis against one score vector.

        Returns the per-thread instruction counts (threads are the active
        hypotheses in store order).
        """

        active = store.active_list()
        costs = np.empty(len(active), dtype=np.int64)
        for i, h in enumerate(active):
            expand_hypothesis(h, scores, self.rt, store.submit, cache_addrs)
            costs[i] = expand_thread_cost(self.rt.trie.out_degree(h.lexicon_node))
        return costs


def softmax_vector_cost(n, table=DEFAULT_COSTS):
    """Normalizing one score vector inside the expansion setup thread:
    a max pass, an exp-accumulate pass and a subtract pass."""

    t = table
    return (
        2 * t.move
        + loop_cost(n, t.load + t.compare, t)
        + loop_cost(n, t.load + t.add + t.sfu + t.add, t)
        + t.sfu
        + loop_cost(n, t.load + t.add + t.store, t)
    )


def beam_decode(score_rows, trie, lm, params, capacity_records=1 << 20):
    """Drive the expansion/finalize loop directly over a score matrix.

    Small-scale decode used by tests and tools; returns (best score, word
    list, store, runtime).
    """

    from .hypothesis import BacklinkArena

    rt = DecoderRuntime(trie, lm, params, LmStateTable(), BacklinkArena())
    store = HypothesisStore(capacity_records, merge_mode=params.merge_mode)
    store.reset(params.blank_id)
    kernel = CtcExpandKernel(rt)
    for row in np.asarray(score_rows, dtype=np.float64):
        kernel.run_round(store, row)
        store.finalize_step(params.beam_width)
    best = store.best_hypothesis()
    return best.score, backtrack(best, rt), store, rt
