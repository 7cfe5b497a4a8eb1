"""Hypothesis storage: submission, duplicate merging, sorting and beam
pruning, plus the backlink arena used to rebuild transcripts.

Hypotheses are merged by their 64-bit state hash.  Per decoding round the
expansion threads submit candidates; ``finalize_step`` then merges
duplicates (best score wins), prunes against the beam and the record
capacity, and installs the survivors as the new active set ordered by
descending score (ties to the smaller hash).
"""

import math
from dataclasses import dataclass

from .errors import KernelFault, SimulationError

RECORD_BYTES = 24  # hash 8, score 4, lexicon node 4, lm state 4, backlink 4

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# event tags mixed into the state hash (see fnv1a_mix)
TAG_TOKEN = 1
TAG_WORD = 2
TAG_BLANK = 3


def fnv1a_mix(h, tag, value):
    """Fold one tagged 64-bit event into a running FNV-1a hash."""

    for byte in int(((tag << 56) | (value & ((1 << 56) - 1)))).to_bytes(8, "little"):
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


@dataclass(slots=True)
class Hypothesis:
    """One beam-search state.

    ``hash`` identifies the decoder state: the collapsed labeling (blanks
    removed, repeats folded), the words emitted so far and whether the last
    frame was a blank.  ``label_hash`` is the same without the blank marker;
    children derive their hashes from it.
    """

    hash: int
    score: float
    lexicon_node: int
    lm_state: int
    backlink: int
    last_token: int
    label_hash: int

    def key(self):
        return (-self.score, self.hash)


def root_hypothesis(blank_id=0):
    h = FNV_OFFSET
    return Hypothesis(
        hash=fnv1a_mix(h, TAG_BLANK, 0), score=0.0, lexicon_node=0,
        lm_state=0, backlink=-1, last_token=blank_id, label_hash=h,
    )


class BacklinkArena:
    """Host-side append-only store of word emissions; entries are
    (parent index, word id) and -1 terminates a chain."""

    def __init__(self):
        self.parents = []
        self.words = []

    def add(self, parent, word_id):
        self.parents.append(parent)
        self.words.append(word_id)
        return len(self.parents) - 1

    def backtrack(self, backlink):
        """Word ids along the chain, in utterance order."""

        out = []
        idx = backlink
        while idx != -1:
            if not (0 <= idx < len(self.parents)):
                raise SimulationError(f"broken backlink chain at {idx}")
            out.append(self.words[idx])
            idx = self.parents[idx]
        out.reverse()
        return out

    def clear(self):
        self.parents.clear()
        self.words.clear()


class HypothesisStore:
    """Active and incoming hypothesis sets under a fixed record budget."""

    def __init__(self, capacity_records, merge_mode="max"):
        self.capacity_records = int(capacity_records)
        self.merge_mode = merge_mode
        self.active = []
        self.incoming = []
        self.peak_incoming = 0

    @classmethod
    def from_memory_bytes(cls, hyp_mem_bytes, merge_mode="max"):
        return cls(hyp_mem_bytes // RECORD_BYTES, merge_mode=merge_mode)

    def reset(self, blank_id=0):
        self.active = [root_hypothesis(blank_id)]
        self.incoming = []
        self.peak_incoming = 0

    def submit(self, hyp):
        if math.isnan(hyp.score):
            raise KernelFault("hypothesis submitted with NaN score")
        self.incoming.append(hyp)

    def active_count(self):
        return len(self.active)

    def active_list(self):
        return self.active

    def best_hypothesis(self):
        if not self.active:
            raise SimulationError("hypothesis store is empty")
        return min(self.active, key=Hypothesis.key)

    def finalize_step(self, beam):
        """Merge incoming by hash, beam-prune, enforce capacity; returns the
        new active count."""

        if not self.incoming:
            raise SimulationError("finalize with no submitted hypotheses")
        merged = {}
        for h in self.incoming:  # submission order = thread order (determinism)
            prev = merged.get(h.hash)
            if prev is None:
                merged[h.hash] = h
            elif self.merge_mode == "max":
                if h.score > prev.score:
                    merged[h.hash] = h
            else:  # logsumexp, keeping the better candidate's state fields
                hi, lo_ = (h, prev) if h.score > prev.score else (prev, h)
                hi = Hypothesis(
                    hi.hash, hi.score + math.log1p(math.exp(lo_.score - hi.score)),
                    hi.lexicon_node, hi.lm_state, hi.backlink, hi.last_token,
                    hi.label_hash,
                )
                merged[h.hash] = hi
        self.peak_incoming = max(self.peak_incoming, len(self.incoming))
        survivors = list(merged.values())
        best = max(s.score for s in survivors)
        if not math.isinf(beam):
            survivors = [s for s in survivors if s.score >= best - beam]
        survivors.sort(key=Hypothesis.key)
        if len(survivors) > self.capacity_records:
            survivors = survivors[: self.capacity_records]
        self.active = survivors
        self.incoming = []
        return len(self.active)

    def dump(self):
        """Debug view of the active set (hash, score, node, lm_state)."""

        return [(h.hash, h.score, h.lexicon_node, h.lm_state) for h in self.active]
