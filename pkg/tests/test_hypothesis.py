import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from asrpu.errors import KernelFault, SimulationError
from asrpu.hypothesis import (
    BacklinkArena,
    Hypothesis,
    HypothesisStore,
    RECORD_BYTES,
    root_hypothesis,
)


def hyp(h, score, **kw):
    fields = dict(lexicon_node=0, lm_state=0, backlink=-1, last_token=0, label_hash=h)
    fields.update(kw)
    return Hypothesis(hash=h, score=score, **fields)


class TestCapacity:
    def test_24kb_memory_holds_1024_records(self):
        store = HypothesisStore.from_memory_bytes(24 * 1024)
        assert RECORD_BYTES == 24
        assert store.capacity_records == 1024

    def test_capacity_prune_keeps_top_by_score(self):
        store = HypothesisStore.from_memory_bytes(24 * 1024)
        for i in range(2000):
            store.submit(hyp(i, -float(i)))
        n = store.finalize_step(math.inf)
        assert n == 1024
        assert min(h.score for h in store.active) == -1023.0

    def test_capacity_ties_break_by_smaller_hash(self):
        store = HypothesisStore(2)
        for h in (9, 4, 7):
            store.submit(hyp(h, -1.0))
        store.finalize_step(math.inf)
        assert sorted(h.hash for h in store.active) == [4, 7]


class TestFinalize:
    def test_beam_prunes_below_best_minus_beam(self):
        store = HypothesisStore(1024)
        for h, s in ((1, -1.0), (2, -5.0), (3, -12.0)):
            store.submit(hyp(h, s))
        n = store.finalize_step(10.0)
        assert n == 2
        assert sorted(h.score for h in store.active) == [-5.0, -1.0]

    def test_zero_beam_keeps_only_ties_with_best(self):
        store = HypothesisStore(1024)
        for h, s in ((1, -1.0), (2, -1.0), (3, -1.5)):
            store.submit(hyp(h, s))
        assert store.finalize_step(0.0) == 2

    def test_duplicate_hash_max_merge(self):
        store = HypothesisStore(1024)
        store.submit(hyp(5, -3.0, backlink=10))
        store.submit(hyp(5, -2.0, backlink=20))
        store.finalize_step(math.inf)
        assert len(store.active) == 1
        assert store.active[0].score == -2.0
        assert store.active[0].backlink == 20

    def test_duplicate_merge_is_deferred_to_finalize(self):
        store = HypothesisStore(1024)
        store.submit(hyp(5, -3.0))
        store.submit(hyp(5, -4.0))
        assert len(store.incoming) == 2

    def test_merge_score_tie_keeps_first_submission(self):
        store = HypothesisStore(1024)
        store.submit(hyp(5, -2.0, backlink=1))
        store.submit(hyp(5, -2.0, backlink=2))
        store.finalize_step(math.inf)
        assert store.active[0].backlink == 1

    def test_empty_incoming_is_an_error(self):
        store = HypothesisStore(1024)
        with pytest.raises(SimulationError):
            store.finalize_step(1.0)

    def test_nan_score_is_a_kernel_fault(self):
        store = HypothesisStore(1024)
        with pytest.raises(KernelFault):
            store.submit(hyp(1, float("nan")))

    def test_merge_idempotence(self):
        subs = [hyp(1, -1.0), hyp(1, -3.0), hyp(2, -2.0), hyp(2, -0.5)]
        s1 = HypothesisStore(1024)
        for h in subs:
            s1.submit(h)
        s1.finalize_step(math.inf)
        # pre-merged input produces the same active set
        s2 = HypothesisStore(1024)
        s2.submit(hyp(1, -1.0))
        s2.submit(hyp(2, -0.5))
        s2.finalize_step(math.inf)
        assert [(h.hash, h.score) for h in s1.active] == [
            (h.hash, h.score) for h in s2.active
        ]

    @given(st.lists(st.tuples(st.integers(0, 6), st.floats(-50, 0)),
                    min_size=1, max_size=40), st.floats(0, 20))
    @settings(deadline=None, max_examples=80)
    def test_submit_order_invariance(self, items, beam):
        # distinct scores per hash so max-merge has a unique winner
        seen = {}
        for h, s in items:
            seen.setdefault(h, set()).add(s)
        items = [(h, s) for h, ss in seen.items() for s in ss]
        shuffled = items[:]
        random.Random(0).shuffle(shuffled)
        outs = []
        for order in (items, shuffled):
            store = HypothesisStore(8)
            for h, s in order:
                store.submit(hyp(h, s))
            store.finalize_step(beam)
            outs.append([(h.hash, h.score) for h in store.active])
        assert outs[0] == outs[1]

    def test_beam_invariant_after_finalize(self):
        store = HypothesisStore(1024)
        rng = random.Random(1)
        for i in range(50):
            store.submit(hyp(i, -20 * rng.random()))
        store.finalize_step(7.5)
        best = max(h.score for h in store.active)
        assert all(h.score >= best - 7.5 for h in store.active)


class TestQueries:
    def test_active_count_after_reset(self):
        store = HypothesisStore(1024)
        store.reset()
        assert store.active_count() == 1
        assert store.active[0].score == 0.0

    def test_best_single(self):
        store = HypothesisStore(1024)
        store.submit(hyp(3, -2.0))
        store.finalize_step(math.inf)
        assert store.best_hypothesis().hash == 3

    def test_best_of_two(self):
        store = HypothesisStore(1024)
        store.submit(hyp(1, -1.0))
        store.submit(hyp(2, -5.0))
        store.finalize_step(math.inf)
        assert store.best_hypothesis().score == -1.0

    def test_best_tie_prefers_smaller_hash(self):
        store = HypothesisStore(1024)
        store.submit(hyp(7, -1.0))
        store.submit(hyp(3, -1.0))
        store.finalize_step(math.inf)
        assert store.best_hypothesis().hash == 3

    def test_best_of_empty_store_is_an_error(self):
        with pytest.raises(SimulationError):
            HypothesisStore(4).best_hypothesis()

    def test_dump_shape(self):
        store = HypothesisStore(16)
        store.reset()
        rows = store.dump()
        assert len(rows) == 1 and len(rows[0]) == 4


class TestArena:
    def test_root_backtracks_to_empty(self):
        arena = BacklinkArena()
        assert arena.backtrack(-1) == []

    def test_two_word_chain(self):
        arena = BacklinkArena()
        first = arena.add(-1, 11)
        second = arena.add(first, 22)
        assert arena.backtrack(second) == [11, 22]

    def test_broken_chain(self):
        arena = BacklinkArena()
        with pytest.raises(SimulationError):
            arena.backtrack(5)

    def test_root_hypothesis_fields(self):
        root = root_hypothesis()
        assert root.score == 0.0 and root.backlink == -1 and root.lexicon_node == 0
