import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asrpu.assets import make_bigram_lm
from asrpu.errors import InputError
from asrpu.lexicon import LexiconTrie, TokenTable
from asrpu.lm import LmStateTable, NGramLM
from tests.conftest import TINY_LM_TEXT


def prefix_set_oracle(entries):
    """Node count of a trie = distinct non-empty prefixes, plus the root."""

    prefixes = set()
    for _, spelling in entries:
        for i in range(1, len(spelling) + 1):
            prefixes.add(tuple(spelling[:i]))
    return len(prefixes) + 1


class TestTokenTable:
    def test_parse_and_lookup(self):
        tt = TokenTable.parse("<blank> 0\na 1\nb 2\n")
        assert tt.id("b") == 2 and tt.symbol(1) == "a" and len(tt) == 3

    def test_blank_must_be_id_zero(self):
        with pytest.raises(InputError):
            TokenTable.parse("a 0\n<blank> 1\n")

    def test_ids_contiguous(self):
        with pytest.raises(InputError):
            TokenTable.parse("<blank> 0\na 2\n")

    def test_dump_roundtrip(self):
        tt = TokenTable(["<blank>", "x", "y"])
        assert TokenTable.parse(tt.dump()).symbols == tt.symbols


class TestTrie:
    def test_shared_prefix(self):
        trie = LexiconTrie.from_entries([("cat", [3, 1, 20]), ("car", [3, 1, 18])])
        # c, ca, cat, car below the root: 5 nodes total
        assert trie.n_nodes == 5
        assert trie.out_degree(trie.root) == 1

    def test_empty_lexicon_is_root_only(self):
        assert LexiconTrie.from_entries([]).n_nodes == 1

    def test_word_ids_at_final_nodes(self):
        trie = LexiconTrie.from_entries([("a", [1]), ("b", [1])])  # homophones
        node = trie.node_children(trie.root)[0][1]
        assert sorted(trie.words[w] for w in trie.words_at(node)) == ["a", "b"]

    def test_duplicate_entry_warns_and_is_ignored(self):
        trie = LexiconTrie()
        trie.add("cat", [1, 2])
        with pytest.warns(UserWarning):
            trie.add("cat", [1, 2])
        assert trie.n_nodes == 3

    def test_insertion_order_does_not_matter(self):
        entries = [("ab", [1, 2]), ("ac", [1, 3]), ("b", [2])]
        t1 = LexiconTrie.from_entries(entries)
        t2 = LexiconTrie.from_entries(entries[::-1])
        assert t1.n_nodes == t2.n_nodes

        def shape(trie, node=0):
            return sorted(
                (tok, shape(trie, child)) for tok, child in trie.node_children(node)
            )

        assert shape(t1) == shape(t2)

    @given(st.lists(st.lists(st.integers(1, 5), min_size=1, max_size=6),
                    min_size=1, max_size=40))
    @settings(deadline=None, max_examples=50)
    def test_node_count_matches_prefix_set_oracle(self, spellings):
        entries = [(f"w{i}", sp) for i, sp in enumerate(spellings)]
        trie = LexiconTrie.from_entries(entries)
        assert trie.n_nodes == prefix_set_oracle(entries)

    def test_csr_matches_children(self):
        trie = LexiconTrie.from_entries([("cat", [3, 1, 20]), ("car", [3, 1, 18])])
        ptr, toks, nodes = trie.csr()
        for n in range(trie.n_nodes):
            kids = list(zip(toks[ptr[n]:ptr[n + 1]], nodes[ptr[n]:ptr[n + 1]]))
            assert [(int(a), int(b)) for a, b in kids] == trie.node_children(n)

    def test_parse_rejects_blank_in_spelling(self):
        tt = TokenTable(["<blank>", "a"])
        with pytest.raises(InputError):
            LexiconTrie.parse("word <blank> a\n", tt)


class TestArpa:
    def test_bigram_present(self):
        lm = NGramLM.parse(TINY_LM_TEXT)
        score, state = lm.lookup(("the",), "cat")
        assert score == pytest.approx(-0.5)
        assert state == ("cat",)

    def test_backoff_path(self):
        lm = NGramLM.parse(TINY_LM_TEXT)
        score, state = lm.lookup(("the",), "dog")
        assert score == pytest.approx(-0.3 + -2.0)
        assert state == ("dog",)

    def test_empty_context_unigram(self):
        lm = NGramLM.parse(TINY_LM_TEXT)
        score, state = lm.lookup((), "cat")
        assert score == pytest.approx(-0.7)

    def test_declared_counts_enforced(self):
        bad = TINY_LM_TEXT.replace("ngram 2=2", "ngram 2=3")
        with pytest.raises(InputError):
            NGramLM.parse(bad)

    def test_dump_parse_roundtrip(self):
        lm = make_bigram_lm(["aa", "bb", "cc"], seed=3)
        back = NGramLM.parse(lm.dump())
        assert set(back.probs) == set(lm.probs)
        for key, val in lm.probs.items():
            assert back.probs[key] == pytest.approx(val, abs=1e-6)
        for key, val in lm.backoffs.items():
            assert back.backoffs[key] == pytest.approx(val, abs=1e-6)

    def test_oov_routes_through_unk(self):
        lm = make_bigram_lm(["aa", "bb"], seed=0)
        score, state = lm.score_word((), "zzz")
        assert score == lm.probs[("<unk>",)]

    def test_generated_lm_is_normalized(self):
        lm = make_bigram_lm([f"w{i}" for i in range(12)], seed=7)
        contexts = [()] + sorted(lm.backoffs)
        for ctx in contexts:
            total = sum(10 ** lm.lookup(ctx, w)[0] for w in lm.vocab)
            assert total <= 1 + 1e-6
            assert total == pytest.approx(1.0, abs=1e-9)


class TestLmStateTable:
    def test_interning(self):
        t = LmStateTable()
        a = t.id(("the",))
        assert t.id(("the",)) == a
        assert t.context(a) == ("the",)
        assert t.id(()) == 0
