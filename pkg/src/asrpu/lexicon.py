"""Lexicon trie over acoustic token spellings, plus the token symbol table.

File formats:

* token table: one ``symbol id`` pair per line; the blank symbol must sit
  at id 0.
* lexicon: one entry per line, the word followed by its whitespace-
  separated token symbols.
"""

import warnings

import numpy as np

from .errors import InputError


class TokenTable:
    """Bidirectional symbol <-> id map with blank pinned at id 0."""

    BLANK = "<blank>"

    def __init__(self, symbols):
        self.symbols = list(symbols)
        if not self.symbols or self.symbols[0] != self.BLANK:
            raise InputError(f"token id 0 must be {self.BLANK!r}")
        self.ids = {s: i for i, s in enumerate(self.symbols)}
        if len(self.ids) != len(self.symbols):
            raise InputError("duplicate token symbols")

    def __len__(self):
        return len(self.symbols)

    def id(self, symbol):
        try:
            return self.ids[symbol]
        except KeyError:
            raise InputError(f"unknown token symbol {symbol!r}") from None

    def symbol(self, token_id):
        return self.symbols[token_id]

    @classmethod
    def parse(cls, text):
        pairs = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InputError(f"token table line {lineno}: expected 'symbol id'")
            try:
                pairs.append((parts[0], int(parts[1])))
            except ValueError:
                raise InputError(f"token table line {lineno}: bad id {parts[1]!r}") from None
        pairs.sort(key=lambda p: p[1])
        if [i for _, i in pairs] != list(range(len(pairs))):
            raise InputError("token ids must be contiguous from 0")
        return cls([s for s, _ in pairs])

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def dump(self):
        return "".join(f"{s} {i}\n" for i, s in enumerate(self.symbols))


class LexiconTrie:
    """Prefix tree of token spellings; word-final nodes carry word ids.

    Internally CSR-friendly: per node a dict of children plus a word list;
    flattened child arrays are built on demand for the expansion kernel.
    """

    def __init__(self):
        self.children = [{}]  # node -> {token_id: child_node}
        self.node_words = [[]]  # node -> word ids ending here
        self.words = []  # word id -> string
        self._word_ids = {}
        self._seen_entries = set()
        self._csr = None

    @property
    def root(self):
        return 0

    @property
    def n_nodes(self):
        return len(self.children)

    def word_id(self, word):
        if word not in self._word_ids:
            self._word_ids[word] = len(self.words)
            self.words.append(word)
        return self._word_ids[word]

    def add(self, word, token_ids):
        """Insert one (word, spelling) entry; duplicates are ignored."""

        if not token_ids:
            raise InputError(f"word {word!r} has an empty spelling")
        key = (word, tuple(token_ids))
        if key in self._seen_entries:
            warnings.warn(f"duplicate lexicon entry for {word!r}; ignored", stacklevel=2)
            return
        self._seen_entries.add(key)
        self._csr = None
        node = 0
        for t in token_ids:
            nxt = self.children[node].get(t)
            if nxt is None:
                nxt = len(self.children)
                self.children[node][t] = nxt
                self.children.append({})
                self.node_words.append([])
            node = nxt
        wid = self.word_id(word)
        if wid not in self.node_words[node]:
            self.node_words[node].append(wid)

    def out_degree(self, node):
        return len(self.children[node])

    def node_children(self, node):
        """(token_id, child_node) pairs in ascending token order."""

        return sorted(self.children[node].items())

    def words_at(self, node):
        return self.node_words[node]

    def csr(self):
        """Flattened child arrays: (ptr, tokens, nodes) with ptr of len n+1."""

        if self._csr is None:
            ptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
            toks = []
            nodes = []
            for n in range(self.n_nodes):
                kids = self.node_children(n)
                ptr[n + 1] = ptr[n] + len(kids)
                toks.extend(t for t, _ in kids)
                nodes.extend(c for _, c in kids)
            self._csr = (
                ptr,
                np.asarray(toks, dtype=np.int64),
                np.asarray(nodes, dtype=np.int64),
            )
        return self._csr

    @classmethod
    def from_entries(cls, entries):
        trie = cls()
        for word, token_ids in entries:
            trie.add(word, token_ids)
        return trie

    @classmethod
    def parse(cls, text, tokens: TokenTable):
        trie = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 2:
                raise InputError(f"lexicon line {lineno}: expected 'word tokens...'")
            word, spelling = parts[0], parts[1:]
            ids = [tokens.id(s) for s in spelling]
            if 0 in ids:
                raise InputError(f"lexicon line {lineno}: blank cannot appear in a spelling")
            trie.add(word, ids)
        return trie

    @classmethod
    def load(cls, path, tokens: TokenTable):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read(), tokens)
