"""Back-off n-gram language model over an ARPA-style text subset.

The file carries a ``\\data\\`` section with per-order entry counts and
``\\N-grams:`` sections whose lines are ``log10prob  w1 ... wN  [backoff]``.
Word probabilities resolve by standard back-off: use the longest stored
n-gram, otherwise add the context's back-off weight (default 0) and retry
with the shortened context.  All scores stay in log10, as stored.
"""

from .errors import InputError

UNK = "<unk>"


class NGramLM:
    def __init__(self, order, probs, backoffs):
        self.order = order
        self.probs = probs  # tuple(words) -> log10 prob
        self.backoffs = backoffs  # tuple(context words) -> log10 backoff
        self.vocab = sorted({key[-1] for key in probs if len(key) == 1})

    def has_word(self, word):
        return (word,) in self.probs

    def lookup(self, context, word):
        """Back-off evaluation; returns (log10 score, new context tuple).

        ``word`` must be in the vocabulary (callers map OOV words to the
        unknown token first).  The new context is the last order-1 words of
        context + word.
        """

        new_state = (tuple(context) + (word,))[-(self.order - 1):] if self.order > 1 else ()
        score = self._score(tuple(context), word)
        return score, new_state

    def _score(self, context, word):
        key = context + (word,)
        if key in self.probs:
            return self.probs[key]
        if not context:
            raise InputError(f"word {word!r} missing from the unigram section")
        return self.backoffs.get(context, 0.0) + self._score(context[1:], word)

    def score_word(self, context, word):
        """Like lookup, but routes out-of-vocabulary words through <unk>."""

        if not self.has_word(word):
            if not self.has_word(UNK):
                raise InputError(
                    f"word {word!r} not in the LM and no {UNK!r} entry present"
                )
            word = UNK
        return self.lookup(context, word)

    @classmethod
    def parse(cls, text):
        lines = iter(enumerate(text.splitlines(), start=1))
        counts = {}
        in_data = False
        for lineno, raw in lines:
            line = raw.strip()
            if not line:
                continue
            if line == "\\data\\":
                in_data = True
                continue
            if in_data and line.startswith("ngram"):
                try:
                    spec = line.split(None, 1)[1]
                    order_s, count_s = spec.split("=")
                    counts[int(order_s)] = int(count_s)
                except ValueError:
                    raise InputError(f"LM line {lineno}: bad ngram count {line!r}") from None
                continue
            if line.endswith("-grams:") and line.startswith("\\"):
                first_section = line
                break
        else:
            raise InputError("LM file has no n-gram sections")
        if not counts:
            raise InputError("LM file has no \\data\\ counts")
        order = max(counts)
        probs = {}
        backoffs = {}
        section = int(first_section[1:].split("-")[0])
        seen = {n: 0 for n in counts}
        for lineno, raw in lines:
            line = raw.strip()
            if not line:
                continue
            if line == "\\end\\":
                section = None
                break
            if line.endswith("-grams:") and line.startswith("\\"):
                section = int(line[1:].split("-")[0])
                if section not in counts:
                    raise InputError(f"LM line {lineno}: section {section} not declared")
                continue
            parts = line.split()
            if len(parts) < section + 1:
                raise InputError(f"LM line {lineno}: too few fields for a {section}-gram")
            try:
                logp = float(parts[0])
            except ValueError:
                raise InputError(f"LM line {lineno}: bad probability {parts[0]!r}") from None
            words = tuple(parts[1 : 1 + section])
            probs[words] = logp
            if len(parts) > section + 1:
                if len(parts) != section + 2:
                    raise InputError(f"LM line {lineno}: trailing fields")
                backoffs[words] = float(parts[section + 1])
            seen[section] += 1
        for n, declared in counts.items():
            if seen.get(n, 0) != declared:
                raise InputError(
                    f"LM declares {declared} {n}-grams but carries {seen.get(n, 0)}"
                )
        return cls(order, probs, backoffs)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def dump(self):
        by_order = {}
        for key in self.probs:
            by_order.setdefault(len(key), []).append(key)
        out = ["\\data\\"]
        for n in sorted(by_order):
            out.append(f"ngram {n}={len(by_order[n])}")
        out.append("")
        for n in sorted(by_order):
            out.append(f"\\{n}-grams:")
            for key in sorted(by_order[n]):
                line = f"{self.probs[key]:.8f}\t{' '.join(key)}"
                if key in self.backoffs:
                    line += f"\t{self.backoffs[key]:.8f}"
                out.append(line)
            out.append("")
        out.append("\\end\\")
        return "\n".join(out) + "\n"


class LmStateTable:
    """Interns LM context tuples to dense ids (state 0 = empty context)."""

    def __init__(self):
        self._ids = {(): 0}
        self._states = [()]

    def id(self, context):
        context = tuple(context)
        sid = self._ids.get(context)
        if sid is None:
            sid = len(self._states)
            self._ids[context] = sid
            self._states.append(context)
        return sid

    def context(self, sid):
        return self._states[sid]

    def __len__(self):
        return len(self._states)
