"""Synthetic input strings that approximate a task's input domain."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError

BOS = "\x02"
EOS = "\x03"

Symbols = tuple[str, ...]


@dataclass(frozen=True)
class NgramModel:
    n: int
    grams: frozenset[Symbols]
    alphabet: Symbols = field(default=())

    def context(self, prefix: Sequence[str]) -> Symbols:
        pad = (BOS,) * (self.n - 1) + tuple(prefix)
        return pad[len(pad) - (self.n - 1):] if self.n > 1 else ()

    def admits(self, s: Sequence[str], check_end: bool = True) -> bool:
        return all(g in self.grams for g in padded_ngrams(s, self.n, check_end))


def padded_ngrams(s: Sequence[str], n: int, with_end: bool = True) -> list[Symbols]:
    pad = (BOS,) * (n - 1) + tuple(s) + ((EOS,) if with_end else ())
    return [pad[i: i + n] for i in range(len(pad) - n + 1)]


def fit_ngram(strings: Iterable[Sequence[str]], n: int = 2) -> NgramModel:
    if n < 1:
        raise ValueError("n must be at least 1")
    grams: set[Symbols] = set()
    alphabet: set[str] = set()
    for s in strings:
        s = tuple(s)
        if not s:
            continue
        alphabet.update(s)
        grams.update(padded_ngrams(s, n))
    return NgramModel(n, frozenset(grams), tuple(sorted(alphabet)))


class _Walker:
    """Depth-first order over admissible strings, with subtree counts for unranking."""

    def __init__(self, m: NgramModel, max_len: int, check_end: bool):
        self.m = m
        self.max_len = max_len
        self.check_end = check_end
        self.count = lru_cache(maxsize=None)(self._count)

    def can_end(self, ctx: Symbols) -> bool:
        return not self.check_end or (ctx + (EOS,)) in self.m.grams

    def children(self, ctx: Symbols) -> list[tuple[str, Symbols]]:
        out = []
        for c in self.m.alphabet:
            if ctx + (c,) in self.m.grams:
                out.append((c, (ctx + (c,))[1:]))
        return out

    def _count(self, ctx: Symbols, room: int, at_root: bool) -> int:
        total = 0 if at_root else int(self.can_end(ctx))
        if room > 0:
            for _, nxt in self.children(ctx):
                total += self.count(nxt, room - 1, False)
        return total

    def enumerate(self) -> list[Symbols]:
        out: list[Symbols] = []
        stack: list[tuple[Symbols, Symbols]] = [((), self.m.context(()))]
        # explicit stack: pop order must reproduce the recursive order
        while stack:
            s, ctx = stack.pop()
            if s and self.can_end(ctx):
                out.append(s)
            if len(s) < self.max_len:
                for c, nxt in reversed(self.children(ctx)):
                    stack.append((s + (c,), nxt))
        return out

    def unrank(self, r: int) -> Symbols:
        s: Symbols = ()
        ctx = self.m.context(())
        at_root = True
        while True:
            if not at_root and self.can_end(ctx):
                if r == 0:
                    return s
                r -= 1
            room = self.max_len - len(s)
            for c, nxt in self.children(ctx):
                size = self.count(nxt, room - 1, False)
                if r < size:
                    s, ctx = s + (c,), nxt
                    break
                r -= size
            else:
                raise IndexError("rank out of range")
            at_root = False


def gen_ngram_strings(m: NgramModel, max_len: int = 6, cap: int | None = None,
                      seed: int = 0, check_end: bool = True) -> list[Symbols]:
    """All non-empty strings up to ``max_len`` whose padded n-grams were all observed.

    Results come in depth-first order.  With ``cap`` set and more strings
    available, a uniform seeded sample of ``cap`` of them is returned instead
    (still in depth-first order).
    """
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    if not m.grams:
        return []
    w = _Walker(m, max_len, check_end)
    total = w.count(m.context(()), max_len, True)
    if cap is None or total <= cap:
        return w.enumerate()
    ranks = np.sort(np.random.default_rng(seed).choice(total, size=cap, replace=False))
    return [w.unrank(int(r)) for r in ranks]


def count_ngram_strings(m: NgramModel, max_len: int = 6, check_end: bool = True) -> int:
    if not m.grams:
        return 0
    w = _Walker(m, max_len, check_end)
    return w.count(m.context(()), max_len, True)


def gen_inflection_swap(examples: Sequence[tuple[Sequence[str], Sequence[str]]],
                        cap: int = 50_000, seed: int = 0) -> list[Symbols]:
    """Every tag set paired with every lemma, minus the combinations seen in training."""
    tag_sets: dict[Symbols, None] = {}
    lemmas: dict[Symbols, None] = {}
    seen = set()
    for k, ex in enumerate(examples):
        if not isinstance(ex, tuple) or len(ex) != 2:
            raise FormatError(f"example {k} is not a (tags, lemma) pair")
        tags, lemma = tuple(ex[0]), tuple(ex[1])
        if not tags or not lemma:
            raise FormatError(f"example {k} has an empty tag set or lemma")
        tag_sets.setdefault(tags)
        lemmas.setdefault(lemma)
        seen.add(tags + lemma)
    fresh = [t + l for t in tag_sets for l in lemmas if t + l not in seen]
    fresh = sorted(set(fresh))
    if len(fresh) > cap:
        keep = np.sort(np.random.default_rng(seed).choice(len(fresh), size=cap, replace=False))
        fresh = [fresh[i] for i in keep]
    return fresh


def write_strings(strings: Iterable[Sequence[str]], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in strings:
            f.write(" ".join(s) + "\n")
