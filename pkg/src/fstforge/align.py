"""Character alignment of string pairs and removal of input-side epsilons.

Two aligners are provided: a Gibbs-sampled aligner driven by global pair
counts (CRP-style) and a local minimum-edit-distance aligner.  Both produce
monotone alignments.  The merge functions then fold every ``(ε, y)`` step into
a neighbouring step so that each step consumes exactly one input symbol.
"""
from __future__ import annotations

import heapq
import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .fst import EPS

Step = tuple[str, str]  # (input symbol or EPS, output symbol or EPS)
MergedStep = tuple[str, tuple[str, ...]]

DUMP_EPS = "_"


@dataclass(frozen=True)
class StringPair:
    input: tuple[str, ...]
    output: tuple[str, ...]

    @classmethod
    def of(cls, inp: Iterable[str], out: Iterable[str]) -> "StringPair":
        return cls(tuple(inp), tuple(out))


@dataclass(frozen=True)
class AlignedSequence:
    steps: tuple[Step, ...]

    def __post_init__(self):
        for i, o in self.steps:
            if i == EPS and o == EPS:
                raise ValueError("(ε, ε) step in alignment")

    @property
    def input(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.steps if i != EPS)

    @property
    def output(self) -> tuple[str, ...]:
        return tuple(o for _, o in self.steps if o != EPS)

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class MergedSequence:
    steps: tuple[MergedStep, ...]

    def __post_init__(self):
        if any(i == EPS for i, _ in self.steps):
            raise ValueError("merged sequence contains an epsilon input")

    @property
    def input(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.steps)

    @property
    def output(self) -> tuple[str, ...]:
        return tuple(s for _, o in self.steps for s in o)

    @property
    def labels(self) -> tuple[tuple[str, ...], ...]:
        return tuple(o for _, o in self.steps)

    def __len__(self):
        return len(self.steps)


class PairCounts:
    """Counts of aligned (input, output) pairs with add-alpha smoothing."""

    def __init__(self, vocab_size: int, alpha: float = 0.1):
        self.counts: Counter = Counter()
        self.total = 0
        self.alpha = alpha
        self.vocab_size = vocab_size

    def add(self, steps: Iterable[Step], sign: int = 1):
        for s in steps:
            self.counts[s] += sign
            self.total += sign

    def prob(self, pair: Step, own: Counter | None = None, own_total: int = 0) -> float:
        c = self.counts[pair] - (own[pair] if own else 0)
        return (c + self.alpha) / (self.total - own_total + self.alpha * self.vocab_size)


# moves in tie-break preference order: diagonal, insertion (ε, y), deletion (x, ε)
_DIAG, _INS, _DEL = 0, 1, 2


def _lattice(x, y, prob, combine):
    """Fill an (n+1) x (m+1) table over monotone alignments.

    ``combine`` is ``sum`` for forward probabilities or ``max`` for Viterbi.
    """
    n, m = len(x), len(y)
    table = [[0.0] * (m + 1) for _ in range(n + 1)]
    table[0][0] = 1.0
    for i in range(n + 1):
        row = table[i]
        for j in range(m + 1):
            if i == 0 and j == 0:
                continue
            terms = []
            if i and j:
                terms.append(table[i - 1][j - 1] * prob((x[i - 1], y[j - 1])))
            if j:
                terms.append(row[j - 1] * prob((EPS, y[j - 1])))
            if i:
                terms.append(table[i - 1][j] * prob((x[i - 1], EPS)))
            row[j] = combine(terms)
    return table


def _backtrace(x, y, table, prob, rng: random.Random | None) -> tuple[Step, ...]:
    i, j = len(x), len(y)
    steps = []
    while i or j:
        cands = []
        if i and j:
            cands.append((_DIAG, table[i - 1][j - 1] * prob((x[i - 1], y[j - 1]))))
        if j:
            cands.append((_INS, table[i][j - 1] * prob((EPS, y[j - 1]))))
        if i:
            cands.append((_DEL, table[i - 1][j] * prob((x[i - 1], EPS))))
        if rng is None:
            best = max(w for _, w in cands)
            move = next(mv for mv, w in cands if w == best)
        else:
            r = rng.random() * sum(w for _, w in cands)
            move = cands[-1][0]
            for mv, w in cands:
                r -= w
                if r < 0:
                    move = mv
                    break
        if move == _DIAG:
            steps.append((x[i - 1], y[j - 1]))
            i, j = i - 1, j - 1
        elif move == _INS:
            steps.append((EPS, y[j - 1]))
            j -= 1
        else:
            steps.append((x[i - 1], EPS))
            i -= 1
    steps.reverse()
    return tuple(steps)


def _random_alignment(x, y, rng: random.Random) -> tuple[Step, ...]:
    i = j = 0
    steps = []
    while i < len(x) or j < len(y):
        moves = []
        if i < len(x) and j < len(y):
            moves.append(_DIAG)
        if j < len(y):
            moves.append(_INS)
        if i < len(x):
            moves.append(_DEL)
        mv = rng.choice(moves)
        if mv == _DIAG:
            steps.append((x[i], y[j]))
            i, j = i + 1, j + 1
        elif mv == _INS:
            steps.append((EPS, y[j]))
            j += 1
        else:
            steps.append((x[i], EPS))
            i += 1
    return tuple(steps)


def _positionwise(x, y) -> tuple[Step, ...]:
    return tuple(zip(x, y))


def crp_align(
    pairs: Sequence[StringPair],
    iterations: int = 10,
    seed: int = 0,
    alpha: float = 0.1,
    incremental: bool = False,
    final: str = "map",
) -> list[AlignedSequence]:
    """Gibbs-sampled monotone alignment driven by corpus-wide pair counts.

    Equal-length pairs are aligned position by position and only contribute
    counts.  Each iteration resamples every other pair from the forward
    lattice, with that pair's own current counts removed.  Counts are
    recomputed after a full sweep unless ``incremental`` is set.  With
    ``final="map"`` the returned alignments are Viterbi decodes under the
    last counts; ``final="sample"`` returns the last Gibbs sample.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if final not in ("map", "sample"):
        raise ValueError(f"unknown final decode {final!r}")
    rng = random.Random(seed)
    in_syms = {s for p in pairs for s in p.input}
    out_syms = {s for p in pairs for s in p.output}
    vocab = (len(in_syms) + 1) * (len(out_syms) + 1) - 1
    fixed = [len(p.input) == len(p.output) for p in pairs]
    current = [
        _positionwise(p.input, p.output) if fx else _random_alignment(p.input, p.output, rng)
        for p, fx in zip(pairs, fixed)
    ]
    counts = PairCounts(vocab, alpha)
    for steps in current:
        counts.add(steps)

    for _ in range(iterations):
        frozen = counts  # blocked mode rebuilds counts only after the sweep
        for k, p in enumerate(pairs):
            if fixed[k]:
                continue
            own = Counter(current[k])
            if incremental:
                counts.add(current[k], -1)

                def prob(pair, c=counts):
                    return c.prob(pair)
            else:
                own_total = len(current[k])

                def prob(pair, c=frozen, own=own, own_total=own_total):
                    return c.prob(pair, own, own_total)

            table = _lattice(p.input, p.output, prob, sum)
            new = _backtrace(p.input, p.output, table, prob, rng)
            if incremental:
                counts.add(new)
            current[k] = new
        if not incremental:
            counts = PairCounts(vocab, alpha)
            for steps in current:
                counts.add(steps)

    if final == "map":
        for k, p in enumerate(pairs):
            if fixed[k]:
                continue
            own = Counter(current[k])
            own_total = len(current[k])

            def prob(pair, c=counts, own=own, own_total=own_total):
                return c.prob(pair, own, own_total)

            table = _lattice(p.input, p.output, prob, max)
            current[k] = _backtrace(p.input, p.output, table, prob, None)
    return [AlignedSequence(s) for s in current]


def med_align(pairs: Sequence[StringPair]) -> list[AlignedSequence]:
    """Unit-cost Levenshtein alignment; ties prefer match, substitution, insertion, deletion.

    Equal-length pairs are aligned positionwise even when an insert/delete
    path would be cheaper, matching the CRP aligner.
    """
    return [AlignedSequence(_positionwise(p.input, p.output) if len(p.input) == len(p.output)
                            else _med(p.input, p.output)) for p in pairs]


def _med(x, y) -> tuple[Step, ...]:
    n, m = len(x), len(y)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(
                d[i - 1][j - 1] + (x[i - 1] != y[j - 1]),
                d[i][j - 1] + 1,
                d[i - 1][j] + 1,
            )
    i, j = n, m
    steps = []
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (x[i - 1] != y[j - 1]):
            steps.append((x[i - 1], y[j - 1]))
            i, j = i - 1, j - 1
        elif j and d[i][j] == d[i][j - 1] + 1:
            steps.append((EPS, y[j - 1]))
            j -= 1
        else:
            steps.append((x[i - 1], EPS))
            i -= 1
    steps.reverse()
    return tuple(steps)


def edit_cost(a: AlignedSequence) -> int:
    return sum(1 for i, o in a.steps if i != o)


def merge_epsilons_right(a: AlignedSequence) -> MergedSequence:
    """Prepend each (ε, y) output to the next step with a real input.

    Trailing epsilons have no following input and are appended to the last
    real step instead.
    """
    merged: list[list] = []
    pending: list[str] = []
    for i, o in a.steps:
        if i == EPS:
            pending.append(o)
            continue
        out = pending + ([o] if o != EPS else [])
        merged.append([i, out])
        pending = []
    if pending:
        if not merged:
            raise ValueError("alignment has no input symbols to merge into")
        merged[-1][1].extend(pending)
    return MergedSequence(tuple((i, tuple(o)) for i, o in merged))


def merge_epsilons_greedy(alignments: Sequence[AlignedSequence]) -> list[MergedSequence]:
    """Repeatedly merge the corpus-wide most frequent (neighbour, ε) adjacency.

    A candidate is an ε-input step next to a real-input step; its key is
    ``(ε output, neighbour input, neighbour output, side)`` where side is
    ``"left"`` when the neighbour precedes the ε step.  Every instance of the
    most frequent key is merged (the ε output is concatenated on the side
    facing the neighbour), counts are updated, and the process repeats.  Ties
    go to the smallest key.
    """
    seqs: list[list[list]] = []
    for a in alignments:
        if a.steps and all(i == EPS for i, _ in a.steps):
            raise ValueError("alignment has no input symbols to merge into")
        seqs.append([[i, (o,) if o != EPS else ()] for i, o in a.steps])

    def candidates(seq):
        for k, (i, o) in enumerate(seq):
            if i != EPS:
                continue
            if k > 0 and seq[k - 1][0] != EPS:
                yield (o, seq[k - 1][0], seq[k - 1][1], "left")
            if k + 1 < len(seq) and seq[k + 1][0] != EPS:
                yield (o, seq[k + 1][0], seq[k + 1][1], "right")

    counts: Counter = Counter()
    where: dict = defaultdict(set)
    contrib: list[Counter] = []
    for n, seq in enumerate(seqs):
        c = Counter(candidates(seq))
        contrib.append(c)
        counts.update(c)
        for key in c:
            where[key].add(n)
    heap = [(-v, key) for key, v in counts.items()]
    heapq.heapify(heap)

    while heap:
        negv, key = heapq.heappop(heap)
        if counts.get(key, 0) != -negv or negv == 0:
            continue
        eps_out, n_in, n_out, side = key
        for n in sorted(where.pop(key, ())):
            seq = seqs[n]
            k = 0
            while k < len(seq):
                i, o = seq[k]
                if i == EPS and o == eps_out:
                    if side == "left" and k > 0 and seq[k - 1][0] == n_in and seq[k - 1][1] == n_out:
                        seq[k - 1][1] = seq[k - 1][1] + o
                        del seq[k]
                        continue
                    if (side == "right" and k + 1 < len(seq) and seq[k + 1][0] == n_in
                            and seq[k + 1][1] == n_out):
                        seq[k + 1][1] = o + seq[k + 1][1]
                        del seq[k]
                        continue
                k += 1
            old, new = contrib[n], Counter(candidates(seq))
            contrib[n] = new
            for key2 in set(old) | set(new):
                delta = new[key2] - old[key2]
                if delta:
                    counts[key2] += delta
                    if counts[key2] <= 0:
                        del counts[key2]
                    else:
                        heapq.heappush(heap, (-counts[key2], key2))
                if new[key2]:
                    where[key2].add(n)
                else:
                    where[key2].discard(n)
    for seq in seqs:
        if any(i == EPS for i, _ in seq):  # unreachable unless keys collide
            raise RuntimeError("greedy merge left an epsilon input")
    return [MergedSequence(tuple((i, tuple(o)) for i, o in seq)) for seq in seqs]


def format_alignment(a: AlignedSequence | MergedSequence) -> str:
    """One-line dump: space-separated ``in:out`` tokens, epsilon as ``_``."""
    toks = []
    for i, o in a.steps:
        if isinstance(o, tuple):
            o = "".join(o)
        toks.append(f"{i or DUMP_EPS}:{o or DUMP_EPS}")
    return " ".join(toks)


def parse_alignment(line: str) -> AlignedSequence:
    steps = []
    for tok in line.split():
        i, sep, o = tok.rpartition(":")
        if not sep:
            raise ValueError(f"bad alignment token {tok!r}")
        steps.append((EPS if i == DUMP_EPS else i, EPS if o == DUMP_EPS else o))
    return AlignedSequence(tuple(steps))
