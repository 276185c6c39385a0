"""Glue between datasets, aligners, the RNN, extraction and evaluation."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

from .align import (
    AlignedSequence,
    MergedSequence,
    StringPair,
    crp_align,
    med_align,
    merge_epsilons_greedy,
    merge_epsilons_right,
)
from .data import Dataset
from .domain import fit_ngram, gen_inflection_swap, gen_ngram_strings
from .errors import FstForgeError
from .fst import END, EPS, Transducer

DEFAULT_MERGE = {"inflection": "greedy", "g2p": "right", "normalization": "right"}


@dataclass
class EvalReport:
    accuracy: float
    correct: int
    wrong: int
    no_path: int
    states: int | None = None
    transitions: int | None = None
    wall_clock_s: float = 0.0

    @property
    def total(self) -> int:
        return self.correct + self.wrong + self.no_path

    def as_dict(self):
        return asdict(self)


class FstSystem:
    """Applies a transducer to raw inputs, appending the end marker."""

    def __init__(self, fst: Transducer):
        self.fst = fst

    def __call__(self, x: Sequence[str]) -> tuple[str, ...]:
        return self.fst.apply(tuple(x) + (END,))


def evaluate(system: Callable[[Sequence[str]], Sequence[str]], pairs: Sequence[StringPair],
             fst: Transducer | None = None) -> EvalReport:
    """Exact-match accuracy.  Inputs the system cannot process count as no-path."""
    if fst is None and isinstance(system, FstSystem):
        fst = system.fst
    start = time.monotonic()
    correct = wrong = no_path = 0
    for p in pairs:
        try:
            y = tuple(system(p.input))
        except (FstForgeError, KeyError):
            no_path += 1
            continue
        if y == tuple(p.output):
            correct += 1
        else:
            wrong += 1
    n = len(pairs)
    return EvalReport(
        accuracy=correct / n if n else 0.0,
        correct=correct, wrong=wrong, no_path=no_path,
        states=fst.num_states if fst is not None else None,
        transitions=fst.num_transitions if fst is not None else None,
        wall_clock_s=time.monotonic() - start,
    )


def align_pairs(ds: Dataset, pairs: Sequence[StringPair], method: str = "crp",
                iterations: int = 10, seed: int = 0) -> list[AlignedSequence]:
    """Character alignments with the end marker appended.

    For inflection only the lemma is aligned; tag tokens are prefixed as
    (tag, ε) steps.
    """
    if ds.task == "inflection":
        split = [ds.split_tags(p.input) for p in pairs]
        core = [StringPair(lemma, p.output) for (_, lemma), p in zip(split, pairs)]
    else:
        split = [((), p.input) for p in pairs]
        core = list(pairs)
    if method == "crp":
        aligned = crp_align(core, iterations=iterations, seed=seed)
    elif method == "med":
        aligned = med_align(core)
    else:
        raise ValueError(f"unknown aligner {method!r}")
    out = []
    for (tags, _), a in zip(split, aligned):
        steps = tuple((t, EPS) for t in tags) + a.steps + ((END, EPS),)
        out.append(AlignedSequence(steps))
    return out


def merge(aligned: Sequence[AlignedSequence], how: str) -> list[MergedSequence]:
    if how == "right":
        return [merge_epsilons_right(a) for a in aligned]
    if how == "greedy":
        return merge_epsilons_greedy(aligned)
    raise ValueError(f"unknown merge strategy {how!r}")


def training_sequences(ds: Dataset, method: str = "crp", how: str | None = None,
                       iterations: int = 10, seed: int = 0) -> list[MergedSequence]:
    return merge(align_pairs(ds, ds.train, method, iterations, seed), how or DEFAULT_MERGE[ds.task])


def synthetic_inputs(ds: Dataset, cap: int = 50_000, max_len: int = 6, n: int = 2,
                     seed: int = 0) -> list[tuple[str, ...]]:
    """Plausible unseen inputs (end marker appended)."""
    if ds.task == "inflection":
        ex = [ds.split_tags(p.input) for p in ds.train]
        raw = gen_inflection_swap([e for e in ex if e[0] and e[1]], cap=cap, seed=seed)
    else:
        m = fit_ngram([p.input for p in ds.train], n)
        raw = gen_ngram_strings(m, max_len, cap=cap, seed=seed)
    return [tuple(s) + (END,) for s in raw]
