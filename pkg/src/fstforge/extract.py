"""Turn RNN hidden states into a deterministic transducer.

Hidden states are collected for training and synthetic strings, clustered
into candidate states, and clusters whose outgoing transitions disagree are
split with a linear classifier until the automaton is input-deterministic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .align import MergedSequence
from .cluster import LinearClassifier, kmeans, standardize
from .errors import ConfigError, InvalidK, SplitFailure
from .fst import Transducer, minimize, prune_inaccessible
from .rnn import ModelParams, trace_batch

ROOT = 0
SOURCES = ("root", "train", "synthetic")


@dataclass(frozen=True)
class ActivationRecord:
    id: int
    vector: np.ndarray
    prev: int  # -1 for the root
    label: tuple[str, tuple[str, ...]] | None
    source: str
    weight: float
    origin: tuple[int, int] | None  # (string index, position) of first occurrence


@dataclass
class ActivationSet:
    """Records stored column-wise.  Record 0 is the shared h_0 root.

    Records form a prefix trie keyed by (parent, input, output label), so a
    record's ``weight`` counts the strings that pass through it.
    """

    vectors: np.ndarray
    prev: np.ndarray
    inp: np.ndarray  # input symbol ids (model input table), -1 at the root
    out: np.ndarray  # output label ids (model vocab), -1 at the root
    weight: np.ndarray
    source: np.ndarray  # index into SOURCES
    origin: list
    input_symbols: list[str]
    labels: list[tuple[str, ...]]

    def __len__(self) -> int:
        return len(self.prev)

    def record(self, i: int) -> ActivationRecord:
        lab = None if i == ROOT else (self.input_symbols[self.inp[i]], self.labels[self.out[i]])
        return ActivationRecord(i, self.vectors[i], int(self.prev[i]), lab,
                                SOURCES[self.source[i]], float(self.weight[i]), self.origin[i])

    def __iter__(self):
        return (self.record(i) for i in range(len(self)))


class _Trie:
    def __init__(self, d: int):
        self.index: dict[tuple[int, int, int], int] = {}
        self.vectors = [np.zeros(d)]
        self.prev, self.inp, self.out = [-1], [-1], [-1]
        self.weight = [0.0]
        self.source = [0]
        self.origin: list = [None]

    def add_path(self, xs, ys, H, source: int, sid: int):
        self.weight[ROOT] += 1.0
        node = ROOT
        for t, (x, y) in enumerate(zip(xs, ys)):
            key = (node, int(x), int(y))
            nxt = self.index.get(key)
            if nxt is None:
                nxt = len(self.prev)
                self.index[key] = nxt
                self.vectors.append(H[t + 1])
                self.prev.append(node)
                self.inp.append(int(x))
                self.out.append(int(y))
                self.weight.append(0.0)
                self.source.append(source)
                self.origin.append((sid, t))
            self.weight[nxt] += 1.0
            node = nxt


def collect_activations(m: ModelParams, train: Sequence[MergedSequence],
                        synthetic: Iterable[Sequence[str]] = (), chunk: int = 2048) -> ActivationSet:
    """Hidden states for every prefix of the training and synthetic strings.

    Training steps carry their gold labels; synthetic steps carry the model's
    argmax predictions.  Synthetic strings equal to a training input are skipped.
    """
    trie = _Trie(m.d)
    seen = set()
    ids = [m.encode(s.input) for s in train]
    gold = [[m.vocab.index(o) for _, o in s.steps] for s in train]
    for lo in range(0, len(ids), chunk):
        H, _ = trace_batch(m, ids[lo: lo + chunk], forced=gold[lo: lo + chunk])
        for j, (x, y) in enumerate(zip(ids[lo: lo + chunk], gold[lo: lo + chunk])):
            trie.add_path(x, y, H[j], 1, lo + j)
            seen.add(tuple(x))
    syn = []
    for s in synthetic:
        x = tuple(m.encode(s))
        if x and x not in seen:
            seen.add(x)
            syn.append(x)
    for lo in range(0, len(syn), chunk):
        block = syn[lo: lo + chunk]
        H, P = trace_batch(m, block)
        for j, x in enumerate(block):
            trie.add_path(x, P[j, : len(x)], H[j], 2, lo + j)
    return ActivationSet(
        vectors=np.array(trie.vectors),
        prev=np.array(trie.prev, dtype=np.int64),
        inp=np.array(trie.inp, dtype=np.int64),
        out=np.array(trie.out, dtype=np.int64),
        weight=np.array(trie.weight),
        source=np.array(trie.source, dtype=np.int64),
        origin=trie.origin,
        input_symbols=[m.input_table.symbol(i) for i in range(len(m.input_table))],
        labels=list(m.vocab.labels),
    )


@dataclass
class ExtractionConfig:
    k: int
    classifier: str = "svm"
    lambda_trans: int | None = 2
    seed: int = 0
    pin_root: bool = False
    split_budget: int = 10  # splits allowed per cluster
    clf_epochs: int = 200
    clf_lr: float = 0.1
    clf_l2: float = 1e-4

    def validate(self):
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.classifier not in ("svm", "logistic_regression"):
            raise ConfigError(f"unknown classifier {self.classifier!r}")
        if self.lambda_trans is not None and self.lambda_trans < 2:
            raise ConfigError("lambda_trans must be None or at least 2")
        return self

    def to_dict(self):
        return asdict(self)


Alt = tuple[int, int]  # (output label id, destination state)


@dataclass
class ClusteredAutomaton:
    acts: ActivationSet
    assign: np.ndarray
    k: int

    @property
    def initial(self) -> int:
        return int(self.assign[ROOT])

    @property
    def num_states(self) -> int:
        return int(self.assign.max()) + 1

    def parent_states(self) -> np.ndarray:
        ps = self.assign[np.maximum(self.acts.prev, 0)]
        ps[ROOT] = -1
        return ps

    def outgoing(self, q: int, parent_states: np.ndarray | None = None) -> dict[int, dict[Alt, float]]:
        """For each input id, the weight of every (label, destination) alternative out of q."""
        ps = self.parent_states() if parent_states is None else parent_states
        sel = np.nonzero(ps == q)[0]
        out: dict[int, dict[Alt, float]] = {}
        if len(sel) == 0:
            return out
        keys = np.stack([self.acts.inp[sel], self.acts.out[sel], self.assign[sel]], axis=1)
        uk, inv = np.unique(keys, axis=0, return_inverse=True)
        tot = np.bincount(inv.reshape(-1), weights=self.acts.weight[sel], minlength=len(uk))
        for (a, o, dst), c in zip(uk.tolist(), tot.tolist()):
            out.setdefault(a, {})[(o, dst)] = c
        return out

    def transition_counts(self) -> dict[tuple[int, int, int, int], float]:
        """(src, input id, label id, dst) -> number of record edges."""
        ps = self.parent_states()
        counts: dict = {}
        for r in range(1, len(self.acts)):
            key = (int(ps[r]), int(self.acts.inp[r]), int(self.acts.out[r]), int(self.assign[r]))
            counts[key] = counts.get(key, 0.0) + float(self.acts.weight[r])
        return counts


def cluster(acts: ActivationSet, k: int, seed: int = 0, pin_root: bool = False) -> ClusteredAutomaton:
    """Standardize hidden states and group them with weighted k-means."""
    if pin_root:
        rest = np.arange(1, len(acts))
        if len(rest) == 0:
            raise InvalidK("no records besides the root")
        Z, _, _ = standardize(acts.vectors[rest], acts.weight[rest])
        lab, _ = kmeans(Z, k, acts.weight[rest], seed)
        assign = np.empty(len(acts), dtype=np.int64)
        assign[rest] = lab
        assign[ROOT] = k
    else:
        Z, _, _ = standardize(acts.vectors, acts.weight)
        assign, _ = kmeans(Z, k, acts.weight, seed)
        assign = assign.astype(np.int64)
    return ClusteredAutomaton(acts, assign, k)


@dataclass
class Resolution:
    transitions: dict[tuple[int, int], Alt]
    initial: int
    assign: np.ndarray
    splits: int = 0
    failed_splits: int = 0
    budget_exhausted: bool = False
    dropped: float = 0.0
    flags: list = field(default_factory=list)


def _over(alts: dict[Alt, float], lam: int | None) -> dict[Alt, float]:
    if lam is None:
        return alts
    return {a: c for a, c in alts.items() if c >= lam}


def _best(alts: dict[Alt, float], acts: ActivationSet) -> Alt:
    # highest count; ties by label order, then destination
    return min(alts, key=lambda a: (-alts[a], acts.labels[a[0]], a[1]))


def split(ca: ClusteredAutomaton, q: int, symbol: int, alternatives: Sequence[Alt],
          cfg: ExtractionConfig, next_state: int) -> tuple[list[int], set[int]]:
    """Reassign every record of state q to fresh states by a linear classifier.

    Training points are the records of q that read ``symbol`` next, labelled
    with their heaviest alternative among ``alternatives``.  Mutates
    ``ca.assign``; returns (new states, states with an edge into them).
    """
    acts, assign = ca.acts, ca.assign
    ps = ca.parent_states()
    allowed = {a: i for i, a in enumerate(alternatives)}
    per_parent: dict[int, dict[int, float]] = {}
    for c in np.nonzero((ps == q) & (acts.inp == symbol))[0]:
        cls = allowed.get((int(acts.out[c]), int(assign[c])))
        if cls is None:
            continue
        p = int(acts.prev[c])
        d = per_parent.setdefault(p, {})
        d[cls] = d.get(cls, 0.0) + float(acts.weight[c])
    if not per_parent:
        raise SplitFailure(f"state {q}: no records carry the conflicting transitions")
    parents = sorted(per_parent)
    y = np.array([min(per_parent[p], key=lambda c: (-per_parent[p][c], c)) for p in parents])
    w = np.array([per_parent[p][c] for p, c in zip(parents, y)])
    if len(np.unique(y)) < 2:
        raise SplitFailure(f"state {q}: conflicting records agree on one alternative")
    clf = LinearClassifier(cfg.classifier, cfg.clf_epochs, cfg.clf_lr, cfg.clf_l2)
    clf.fit(acts.vectors[parents], y, w)
    members = np.nonzero(assign == q)[0]
    pred = clf.predict(acts.vectors[members])
    classes = np.unique(pred)
    if len(classes) < 2:
        raise SplitFailure(f"state {q}: classifier predicts a single class")
    new_states = list(range(next_state, next_state + len(classes)))
    remap = dict(zip(classes.tolist(), new_states))
    assign[members] = [remap[int(c)] for c in pred]
    moved = members[members != ROOT]
    upstream = {int(s) for s in assign[acts.prev[moved]]}
    return new_states, upstream


def resolve_transitions(ca: ClusteredAutomaton, cfg: ExtractionConfig) -> Resolution:
    """Breadth-first conflict resolution by state splitting.

    ``ca`` is not modified.  With ``lambda_trans`` None no splitting happens
    and every (state, input) keeps only its heaviest alternative.
    """
    cfg.validate()
    lam = cfg.lambda_trans
    work = ClusteredAutomaton(ca.acts, ca.assign.copy(), ca.k)
    res = Resolution({}, work.initial, work.assign)
    if lam is not None:
        _split_until_deterministic(work, cfg, res)
    res.initial = work.initial

    # commit transitions from the final assignment
    ps = work.parent_states()
    queue, seen = deque([res.initial]), {res.initial}
    while queue:
        q = queue.popleft()
        for a, alts in sorted(work.outgoing(q, ps).items()):
            total = sum(alts.values())
            T = _over(alts, lam)
            if not T:
                res.dropped += total
                continue
            if len(T) > 1 and "nondeterminism_projected" not in res.flags and lam is not None:
                res.flags.append("nondeterminism_projected")
            best = _best(T, ca.acts)
            res.transitions[(q, a)] = best
            res.dropped += total - T[best]
            if best[1] not in seen:
                seen.add(best[1])
                queue.append(best[1])
    if res.budget_exhausted:
        res.flags.append("split_budget_exhausted")
    return res


def _split_until_deterministic(work: ClusteredAutomaton, cfg: ExtractionConfig, res: Resolution):
    lam = cfg.lambda_trans
    budget = cfg.split_budget * work.k
    next_state = work.num_states
    forced: set[tuple[int, int]] = set()
    queue = deque([work.initial])
    queued = {work.initial}
    visited: set[int] = set()

    def push(s):
        if s not in queued:
            queued.add(s)
            queue.append(s)

    while queue:
        q = queue.popleft()
        queued.discard(q)
        if q in visited:
            continue
        visited.add(q)
        ps = work.parent_states()
        out = work.outgoing(q, ps)
        conflicts = {}
        for a, alts in out.items():
            T = _over(alts, lam)
            if len(T) > 1 and (q, a) not in forced:
                conflicts[a] = T
        if conflicts and res.splits >= budget:
            res.budget_exhausted = True
        elif conflicts:
            worst = min(conflicts, key=lambda a: (-len(conflicts[a]), a))
            alts = sorted(conflicts[worst], key=lambda x: (work.acts.labels[x[0]], x[1]))
            try:
                new_states, upstream = split(work, q, worst, alts, cfg, next_state)
            except SplitFailure:
                res.failed_splits += 1
                forced.add((q, worst))
                visited.discard(q)
                push(q)
                continue
            res.splits += 1
            next_state += len(new_states)
            for s in sorted(upstream | set(new_states)):
                visited.discard(s)
                push(s)
            continue
        for a, alts in out.items():
            T = _over(alts, lam)
            if T:
                dst = _best(T, work.acts)[1]
                if dst not in visited:
                    push(dst)


def finalize(res: Resolution, acts: ActivationSet) -> Transducer:
    """Materialize the committed transitions, prune and minimize."""
    arcs = [(q, acts.input_symbols[a], acts.labels[o], dst)
            for (q, a), (o, dst) in sorted(res.transitions.items())]
    top = max([res.initial] + [s for s, _, _, d in arcs] + [d for *_, d in arcs])
    t = Transducer.from_arcs(arcs, initial=res.initial, num_states=top + 1)
    return minimize(prune_inaccessible(t))


def extract(m: ModelParams, train: Sequence[MergedSequence], synthetic: Iterable[Sequence[str]],
            cfg: ExtractionConfig, report: dict | None = None) -> Transducer:
    """collect -> cluster -> resolve -> finalize.  ``report`` (if given) is filled in."""
    cfg.validate()
    acts = collect_activations(m, train, synthetic)
    ca = cluster(acts, cfg.k, cfg.seed, cfg.pin_root)
    res = resolve_transitions(ca, cfg)
    raw_states = len({res.initial} | {q for q, _ in res.transitions}
                     | {d for _, d in res.transitions.values()})
    fst = finalize(res, acts)
    if report is not None:
        report.update({
            "k": cfg.k,
            "config": cfg.to_dict(),
            "records": len(acts),
            "splits": res.splits,
            "failed_splits": res.failed_splits,
            "states_before_minimize": raw_states,
            "states_after_minimize": fst.num_states,
            "transitions": fst.num_transitions,
            "dropped_transitions": res.dropped,
            "flags": list(res.flags),
        })
    return fst
