"""Classical baselines: onward prefix trees, OSTIA, DD-OSTIA and No-Change."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .align import StringPair
from .errors import ConflictError
from .fst import END, SymbolTable, Transducer

Out = tuple[str, ...]


def _lcp(seqs: Iterable[Out]) -> Out:
    seqs = list(seqs)
    if not seqs:
        return ()
    first = min(seqs)
    last = max(seqs)
    n = 0
    while n < len(first) and n < len(last) and first[n] == last[n]:
        n += 1
    return first[:n]


def _as_pair(p) -> tuple[Out, Out]:
    if isinstance(p, StringPair):
        return tuple(p.input), tuple(p.output)
    a, b = p
    return tuple(a), tuple(b)


@dataclass
class PrefixTreeTransducer:
    """Trie over training inputs.  ``residual[q]`` is the output still owed
    when the input ends at q (None when no training input ends there)."""

    edges: list[dict[str, tuple[Out, int]]] = field(default_factory=lambda: [{}])
    residual: list[Out | None] = field(default_factory=lambda: [None])
    access: list[Out] = field(default_factory=lambda: [()])

    @property
    def num_states(self) -> int:
        return len(self.edges)

    def apply(self, x: Sequence[str]) -> Out | None:
        q, out = 0, []
        for a in x:
            if a not in self.edges[q]:
                return None
            o, q = self.edges[q][a]
            out.extend(o)
        r = self.residual[q]
        return None if r is None else tuple(out) + r

    def outputs_at(self, q: int) -> list[Out]:
        outs = [o for o, _ in self.edges[q].values()]
        if self.residual[q] is not None:
            outs.append(self.residual[q])
        return outs

    def is_onward(self) -> bool:
        return all(_lcp(self.outputs_at(q)) == () for q in range(1, self.num_states))


def build_onward_ptt(pairs: Iterable) -> PrefixTreeTransducer:
    """Prefix tree with outputs pushed as close to the root as possible."""
    t = PrefixTreeTransducer()
    parent: list[tuple[int, str] | None] = [None]
    for p in pairs:
        x, y = _as_pair(p)
        q = 0
        for a in x:
            nxt = t.edges[q].get(a)
            if nxt is None:
                t.edges.append({})
                t.residual.append(None)
                t.access.append(t.access[q] + (a,))
                parent.append((q, a))
                t.edges[q][a] = ((), len(t.edges) - 1)
                q = len(t.edges) - 1
            else:
                q = nxt[1]
        if t.residual[q] is not None and t.residual[q] != y:
            raise ConflictError(f"input {''.join(x)!r} has two outputs")
        t.residual[q] = y
    # children always have larger ids, so reverse id order is a post-order
    for q in range(t.num_states - 1, 0, -1):
        u = _lcp(t.outputs_at(q))
        if not u:
            continue
        n = len(u)
        t.edges[q] = {a: (o[n:], d) for a, (o, d) in t.edges[q].items()}
        if t.residual[q] is not None:
            t.residual[q] = t.residual[q][n:]
        src, a = parent[q]
        o, d = t.edges[src][a]
        t.edges[src][a] = (o + u, d)
    return t


class _Journal:
    """Mutable automaton whose edits can be rolled back."""

    def __init__(self, ptt: PrefixTreeTransducer):
        self.edges = [dict(e) for e in ptt.edges]
        self.residual = list(ptt.residual)
        self.log: list = []

    def set_edge(self, q: int, a: str, val: tuple[Out, int] | None):
        self.log.append(("e", q, a, self.edges[q].get(a)))
        if val is None:
            del self.edges[q][a]
        else:
            self.edges[q][a] = val

    def set_residual(self, q: int, r: Out | None):
        self.log.append(("r", q, self.residual[q]))
        self.residual[q] = r

    def mark(self) -> int:
        return len(self.log)

    def rollback(self, mark: int):
        while len(self.log) > mark:
            entry = self.log.pop()
            if entry[0] == "e":
                _, q, a, old = entry
                if old is None:
                    self.edges[q].pop(a, None)
                else:
                    self.edges[q][a] = old
            else:
                _, q, old = entry
                self.residual[q] = old

    def commit(self):
        self.log.clear()


class _MergeFailed(Exception):
    pass


def _push(m: _Journal, q: int, u: Out, red: set[int]):
    """Prepend u to every output leaving q (edges and residual)."""
    if not u:
        return
    if q in red:
        raise _MergeFailed
    for a, (o, d) in list(m.edges[q].items()):
        m.set_edge(q, a, (u + o, d))
    if m.residual[q] is not None:
        m.set_residual(q, u + m.residual[q])


def _fold(m: _Journal, q: int, q2: int, red: set[int]):
    """Fold the subtree rooted at q2 into q."""
    r2 = m.residual[q2]
    if r2 is not None:
        r = m.residual[q]
        if r is None:
            m.set_residual(q, r2)
        elif r != r2:
            raise _MergeFailed
    for a, (o2, d2) in sorted(m.edges[q2].items()):
        cur = m.edges[q].get(a)
        if cur is None:
            m.set_edge(q, a, (o2, d2))
            continue
        o1, d1 = cur
        if o1 != o2:
            u = _lcp([o1, o2])
            n = len(u)
            _push(m, d1, o1[n:], red)
            _push(m, d2, o2[n:], red)
            m.set_edge(q, a, (u, d1))
        if d1 != d2:
            _fold(m, d1, d2, red)


@dataclass
class InductionLog:
    merges_attempted: int = 0
    merges_committed: int = 0
    red_states: int = 0
    time_limit_hit: bool = False
    wall_clock_s: float = 0.0

    def as_dict(self):
        return dict(self.__dict__)


def _induce(pairs: Iterable, time_limit: float | None, order: str,
            log: dict | None) -> Transducer:
    ptt = build_onward_ptt(pairs)
    support = _support(ptt) if order == "support" else None
    m = _Journal(ptt)
    red = {0}
    red_order = [0]
    info = InductionLog()
    start = time.monotonic()

    def blue_states():
        # folds can hang tree states under a different red state, so parents are looked up live
        out = {d: (r, a) for r in red_order for a, (_, d) in m.edges[r].items() if d not in red}
        if order == "support":
            key = lambda q: (-support[q], len(ptt.access[q]), ptt.access[q])
        else:
            key = lambda q: (len(ptt.access[q]), ptt.access[q])
        return sorted(out.items(), key=lambda kv: key(kv[0]))

    while True:
        blue = blue_states()
        if not blue:
            break
        if time_limit is not None and time.monotonic() - start >= time_limit:
            info.time_limit_hit = True
            break
        q, (src, a) = blue[0]
        merged = False
        for p in red_order:
            info.merges_attempted += 1
            mark = m.mark()
            o, _ = m.edges[src][a]
            m.set_edge(src, a, (o, p))
            try:
                _fold(m, p, q, red)
            except _MergeFailed:
                m.rollback(mark)
                continue
            m.commit()
            merged = True
            info.merges_committed += 1
            break
        if not merged:
            red.add(q)
            red_order.append(q)
    info.red_states = len(red)
    info.wall_clock_s = time.monotonic() - start
    if log is not None:
        log.update(info.as_dict())
    return _compile(m.edges, m.residual)


def _support(ptt: PrefixTreeTransducer) -> list[int]:
    """Number of training inputs passing through each tree state."""
    s = [1 if r is not None else 0 for r in ptt.residual]
    for q in range(ptt.num_states - 1, -1, -1):
        for _, d in ptt.edges[q].values():
            s[q] += s[d]
    return s


def _compile(edges: list[dict[str, tuple[Out, int]]], residual: list[Out | None]) -> Transducer:
    """Reachable part as a Transducer; residuals ride on an end-marker edge to a sink."""
    seen, order = {0}, [0]
    for q in order:
        for a in sorted(edges[q]):
            d = edges[q][a][1]
            if d not in seen:
                seen.add(d)
                order.append(d)
    ids = {q: i for i, q in enumerate(order)}
    sink = len(order)
    itab, otab = SymbolTable(), SymbolTable()
    arcs = []
    for q in order:
        for a in sorted(edges[q]):
            o, d = edges[q][a]
            arcs.append((ids[q], a, o, ids[d]))
        if residual[q] is not None:
            arcs.append((ids[q], END, residual[q], sink))
    num = sink + 1 if any(residual[q] is not None for q in order) else sink
    return Transducer.from_arcs(arcs, 0, num, itab, otab)


def ostia(pairs: Iterable, time_limit: float | None = 600.0, log: dict | None = None) -> Transducer:
    """OSTIA state merging in length-lexicographic order.

    The result reads inputs followed by the end marker.  ``log`` receives merge
    statistics and whether ``time_limit`` (seconds) stopped the search early.
    """
    return _induce(pairs, time_limit, "lex", log)


def dd_ostia(pairs: Iterable, time_limit: float | None = 600.0, log: dict | None = None) -> Transducer:
    """Greedy variant: candidates with the most training strings behind them go first."""
    return _induce(pairs, time_limit, "support", log)


def no_change(x: Sequence[str]) -> tuple[str, ...]:
    return tuple(x)

