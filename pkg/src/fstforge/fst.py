"""Unweighted input-deterministic finite-state transducers.

A transducer here is the tuple (input alphabet, output alphabet, states,
initial state, transition function).  There is no final-state set: every
state accepts, and a string is rejected only when a transition is missing.
Each transition emits a (possibly empty) sequence of output symbols.
"""
from __future__ import annotations

from collections import defaultdict, deque
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import NoTransition, ParseError, UnknownSymbol

EPS = ""
END = "⋉"  # end-of-string marker appended to every input at apply time
ATT_EPS = "<eps>"

Transition = tuple[int, int, tuple[int, ...], int]  # src, input id, output ids, dst


class SymbolTable:
    """Bijection between symbol strings and integer ids; id 0 is epsilon."""

    def __init__(self, symbols: Iterable[str] = ()):
        self._symbols = [EPS]
        self._index = {EPS: 0}
        for s in symbols:
            self.add(s)

    def add(self, symbol: str) -> int:
        idx = self._index.get(symbol)
        if idx is None:
            idx = len(self._symbols)
            self._symbols.append(symbol)
            self._index[symbol] = idx
        return idx

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownSymbol(symbol) from None

    def symbol(self, idx: int) -> str:
        return self._symbols[idx]

    def encode(self, symbols: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.index(s) for s in symbols)

    def decode(self, ids: Iterable[int]) -> tuple[str, ...]:
        return tuple(self._symbols[i] for i in ids)

    @property
    def symbols(self) -> tuple[str, ...]:
        """All non-epsilon symbols in id order."""
        return tuple(self._symbols[1:])

    def __contains__(self, symbol) -> bool:
        return symbol in self._index and symbol != EPS

    def __len__(self) -> int:
        return len(self._symbols)

    def __iter__(self):
        return iter(self._symbols[1:])

    def __eq__(self, other):
        return isinstance(other, SymbolTable) and self._symbols == other._symbols

    def __repr__(self):
        return f"SymbolTable({self._symbols[1:]!r})"


class Transducer:
    """Immutable deterministic FST.

    ``transitions`` maps ``(state, input id)`` to ``(output ids, destination)``.
    """

    __slots__ = ("input_table", "output_table", "num_states", "initial", "_delta")

    def __init__(
        self,
        input_table: SymbolTable,
        output_table: SymbolTable,
        num_states: int,
        initial: int,
        transitions: Mapping[tuple[int, int], tuple[Sequence[int], int]],
    ):
        if num_states < 1:
            raise ValueError("a transducer needs at least one state")
        if not 0 <= initial < num_states:
            raise ValueError(f"initial state {initial} out of range")
        delta = {}
        for (src, sym), (out, dst) in transitions.items():
            if not (0 <= src < num_states and 0 <= dst < num_states):
                raise ValueError(f"transition {src}->{dst} out of range")
            if sym == 0:
                raise ValueError("epsilon input labels are not allowed")
            if not 0 < sym < len(input_table):
                raise ValueError(f"input id {sym} not in input table")
            out = tuple(out)
            if any(not 0 < o < len(output_table) for o in out):
                raise ValueError(f"output ids {out} not in output table")
            delta[(src, sym)] = (out, dst)
        self.input_table = input_table
        self.output_table = output_table
        self.num_states = num_states
        self.initial = initial
        self._delta = MappingProxyType(delta)

    @classmethod
    def from_arcs(
        cls,
        arcs: Iterable[tuple[int, str, Sequence[str], int]],
        initial: int = 0,
        num_states: int | None = None,
        input_table: SymbolTable | None = None,
        output_table: SymbolTable | None = None,
    ) -> "Transducer":
        """Build from symbolic arcs ``(src, input symbol, output symbols, dst)``.

        A string output is split into characters.  Duplicate keys raise.
        """
        itab = input_table if input_table is not None else SymbolTable()
        otab = output_table if output_table is not None else SymbolTable()
        delta = {}
        top = initial
        for src, a, out, dst in arcs:
            key = (src, itab.add(a))
            if key in delta:
                raise ValueError(f"duplicate transition on ({src}, {a!r})")
            delta[key] = (tuple(otab.add(o) for o in out), dst)
            top = max(top, src, dst)
        if num_states is None:
            num_states = top + 1
        return cls(itab, otab, num_states, initial, delta)

    @property
    def transitions(self) -> Mapping[tuple[int, int], tuple[tuple[int, ...], int]]:
        return self._delta

    @property
    def num_transitions(self) -> int:
        return len(self._delta)

    def arcs(self) -> list[tuple[int, str, tuple[str, ...], int]]:
        """Symbolic arcs sorted by (source, input id)."""
        return [
            (src, self.input_table.symbol(a), self.output_table.decode(out), dst)
            for (src, a), (out, dst) in sorted(self._delta.items())
        ]

    def step(self, state: int, symbol: str) -> tuple[tuple[str, ...], int]:
        a = self.input_table.index(symbol)
        try:
            out, dst = self._delta[(state, a)]
        except KeyError:
            raise NoTransition(state, symbol) from None
        return self.output_table.decode(out), dst

    def apply(self, input: Sequence[str]) -> tuple[str, ...]:
        """Run the transducer; raises UnknownSymbol or NoTransition."""
        ids = self.input_table.encode(input)
        state = self.initial
        out: list[int] = []
        for sym, a in zip(input, ids):
            try:
                o, state = self._delta[(state, a)]
            except KeyError:
                raise NoTransition(state, sym) from None
            out.extend(o)
        return self.output_table.decode(out)

    def __call__(self, input: Sequence[str]) -> tuple[str, ...]:
        return self.apply(input)

    def structurally_equal(self, other: "Transducer") -> bool:
        """Same states, initial state and symbolic arcs (ids may differ)."""
        return (
            self.num_states == other.num_states
            and self.initial == other.initial
            and sorted(self.arcs()) == sorted(other.arcs())
        )

    def __eq__(self, other):
        if not isinstance(other, Transducer):
            return NotImplemented
        return (
            self.num_states == other.num_states
            and self.initial == other.initial
            and self.input_table == other.input_table
            and self.output_table == other.output_table
            and dict(self._delta) == dict(other._delta)
        )

    __hash__ = None

    def __repr__(self):
        return f"Transducer({self.num_states} states, {len(self._delta)} transitions)"


def is_input_deterministic(raw: Iterable[tuple]) -> bool:
    """True iff no (source, input) key carries two distinct (output, destination) pairs."""
    seen: dict = {}
    for src, a, out, dst in raw:
        val = (tuple(out) if not isinstance(out, str) else out, dst)
        prev = seen.setdefault((src, a), val)
        if prev != val:
            return False
    return True


def reachable_states(t: Transducer) -> set[int]:
    succ = defaultdict(list)
    for (src, _), (_, dst) in t.transitions.items():
        succ[src].append(dst)
    seen = {t.initial}
    queue = deque([t.initial])
    while queue:
        q = queue.popleft()
        for r in succ[q]:
            if r not in seen:
                seen.add(r)
                queue.append(r)
    return seen


def prune_inaccessible(t: Transducer) -> Transducer:
    """Drop states unreachable from the initial state; survivors keep their relative order."""
    keep = sorted(reachable_states(t))
    if len(keep) == t.num_states:
        return t
    remap = {q: i for i, q in enumerate(keep)}
    delta = {
        (remap[src], a): (out, remap[dst])
        for (src, a), (out, dst) in t.transitions.items()
        if src in remap
    }
    return Transducer(t.input_table, t.output_table, len(keep), remap[t.initial], delta)


def _partition(t: Transducer) -> list[int]:
    """Coarsest stable partition over composite (input, output) labels (Hopcroft)."""
    n = t.num_states
    label_ids: dict[tuple[int, tuple[int, ...]], int] = {}
    signature: list[set[int]] = [set() for _ in range(n)]
    inverse: list[list[tuple[int, int]]] = [[] for _ in range(n)]  # dst -> [(label, src)]
    for (src, a), (out, dst) in t.transitions.items():
        lab = label_ids.setdefault((a, out), len(label_ids))
        signature[src].add(lab)
        inverse[dst].append((lab, src))

    groups: dict[frozenset, list[int]] = {}
    for q in range(n):
        groups.setdefault(frozenset(signature[q]), []).append(q)
    blocks: list[set[int]] = []
    block_of = [0] * n
    for members in groups.values():
        for q in members:
            block_of[q] = len(blocks)
        blocks.append(set(members))

    pending = deque(range(len(blocks)))
    in_pending = set(pending)
    while pending:
        b = pending.popleft()
        in_pending.discard(b)
        by_label: dict[int, set[int]] = defaultdict(set)
        for q in blocks[b]:
            for lab, src in inverse[q]:
                by_label[lab].add(src)
        for lab in sorted(by_label):
            pre = by_label[lab]
            touched: dict[int, set[int]] = defaultdict(set)
            for q in pre:
                touched[block_of[q]].add(q)
            for y, hit in touched.items():
                if len(hit) == len(blocks[y]):
                    continue
                rest = blocks[y] - hit
                small, large = (hit, rest) if len(hit) <= len(rest) else (rest, hit)
                new = len(blocks)
                blocks[y] = large
                blocks.append(small)
                for q in small:
                    block_of[q] = new
                # y stays pending if it was; otherwise the smaller half suffices
                pending.append(new)
                in_pending.add(new)
    return block_of


def minimize(t: Transducer) -> Transducer:
    """Minimal equivalent transducer, states numbered breadth-first from the initial state."""
    block_of = _partition(t)
    succ: dict[int, dict[int, tuple[tuple[int, ...], int]]] = defaultdict(dict)
    for (src, a), (out, dst) in t.transitions.items():
        succ[block_of[src]][a] = (out, block_of[dst])
    order = {block_of[t.initial]: 0}
    queue = deque([block_of[t.initial]])
    delta = {}
    while queue:
        b = queue.popleft()
        for a, (out, c) in sorted(succ[b].items()):
            if c not in order:
                order[c] = len(order)
                queue.append(c)
            delta[(order[b], a)] = (out, order[c])
    return Transducer(t.input_table, t.output_table, len(order), 0, delta)


def _check_token(sym: str, what: str):
    if not sym or any(ch in sym for ch in "\t\n\r ") or sym == ATT_EPS:
        raise ValueError(f"{what} symbol {sym!r} cannot be written in att_text")


def serialize(t: Transducer, format: str = "att_text") -> str:
    if format == "att_text":
        lines = []
        for src, a, out, dst in t.arcs():
            _check_token(a, "input")
            for o in out:
                _check_token(o, "output")
            lines.append(f"{src}\t{dst}\t{a}\t{' '.join(out) if out else ATT_EPS}")
        lines.append(str(t.initial))
        return "\n".join(lines) + "\n"
    if format == "dot":
        def q(s):
            return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'

        lines = ["digraph fst {", "  rankdir=LR;", '  __start [shape=point, label=""];']
        for s in range(t.num_states):
            lines.append(f"  {s} [shape=circle];")
        lines.append(f"  __start -> {t.initial};")
        for src, a, out, dst in t.arcs():
            label = f"{a}:{''.join(out) if out else 'ε'}"
            lines.append(f"  {src} -> {dst} [label={q(label)}];")
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {format!r}")


def deserialize(
    text: str,
    input_table: SymbolTable | None = None,
    output_table: SymbolTable | None = None,
) -> Transducer:
    """Parse att_text; the number of states is one more than the largest id seen."""
    arcs = []
    initial = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        try:
            if len(fields) == 4:
                src, dst = int(fields[0]), int(fields[1])
                out = () if fields[3] == ATT_EPS else tuple(fields[3].split(" "))
                arcs.append((src, fields[2], out, dst))
            elif len(fields) == 1:
                if initial is not None:
                    raise ParseError(f"line {lineno}: second initial-state line")
                initial = int(fields[0])
            else:
                raise ParseError(f"line {lineno}: expected 1 or 4 tab-separated fields")
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"line {lineno}: {exc}") from None
    if initial is None:
        raise ParseError("missing initial-state line")
    try:
        return Transducer.from_arcs(
            arcs, initial=initial, input_table=input_table, output_table=output_table
        )
    except ValueError as exc:
        raise ParseError(str(exc)) from None
