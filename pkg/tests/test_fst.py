import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fstforge.errors import NoTransition, ParseError, UnknownSymbol
from fstforge.fst import (
    SymbolTable,
    Transducer,
    deserialize,
    is_input_deterministic,
    minimize,
    prune_inaccessible,
    serialize,
)
from oracles import (
    behaviour,
    bfs_reachable,
    brute_minimal_size,
    random_transducer,
    strings_upto,
)


@pytest.fixture
def cats():
    # c:c, a:a, t:ts
    return Transducer.from_arcs([(0, "c", "c", 1), (1, "a", "a", 2), (2, "t", "ts", 3)])


def test_symbol_table_reserves_epsilon():
    tab = SymbolTable(["a", "b", "a"])
    assert len(tab) == 3
    assert tab.index("a") == 1 and tab.symbol(0) == ""
    assert "" not in tab and "b" in tab
    with pytest.raises(UnknownSymbol):
        tab.index("q")


def test_apply_cat_to_cats(cats):
    assert "".join(cats.apply("cat")) == "cats"


def test_apply_empty_input(cats):
    assert cats.apply("") == ()


def test_apply_unknown_symbol(cats):
    with pytest.raises(UnknownSymbol):
        cats.apply("dog")


def test_apply_missing_transition(cats):
    with pytest.raises(NoTransition) as exc:
        cats.apply("ca" + "c")
    assert exc.value.state == 2


def test_constructor_rejects_bad_states():
    tab = SymbolTable("a")
    with pytest.raises(ValueError):
        Transducer(tab, tab, 2, 0, {(0, 1): ((), 5)})
    with pytest.raises(ValueError):
        Transducer(tab, tab, 2, 3, {})
    with pytest.raises(ValueError):
        Transducer(tab, tab, 2, 0, {(0, 0): ((1,), 1)})


@pytest.mark.parametrize(
    "raw, expected",
    [
        ([(0, "a", "x", 1)], True),
        ([(0, "a", "x", 1), (0, "a", "y", 1)], False),
        ([(0, "a", "x", 1), (0, "b", "x", 1)], True),
        ([(0, "a", "x", 1), (0, "a", "x", 1)], True),
        ([(0, "a", "x", 1), (0, "a", "x", 2)], False),
    ],
)
def test_is_input_deterministic(raw, expected):
    assert is_input_deterministic(raw) is expected


def test_prune_drops_unreachable_state():
    t = Transducer.from_arcs(
        [(0, "a", "x", 1), (1, "b", "y", 0), (5, "a", "z", 1)], num_states=6
    )
    p = prune_inaccessible(t)
    assert p.num_states == 2
    for s in strings_upto("ab", 5):
        assert behaviour(p, s) == behaviour(t, s)


def test_prune_fixed_point(cats):
    assert prune_inaccessible(cats) == cats


def test_prune_chain_with_orphans():
    t = Transducer.from_arcs(
        [(0, "a", "a", 1), (1, "a", "b", 2), (3, "a", "c", 4), (4, "a", "c", 0)]
    )
    p = prune_inaccessible(t)
    assert p.num_states == len(bfs_reachable(t)) == 3
    assert [a[0] for a in p.arcs()] == [0, 1]


def test_minimize_merges_duplicate_states():
    # states 1 and 2 both loop on a:x to themselves
    t = Transducer.from_arcs(
        [(0, "a", "x", 1), (0, "b", "x", 2), (1, "a", "x", 1), (2, "a", "x", 2)]
    )
    m = minimize(t)
    assert m.num_states == 2
    for s in strings_upto("ab", 6):
        assert behaviour(m, s) == behaviour(t, s)


def test_minimize_fixed_point(cats):
    assert minimize(cats).num_states == cats.num_states


def test_minimize_distinguishes_by_output():
    t = Transducer.from_arcs([(0, "a", "x", 1), (1, "a", "y", 0)])
    assert minimize(t).num_states == 2


@pytest.mark.parametrize("seed", range(10))
def test_minimize_random_12_state_exhaustive(seed):
    rng = random.Random(seed)
    t = prune_inaccessible(random_transducer(rng, 12, "abc", density=0.8))
    m = minimize(t)
    assert m.num_states <= t.num_states
    assert m.num_states == brute_minimal_size(t)
    for s in strings_upto(t.input_table.symbols, 8):
        assert behaviour(m, s) == behaviour(t, s)
    assert minimize(m) == m


def test_serialize_cats(cats):
    text = serialize(cats)
    lines = text.splitlines()
    assert lines == ["0\t1\tc\tc", "1\t2\ta\ta", "2\t3\tt\tt s", "0"]


def test_serialize_empty_transducer():
    t = Transducer(SymbolTable(), SymbolTable(), 1, 0, {})
    assert serialize(t) == "0\n"
    assert deserialize(serialize(t)).structurally_equal(t)


def test_serialize_eps_output():
    t = Transducer.from_arcs([(0, "a", "", 0)])
    assert serialize(t).splitlines()[0] == "0\t0\ta\t<eps>"
    assert deserialize(serialize(t)).structurally_equal(t)


@pytest.mark.parametrize("seed", range(5))
def test_att_round_trip_random_20_states(seed):
    rng = random.Random(seed)
    t = random_transducer(rng, 20, "abcd", density=0.6)
    again = deserialize(serialize(t), SymbolTable(t.input_table.symbols),
                        SymbolTable(t.output_table.symbols))
    assert again == t


def test_dot_output(cats):
    dot = serialize(cats, "dot")
    assert dot.startswith("digraph")
    assert '"t:ts"' in dot and "__start -> 0" in dot


@pytest.mark.parametrize(
    "text",
    ["0\t1\ta\n0\n", "x\t1\ta\tb\n0\n", "0\t1\ta\tb\n", "0\n1\n"],
)
def test_deserialize_malformed(text):
    with pytest.raises(ParseError):
        deserialize(text)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 8), st.integers(2, 4))
def test_minimize_and_prune_preserve_behaviour(seed, n, k):
    rng = random.Random(seed)
    alphabet = "abcd"[:k]
    t = random_transducer(rng, n, alphabet, density=0.6, connected=False)
    p = prune_inaccessible(t)
    m = minimize(p)
    assert minimize(m) == m
    for s in strings_upto(t.input_table.symbols, 5):
        b = behaviour(t, s)
        assert behaviour(p, s) == b
        assert behaviour(m, s) == b


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_apply_is_concatenation_along_paths(seed):
    rng = random.Random(seed)
    t = random_transducer(rng, 6, "abc", density=1.0)
    state, expected, path = t.initial, [], []
    for _ in range(rng.randint(0, 10)):
        a = rng.choice(t.input_table.symbols)
        out, state = t.step(state, a)
        expected.extend(out)
        path.append(a)
    assert t.apply(path) == tuple(expected)
