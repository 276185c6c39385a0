"""Ground-truth transducers and datasets sampled from them."""

import itertools
import random

from fstforge.align import StringPair
from fstforge.data import Dataset
from fstforge.fst import END, Transducer


def copy_fst(alphabet="abcd"):
    return Transducer.from_arcs([(0, c, c, 0) for c in alphabet] + [(0, END, "", 1)])


def pluralizer_fst(alphabet="abt"):
    # 0: last symbol was not t, 1: last symbol was t, 2: end
    arcs = []
    for q in (0, 1):
        for c in alphabet:
            arcs.append((q, c, c, 1 if c == "t" else 0))
    arcs += [(0, END, "", 2), (1, END, "s", 2)]
    return Transducer.from_arcs(arcs)


def harmony_fst(consonants="ptk", vowels="aeo"):
    """Archiphoneme A copies the last full vowel (a by default)."""
    arcs = []
    state = {v: i for i, v in enumerate(vowels)}  # state 0 doubles as the start
    for v, q in state.items():
        for c in consonants:
            arcs.append((q, c, c, q))
        for w in vowels:
            arcs.append((q, w, w, state[w]))
        arcs.append((q, "A", v, q))
        arcs.append((q, END, "", len(vowels)))
    return Transducer.from_arcs(arcs)


FIXTURES = {
    "copy": (copy_fst, "abcd"),
    "pluralizer": (pluralizer_fst, "abt"),
    "harmony": (harmony_fst, "ptkaeoA"),
}


def sample_dataset(name, n_train=500, n_dev=100, n_test=200, max_len=8, seed=0):
    """Distinct random inputs labelled by the reference transducer."""
    make, alphabet = FIXTURES[name]
    fst = make()
    rng = random.Random(seed)
    need = n_train + n_dev + n_test
    seen, inputs = set(), []
    while len(inputs) < need:
        x = tuple(rng.choices(alphabet, k=rng.randint(1, max_len)))
        if x not in seen:
            seen.add(x)
            inputs.append(x)
    pairs = [StringPair(x, fst.apply(x + (END,))) for x in inputs]
    ds = Dataset("normalization", name, pairs[:n_train], pairs[n_train:n_train + n_dev],
                 pairs[n_train + n_dev:])
    return ds, fst


def all_inputs(alphabet, max_len):
    for n in range(1, max_len + 1):
        yield from itertools.product(alphabet, repeat=n)
