"""Independent brute-force oracles used to freeze and check expected values."""
import itertools
import random
from collections import deque

import numpy as np

from fstforge.errors import NoTransition, UnknownSymbol
from fstforge.fst import Transducer
from fstforge.rnn import PowerIteration, objective


def strings_upto(alphabet, max_len):
    for n in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=n)


def behaviour(t, s):
    """Output tuple, or an error marker comparable across transducers."""
    try:
        return t.apply(s)
    except NoTransition:
        return "NO_PATH"
    except UnknownSymbol:
        return "UNKNOWN"


def run_from(t, state, s):
    """Walk from an arbitrary state using only the raw transition dict."""
    out = []
    for sym in s:
        key = (state, t.input_table.index(sym))
        if key not in t.transitions:
            return None
        o, state = t.transitions[key]
        out.extend(o)
    return tuple(out)


def bfs_reachable(t):
    seen, queue = {t.initial}, deque([t.initial])
    while queue:
        q = queue.popleft()
        for (src, _), (_, dst) in t.transitions.items():
            if src == q and dst not in seen:
                seen.add(dst)
                queue.append(dst)
    return seen


def brute_minimal_size(t):
    """Number of behaviour classes among reachable states, by pair marking."""
    reach = sorted(bfs_reachable(t))
    d = dict(t.transitions)
    syms = range(1, len(t.input_table))
    marked = set()
    for p in reach:
        for q in reach:
            for a in syms:
                x, y = d.get((p, a)), d.get((q, a))
                if (x is None) != (y is None) or (x and x[0] != y[0]):
                    marked.add((p, q))
    changed = True
    while changed:
        changed = False
        for p in reach:
            for q in reach:
                if (p, q) in marked:
                    continue
                for a in syms:
                    x, y = d.get((p, a)), d.get((q, a))
                    if x and (x[1], y[1]) in marked:
                        marked.add((p, q))
                        changed = True
                        break
    classes = []
    for p in reach:
        if not any((p, c) not in marked for c in classes):
            classes.append(p)
    return len(classes)


def random_transducer(rng: random.Random, n_states, alphabet, outputs=("x", "y", "z"),
                      density=0.7, max_out=2, connected=True):
    arcs = {}
    for q in range(n_states):
        for a in alphabet:
            if rng.random() < density:
                out = "".join(rng.choice(outputs) for _ in range(rng.randint(0, max_out)))
                arcs[(q, a)] = (out, rng.randrange(n_states))
    if connected:
        # a spanning chain keeps every state reachable
        for q in range(1, n_states):
            arcs[(q - 1, alphabet[q % len(alphabet)])] = (rng.choice(outputs), q)
    return Transducer.from_arcs(
        [(q, a, out, d) for (q, a), (out, d) in arcs.items()],
        initial=0, num_states=n_states,
    )


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def ngram_domain_brute(train, n, max_len, check_end=True):
    """Every string over the training alphabet whose padded n-grams all occur in training."""
    bos, eos = "^", "$"

    def grams(s, end):
        pad = [bos] * (n - 1) + list(s) + ([eos] if end else [])
        return {tuple(pad[i: i + n]) for i in range(len(pad) - n + 1)}

    seen = set()
    for s in train:
        if s:
            seen |= grams(s, True)
    alphabet = sorted({c for s in train for c in s})
    return {s for s in strings_upto(alphabet, max_len) if s and grams(s, check_end) <= seen}


def finite_difference_errors(m, batch, cfg, sn, h=1e-6):
    _, grads = objective(m, batch, cfg, sn=sn)
    errors = {}
    for name, arr in m.arrays().items():
        num = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            lp, _ = objective(m, batch, cfg, sn=sn, need_grad=False)
            arr[idx] = old - h
            lm, _ = objective(m, batch, cfg, sn=sn, need_grad=False)
            arr[idx] = old
            num[idx] = (lp - lm) / (2 * h)
        denom = np.linalg.norm(grads[name]) + np.linalg.norm(num)
        errors[name] = 0.0 if denom == 0 else np.linalg.norm(grads[name] - num) / denom
    return errors


def frozen_sn(m, seed=0):
    sn = {"W_h": PowerIteration(m.d, np.random.default_rng(seed)),
          "W_x": PowerIteration(m.d, np.random.default_rng(seed + 1))}
    sn["W_h"].step(m.W_h, 3)
    sn["W_x"].step(m.W_x, 3)
    return sn
