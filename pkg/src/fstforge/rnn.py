"""Single-layer Elman RNN trained to emit the aligned output label of each step.

The recurrence is ``h_t = tanh(W_h h_{t-1} + W_x e(x_t) + b_h)`` with
``h_0 = 0``.  The output for step t is predicted from the previous state and
the embedding of the symbol being read:
``softmax(W_y [h_{t-1}; e(x_t)] + b_y)``.  This mirrors an FST transition,
whose output depends on the source state and the input symbol.

Everything is plain numpy in float64; gradients come from hand-written
backpropagation through time.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .align import MergedSequence
from .errors import ConfigError, UnknownSymbol
from .fst import SymbolTable

OBJECTIVES = ("transduction", "language_model", "binary_classification")

# Table-5 style grids used by the sweep
GRID_HIDDEN = (16, 32, 64, 128)
GRID_DROPOUT = (0.0, 0.1, 0.3)
GRID_LR = (2e-4, 1e-3, 2e-3, 1e-2)
GRID_EPOCHS = (200, 600, 1000)
GRID_BATCH = tuple(2**k for k in range(1, 13))


class OutputVocab:
    """Distinct merged output strings, each treated as one atomic label."""

    def __init__(self, labels: Sequence[Sequence[str]] = ()):
        self.labels: list[tuple[str, ...]] = [()]
        self._index = {(): 0}
        for lab in labels:
            self.add(lab)

    @classmethod
    def from_sequences(cls, seqs: Sequence[MergedSequence]) -> "OutputVocab":
        v = cls()
        for s in seqs:
            for _, out in s.steps:
                v.add(out)
        return v

    def add(self, label: Sequence[str]) -> int:
        label = tuple(label)
        idx = self._index.get(label)
        if idx is None:
            idx = len(self.labels)
            self.labels.append(label)
            self._index[label] = idx
        return idx

    def index(self, label: Sequence[str]) -> int:
        try:
            return self._index[tuple(label)]
        except KeyError:
            raise UnknownSymbol(tuple(label)) from None

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> tuple[str, ...]:
        return self.labels[i]


@dataclass
class TrainConfig:
    hidden_dim: int = 32
    lr: float = 1e-3
    dropout: float = 0.0
    label_smoothing: float = 0.1
    batch_size: int = 32
    epochs: int = 600
    seed: int = 0
    lambda_sn: float = 0.1
    objective: str = "transduction"
    clip_norm: float | None = 5.0
    weight_decay: float = 0.01
    use_bias: bool = True
    sn_reduce: str = "sum"  # or "mean" over the two recurrent matrices
    probe_epochs: int = 100  # readout fit for non-transduction objectives

    def validate(self, strict: bool = False):
        if self.hidden_dim < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError(f"invalid sizes in {self}")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if not 0 <= self.dropout < 1 or not 0 <= self.label_smoothing < 1:
            raise ConfigError("dropout and label smoothing must lie in [0, 1)")
        if self.lambda_sn < 0:
            raise ConfigError("lambda_sn must be >= 0")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.sn_reduce not in ("sum", "mean"):
            raise ConfigError(f"unknown sn_reduce {self.sn_reduce!r}")
        if strict:
            checks = [
                (self.hidden_dim, GRID_HIDDEN, "hidden_dim"),
                (self.dropout, GRID_DROPOUT, "dropout"),
                (self.lr, GRID_LR, "lr"),
                (self.epochs, GRID_EPOCHS, "epochs"),
                (self.batch_size, GRID_BATCH, "batch_size"),
            ]
            for value, grid, name in checks:
                if value not in grid:
                    raise ConfigError(f"{name}={value} not in grid {grid}")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig keys {sorted(unknown)}")
        return cls(**d)


PARAM_NAMES = ("E", "W_h", "W_x", "b_h", "W_y", "b_y")
HEAD_NAMES = ("W_lm", "b_lm", "w_cls", "b_cls")


@dataclass
class ModelParams:
    """Embeddings, recurrent weights and readout.  Treat as read-only once trained."""

    input_table: SymbolTable
    vocab: OutputVocab
    E: np.ndarray  # (|Σ|+1, d); row 0 (epsilon) unused
    W_h: np.ndarray
    W_x: np.ndarray
    b_h: np.ndarray
    W_y: np.ndarray  # (|V_out|, 2d)
    b_y: np.ndarray
    heads: dict = field(default_factory=dict)  # auxiliary objective heads
    pair_vocab: list = field(default_factory=list)  # LM objective tokens (input, label id)
    interleaved: bool = False  # recurrence also reads each step's output symbols

    @property
    def d(self) -> int:
        return self.W_h.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        out = {k: getattr(self, k) for k in PARAM_NAMES}
        out.update(self.heads)
        return out

    def copy(self) -> "ModelParams":
        return replace(
            self,
            **{k: getattr(self, k).copy() for k in PARAM_NAMES},
            heads={k: v.copy() for k, v in self.heads.items()},
            pair_vocab=list(self.pair_vocab),
        )

    def encode(self, symbols: Sequence[str]) -> list[int]:
        return [self.input_table.index(s) for s in symbols]


def init_params(input_table: SymbolTable, vocab: OutputVocab, d: int,
                rng: np.random.Generator) -> ModelParams:
    n_in, n_out = len(input_table), len(vocab)
    k = 1.0 / math.sqrt(d)
    k2 = 1.0 / math.sqrt(2 * d)
    return ModelParams(
        input_table=input_table,
        vocab=vocab,
        E=rng.normal(0.0, 1.0, (n_in, d)),
        W_h=rng.uniform(-k, k, (d, d)),
        W_x=rng.uniform(-k, k, (d, d)),
        b_h=rng.uniform(-k, k, d),
        W_y=rng.uniform(-k2, k2, (n_out, 2 * d)),
        b_y=rng.uniform(-k2, k2, n_out),
    )


# ---------------------------------------------------------------- inference


@dataclass
class HiddenTrace:
    inputs: tuple[str, ...]
    states: np.ndarray  # (T+1, d); states[0] is h_0
    labels: list[tuple[str, ...]]  # predicted output label per step


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def forward(m: ModelParams, input: Sequence[str]) -> HiddenTrace:
    """Run the recurrence (no dropout); labels are argmax predictions."""
    ids = m.encode(input)
    H, pred = run_batch(m, [ids])
    T = len(ids)
    return HiddenTrace(tuple(input), H[0, : T + 1].copy(),
                       [m.vocab[int(i)] for i in pred[0, :T]])


def predict_step(m: ModelParams, h: np.ndarray, next_input: str) -> np.ndarray:
    """Distribution over output labels for reading ``next_input`` from state ``h``."""
    e = m.E[m.input_table.index(next_input)]
    return _softmax(m.W_y @ np.concatenate([h, e]) + m.b_y)


def _pad(batch: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    T = max((len(s) for s in batch), default=0)
    X = np.zeros((len(batch), T), dtype=np.int64)
    mask = np.zeros((len(batch), T), dtype=bool)
    for b, s in enumerate(batch):
        X[b, : len(s)] = s
        mask[b, : len(s)] = True
    return X, mask


def _recur(m: ModelParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    B, T = X.shape
    e = m.E[X]
    drive = e @ m.W_x.T + m.b_h
    H = np.zeros((B, T + 1, m.d))
    for t in range(T):
        H[:, t + 1] = np.tanh(H[:, t] @ m.W_h.T + drive[:, t])
    return e, H


def _step_logits(m: ModelParams, H: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Transduction logits for every step: (B, T, |V|)."""
    T = e.shape[1]
    Z = np.concatenate([H[:, :T], e], axis=-1)
    return Z @ m.W_y.T + m.b_y


def run_batch(m: ModelParams, seqs: Sequence[Sequence[int]], chunk: int = 2048
              ) -> tuple[np.ndarray, np.ndarray]:
    """Hidden states (N, T+1, d) and argmax label ids (N, T) for id sequences."""
    return trace_batch(m, seqs, chunk=chunk)


def trace_batch(m: ModelParams, seqs: Sequence[Sequence[int]],
                forced: Sequence[Sequence[int]] | None = None, chunk: int = 2048
                ) -> tuple[np.ndarray, np.ndarray]:
    """States after each input symbol and the label emitted on each step.

    With ``forced`` label ids (gold outputs) the labels are not predicted;
    this only changes the states of interleaved models.
    """
    X, mask = _pad(seqs)
    N, T = X.shape
    F = _pad(forced)[0] if forced is not None else None
    H_all = np.zeros((N, T + 1, m.d))
    P_all = np.zeros((N, T), dtype=np.int64)
    for lo in range(0, N, chunk):
        Xc = X[lo: lo + chunk]
        Fc = F[lo: lo + chunk] if F is not None else None
        if m.interleaved:
            H, P = _trace_interleaved(m, Xc, mask[lo: lo + chunk], Fc)
        else:
            e, H = _recur(m, Xc)
            P = _readout(m, Xc, H, e) if T else np.zeros((len(Xc), 0), dtype=np.int64)
            if Fc is not None:
                P = Fc
        H_all[lo: lo + chunk] = H
        P_all[lo: lo + chunk] = P
    return H_all, P_all


def _trace_interleaved(m: ModelParams, X, mask, F):
    B, T = X.shape
    H = np.zeros((B, T + 1, m.d))
    P = np.zeros((B, T), dtype=np.int64)
    label_ids = [[m.input_table.index(_out_token(c)) if _out_token(c) in m.input_table else 0 for c in lab]
                 for lab in m.vocab.labels]
    width = max((len(x) for x in label_ids), default=0)
    L = np.zeros((len(label_ids), max(width, 1)), dtype=np.int64)
    Llen = np.array([len(x) for x in label_ids])
    for k, ids in enumerate(label_ids):
        L[k, : len(ids)] = ids
    h = np.zeros((B, m.d))
    for t in range(T):
        e = m.E[X[:, t]]
        lab = (np.concatenate([h, e], axis=1) @ m.W_y.T + m.b_y).argmax(axis=1)
        if F is not None:
            lab = F[:, t]
        P[:, t] = lab
        live = mask[:, t][:, None]
        h = np.where(live, np.tanh(h @ m.W_h.T + e @ m.W_x.T + m.b_h), h)
        for j in range(width):
            act = (live[:, 0] & (Llen[lab] > j))[:, None]
            c = m.E[L[lab, j]]
            h = np.where(act, np.tanh(h @ m.W_h.T + c @ m.W_x.T + m.b_h), h)
        H[:, t + 1] = h
    return H, P


def _readout(m: ModelParams, X, H, e) -> np.ndarray:
    if m.pair_vocab and "W_lm" in m.heads:
        # language-model head: best pair whose input matches the symbol read
        T = X.shape[1]
        logits = H[:, :T] @ m.heads["W_lm"].T + m.heads["b_lm"]
        pair_in = np.array([a for a, _ in m.pair_vocab])
        pair_lab = np.array([lab for _, lab in m.pair_vocab])
        allowed = pair_in[None, None, :] == X[:, :, None]
        logits = np.where(allowed, logits, -np.inf)
        best = logits.argmax(axis=-1)
        found = allowed.any(axis=-1)
        fallback = _step_logits(m, H, e).argmax(axis=-1)
        return np.where(found, pair_lab[best], fallback)
    return _step_logits(m, H, e).argmax(axis=-1)


# ---------------------------------------------------------------- spectral norm


class PowerIteration:
    """Persistent right-singular-vector estimate for one matrix."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.rng = rng
        self.u = self._random(n)
        self.v = None

    def _random(self, n):
        u = self.rng.normal(size=n)
        return u / np.linalg.norm(u)

    def step(self, W: np.ndarray, iters: int = 1) -> float:
        for _ in range(iters):
            wu = W @ self.u
            nv = np.linalg.norm(wu)
            if nv == 0.0:
                self.u = self._random(W.shape[1])
                self.v = np.zeros(W.shape[0])
                return 0.0
            v = wu / nv
            wtv = W.T @ v
            nu = np.linalg.norm(wtv)
            if nu == 0.0:
                self.u = self._random(W.shape[1])
                self.v = np.zeros(W.shape[0])
                return 0.0
            self.u = wtv / nu
        wu = W @ self.u
        nv = np.linalg.norm(wu)
        if nv == 0.0:
            self.u = self._random(W.shape[1])
            self.v = np.zeros(W.shape[0])
            return 0.0
        self.v = wu / nv
        # equals v.W.u; the ratio form is exact when W maps u to itself
        return float(nv / np.linalg.norm(self.u))


def spectral_norm(W: np.ndarray, iters: int = 1, state: PowerIteration | None = None,
                  seed: int = 0) -> float:
    """Power-iteration estimate of the largest singular value of ``W``.

    ``state`` carries the vector between calls (one iteration per training
    step); without it a fresh random start is used.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if state is None:
        state = PowerIteration(W.shape[1], np.random.default_rng(seed))
    return state.step(W, iters)


# ---------------------------------------------------------------- objective


@dataclass
class Batch:
    X: np.ndarray
    mask: np.ndarray
    Y: np.ndarray | None = None  # per-step label ids (transduction / LM)
    lengths: np.ndarray | None = None
    target: np.ndarray | None = None  # binary labels


def encode_batch(m: ModelParams, seqs: Sequence[MergedSequence]) -> Batch:
    ids = [m.encode(s.input) for s in seqs]
    X, mask = _pad(ids)
    Y = np.zeros_like(X)
    for b, s in enumerate(seqs):
        Y[b, : len(s)] = [m.vocab.index(o) for _, o in s.steps]
    return Batch(X, mask, Y, mask.sum(axis=1))


def _smoothed_ce(logits: np.ndarray, Y: np.ndarray, mask: np.ndarray, smoothing: float):
    """Mean label-smoothed cross-entropy over masked positions and its logit gradient."""
    V = logits.shape[-1]
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    q = np.full(logits.shape, smoothing / V)
    np.put_along_axis(q, Y[..., None], 1.0 - smoothing + smoothing / V, axis=-1)
    n = max(int(mask.sum()), 1)
    ce = -(q * logp).sum(axis=-1)
    loss = float((ce * mask).sum() / n)
    grad = (np.exp(logp) - q) * (mask[..., None] / n)
    return loss, grad


def _sn_terms(m: ModelParams, cfg: TrainConfig, sn: dict | None):
    """Spectral penalty value and its gradient w.r.t. W_h and W_x (u, v held fixed)."""
    if cfg.lambda_sn == 0:
        return 0.0, {}
    scale = cfg.lambda_sn * (0.5 if cfg.sn_reduce == "mean" else 1.0)
    total, grads = 0.0, {}
    for name in ("W_h", "W_x"):
        W = getattr(m, name)
        if sn is not None and name in sn:
            it = sn[name]
            if it.v is None:
                it.step(W, 1)
            u, v = it.u, it.v
            sigma = float(v @ W @ u)
        else:
            it = PowerIteration(W.shape[1], np.random.default_rng(0))
            sigma = it.step(W, 100)
            u, v = it.u, it.v
        total += sigma
        grads[name] = scale * np.outer(v, u)
    return scale * total, grads


def objective(
    m: ModelParams,
    batch: Batch,
    cfg: TrainConfig,
    sn: dict | None = None,
    rng: np.random.Generator | None = None,
    need_grad: bool = True,
):
    """Loss and gradients for one batch under ``cfg.objective``.

    ``sn`` maps matrix names to PowerIteration states whose current (u, v)
    define the penalty; when None the norms are estimated to convergence.
    ``rng`` enables dropout.
    """
    X, mask = batch.X, batch.mask
    B, T = X.shape
    d = m.d
    e, H = _recur(m, X)
    drop = None
    if rng is not None and cfg.dropout > 0:
        keep = 1.0 - cfg.dropout
        drop = (rng.random((B, T + 1, d)) < keep) / keep

    grads = {k: np.zeros_like(v) for k, v in m.arrays().items()}
    dH = np.zeros_like(H)
    de = np.zeros_like(e)
    Hd = H if drop is None else H * drop

    if cfg.objective == "transduction":
        Z = np.concatenate([Hd[:, :T], e], axis=-1)
        logits = Z @ m.W_y.T + m.b_y
        ce, dlog = _smoothed_ce(logits, batch.Y, mask, cfg.label_smoothing)
        if need_grad:
            grads["W_y"] = np.einsum("btv,btk->vk", dlog, Z)
            grads["b_y"] = dlog.sum(axis=(0, 1))
            dZ = dlog @ m.W_y
            dH[:, :T] += dZ[..., :d] * (1.0 if drop is None else drop[:, :T])
            de += dZ[..., d:]
    elif cfg.objective == "language_model":
        W, b = m.heads["W_lm"], m.heads["b_lm"]
        Hin = Hd[:, :T]
        logits = Hin @ W.T + b
        ce, dlog = _smoothed_ce(logits, batch.Y, mask, cfg.label_smoothing)
        if need_grad:
            grads["W_lm"] = np.einsum("btv,btk->vk", dlog, Hin)
            grads["b_lm"] = dlog.sum(axis=(0, 1))
            dH[:, :T] += (dlog @ W) * (1.0 if drop is None else drop[:, :T])
    elif cfg.objective == "binary_classification":
        w, b0 = m.heads["w_cls"], m.heads["b_cls"]
        idx = np.arange(B)
        hT = Hd[idx, batch.lengths]
        s = hT @ w + b0[0]
        p = 1.0 / (1.0 + np.exp(-s))
        y = batch.target
        eps = 1e-12
        ce = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
        if need_grad:
            ds = (p - y) / B
            grads["w_cls"] = hT.T @ ds
            grads["b_cls"] = np.array([ds.sum()])
            g = np.outer(ds, w)
            if drop is not None:
                g = g * drop[idx, batch.lengths]
            dH[idx, batch.lengths] += g
    else:
        raise ConfigError(f"unknown objective {cfg.objective!r}")

    pen, pen_grads = _sn_terms(m, cfg, sn)
    loss = ce + pen
    if not need_grad:
        return loss, None

    # backpropagation through time
    carry = np.zeros((B, d))
    dA_all = np.zeros((B, T, d))
    for t in range(T, 0, -1):
        dh = dH[:, t] + carry
        da = dh * (1.0 - H[:, t] ** 2)
        dA_all[:, t - 1] = da
        carry = da @ m.W_h
    grads["W_h"] = np.einsum("btk,btj->kj", dA_all, H[:, :T])
    grads["W_x"] = np.einsum("btk,btj->kj", dA_all, e)
    grads["b_h"] = dA_all.sum(axis=(0, 1)) if cfg.use_bias else np.zeros(d)
    de += dA_all @ m.W_x
    np.add.at(grads["E"], X, de)
    for name, g in pen_grads.items():
        grads[name] += g
    if not cfg.use_bias:
        grads["b_y"] = np.zeros_like(m.b_y)
    return loss, grads


def loss(m: ModelParams, batch: Sequence[MergedSequence], cfg: TrainConfig,
         sn: dict | None = None) -> float:
    """Label-smoothed CE over all steps plus the spectral penalty; no dropout."""
    if not batch:
        raise ValueError("empty batch")
    value, _ = objective(m, encode_batch(m, batch), cfg, sn=sn, need_grad=False)
    return value


def step_accuracy(m: ModelParams, data: Sequence[MergedSequence]) -> float:
    b = encode_batch(m, data)
    _, P = run_batch(m, [list(r[: n]) for r, n in zip(b.X, b.lengths)])
    return float(((P == b.Y) & b.mask).sum() / max(b.mask.sum(), 1))


# ---------------------------------------------------------------- training


class AdamW:
    def __init__(self, params: dict, lr: float, weight_decay: float = 0.01,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.wd, self.betas, self.eps = lr, weight_decay, betas, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, p in params.items():
            g = grads[k]
            p *= 1.0 - self.lr * self.wd
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _clip(grads: dict, max_norm: float | None):
    if max_norm is None:
        return
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / (norm + 1e-12)


def build_tables(data: Sequence[MergedSequence]) -> tuple[SymbolTable, OutputVocab]:
    itab = SymbolTable()
    for s in data:
        for a in s.input:
            itab.add(a)
    return itab, OutputVocab.from_sequences(data)


def _fit(m: ModelParams, batches_fn, cfg: TrainConfig, epochs: int, rng: np.random.Generator,
         trainable: Sequence[str] | None = None, sn_rng: np.random.Generator | None = None):
    params = m.arrays() if trainable is None else {k: m.arrays()[k] for k in trainable}
    opt = AdamW(params, cfg.lr, cfg.weight_decay)
    sn = None
    if cfg.lambda_sn > 0 and trainable is None:
        sn_rng = sn_rng if sn_rng is not None else np.random.default_rng(cfg.seed)
        sn = {"W_h": PowerIteration(m.d, sn_rng), "W_x": PowerIteration(m.d, sn_rng)}
    run_cfg = cfg if trainable is None else replace(cfg, lambda_sn=0.0)
    drop_rng = np.random.default_rng(rng.integers(2**63))
    for _ in range(epochs):
        for batch in batches_fn(rng):
            if sn is not None:
                sn["W_h"].step(m.W_h, 1)
                sn["W_x"].step(m.W_x, 1)
            _, grads = objective(m, batch, run_cfg, sn=sn, rng=drop_rng)
            grads = {k: grads[k] for k in params}
            _clip(grads, cfg.clip_norm)
            opt.step(params, grads)
            if not cfg.use_bias:
                m.b_h[:] = 0.0
                m.b_y[:] = 0.0


def _minibatches(encoded: Sequence, make, batch_size: int):
    def gen(rng):
        order = rng.permutation(len(encoded))
        for lo in range(0, len(order), batch_size):
            yield make([encoded[i] for i in order[lo: lo + batch_size]])
    return gen


def train(data: Sequence[MergedSequence], cfg: TrainConfig,
          input_table: SymbolTable | None = None, vocab: OutputVocab | None = None) -> ModelParams:
    """Minibatch AdamW on the configured objective; returns final-epoch parameters."""
    if not data:
        raise ValueError("no training data")
    cfg.validate()
    if cfg.objective != "transduction":
        return alt_objectives(data, cfg, input_table, vocab)
    itab, voc = build_tables(data)
    itab = input_table or itab
    vocab = vocab or voc
    root = np.random.default_rng(cfg.seed)
    init_rng, shuffle_rng, sn_rng = [np.random.default_rng(s) for s in root.spawn(3)]
    m = init_params(itab, vocab, cfg.hidden_dim, init_rng)
    if not cfg.use_bias:
        m.b_h[:] = 0.0
        m.b_y[:] = 0.0
    if cfg.epochs == 0:
        return m
    encoded = [(m.encode(s.input), [m.vocab.index(o) for _, o in s.steps]) for s in data]

    def make(items):
        X, mask = _pad([a for a, _ in items])
        Y, _ = _pad([b for _, b in items])
        return Batch(X, mask, Y, mask.sum(axis=1))

    _fit(m, _minibatches(encoded, make, cfg.batch_size), cfg, cfg.epochs, shuffle_rng,
         sn_rng=sn_rng)
    return m


def make_negatives(data: Sequence[MergedSequence], rng: np.random.Generator,
                   alphabet: Sequence[str] | None = None) -> list[MergedSequence]:
    """One corrupted copy per example: a random output character replaced by another."""
    if alphabet is None:
        alphabet = sorted({c for s in data for c in s.output})
    out = []
    for s in data:
        slots = [(k, j) for k, (_, o) in enumerate(s.steps) for j in range(len(o))]
        steps = [list(st) for st in s.steps]
        if slots and len(alphabet) > 1:
            k, j = slots[rng.integers(len(slots))]
            old = steps[k][1][j]
            choices = [c for c in alphabet if c != old]
            new = choices[rng.integers(len(choices))]
            o = list(steps[k][1])
            o[j] = new
            steps[k][1] = tuple(o)
        else:
            # nothing to replace: insert a symbol on the last step
            steps[-1][1] = tuple(steps[-1][1]) + (alphabet[rng.integers(len(alphabet))],)
        out.append(MergedSequence(tuple((i, tuple(o)) for i, o in steps)))
    return out


def alt_objectives(data: Sequence[MergedSequence], cfg: TrainConfig,
                   input_table: SymbolTable | None = None,
                   vocab: OutputVocab | None = None) -> ModelParams:
    """Train the recurrence with a language-model or accept/reject head.

    language_model: the recurrence reads input symbols and h_t predicts the
    next (input, output label) pair token.  Labels for unseen strings are the
    best-scoring pair whose input matches the symbol being read.

    binary_classification: the recurrence reads each input symbol followed by
    its output symbols; a logistic head on the final state separates training
    pairs from one corrupted copy each.  A softmax readout is then fitted on
    the frozen states so the model can label unseen strings greedily.
    """
    if cfg.objective == "transduction":
        raise ConfigError("use train() for the transduction objective")
    cfg.validate()
    itab, voc = build_tables(data)
    itab = input_table or itab
    vocab = vocab or voc
    root = np.random.default_rng(cfg.seed)
    init_rng, shuffle_rng, sn_rng, neg_rng = [np.random.default_rng(s) for s in root.spawn(4)]
    d = cfg.hidden_dim

    def make(items):
        X, mask = _pad([a for a, _ in items])
        Y, _ = _pad([b for _, b in items])
        return Batch(X, mask, Y, mask.sum(axis=1))

    if cfg.objective == "language_model":
        m = init_params(itab, vocab, d, init_rng)
        steps = [(m.encode(s.input), [m.vocab.index(o) for _, o in s.steps]) for s in data]
        pairs = sorted({(a, y) for x, ys in steps for a, y in zip(x, ys)})
        m.pair_vocab = pairs
        pidx = {p: i for i, p in enumerate(pairs)}
        k = 1.0 / math.sqrt(d)
        m.heads["W_lm"] = init_rng.uniform(-k, k, (len(pairs), d))
        m.heads["b_lm"] = np.zeros(len(pairs))
        encoded = [(x, [pidx[(a, y)] for a, y in zip(x, ys)]) for x, ys in steps]
        if cfg.epochs:
            _fit(m, _minibatches(encoded, make, cfg.batch_size), cfg, cfg.epochs,
                 shuffle_rng, sn_rng=sn_rng)
        return m

    alphabet = sorted({c for s in data for c in s.output})
    negatives = make_negatives(data, neg_rng, alphabet)
    for c in alphabet:
        itab.add(_out_token(c))
    m = init_params(itab, vocab, d, init_rng)
    m.interleaved = True
    m.heads["w_cls"] = init_rng.uniform(-1 / math.sqrt(d), 1 / math.sqrt(d), d)
    m.heads["b_cls"] = np.zeros(1)
    encoded = [(_interleave(m, s), 1.0) for s in data]
    encoded += [(_interleave(m, s), 0.0) for s in negatives]

    def make_cls(items):
        X, mask = _pad([a for a, _ in items])
        return Batch(X, mask, None, mask.sum(axis=1),
                     np.array([t for _, t in items], dtype=float))

    if cfg.epochs:
        _fit(m, _minibatches(encoded, make_cls, cfg.batch_size), cfg, cfg.epochs,
             shuffle_rng, sn_rng=sn_rng)
    _fit_readout(m, data, cfg)
    return m


def _fit_readout(m: ModelParams, data: Sequence[MergedSequence], cfg: TrainConfig,
                 lr: float = 0.01):
    """Softmax regression of step labels on [state before step; input embedding]."""
    ids = [m.encode(s.input) for s in data]
    gold = [[m.vocab.index(o) for _, o in s.steps] for s in data]
    H, _ = trace_batch(m, ids, forced=gold)
    feats, labels = [], []
    for n, (x, ys) in enumerate(zip(ids, gold)):
        for t, (a, y) in enumerate(zip(x, ys)):
            feats.append(np.concatenate([H[n, t], m.E[a]]))
            labels.append(y)
    Z = np.array(feats)
    Y = np.array(labels)
    params = {"W_y": m.W_y, "b_y": m.b_y}
    opt = AdamW(params, lr, cfg.weight_decay)
    ones = np.ones(len(Y), dtype=bool)
    for _ in range(cfg.probe_epochs):
        _, dlog = _smoothed_ce(Z @ m.W_y.T + m.b_y, Y, ones, cfg.label_smoothing)
        opt.step(params, {"W_y": dlog.T @ Z, "b_y": dlog.sum(axis=0)})


def _out_token(c: str) -> str:
    # output symbols get their own embeddings, apart from same-named inputs
    return "\u2192" + c


def _interleave(m: ModelParams, s: MergedSequence) -> list[int]:
    ids = []
    for i, o in s.steps:
        ids.append(m.input_table.index(i))
        ids.extend(m.input_table.index(_out_token(c)) for c in o)
    return ids


def classify(m: ModelParams, seqs: Sequence[MergedSequence]) -> np.ndarray:
    """Accept probabilities from the binary head."""
    ids = [_interleave(m, s) for s in seqs]
    X, _ = _pad(ids)
    _, H = _recur(m, X)
    lengths = np.array([len(x) for x in ids])
    hT = H[np.arange(len(ids)), lengths]
    return 1.0 / (1.0 + np.exp(-(hT @ m.heads["w_cls"] + m.heads["b_cls"][0])))


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_FORMAT = "fstforge-rnn"
CHECKPOINT_VERSION = 1


def save_model(m: ModelParams, path: str | Path, config: TrainConfig | None = None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_symbols": list(m.input_table.symbols),
        "output_labels": [list(lab) for lab in m.vocab.labels],
        "pair_vocab": [list(p) for p in m.pair_vocab],
        "interleaved": m.interleaved,
        "config": config.to_dict() if config else None,
        "arrays": {
            k: {"shape": list(v.shape), "data": v.ravel().tolist()}
            for k, v in m.arrays().items()
        },
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> ModelParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not a fstforge RNN checkpoint (or unsupported version)")
    itab = SymbolTable(doc["input_symbols"])
    vocab = OutputVocab(doc["output_labels"][1:])
    arrays = {}
    for k, spec in doc["arrays"].items():
        a = np.asarray(spec["data"], dtype=np.float64)
        if a.size != math.prod(spec["shape"]):
            raise ValueError(f"array {k}: data length does not match shape")
        arrays[k] = a.reshape(spec["shape"])
    d = arrays["W_h"].shape[0]
    expected = {
        "E": (len(itab), d), "W_h": (d, d), "W_x": (d, d), "b_h": (d,),
        "W_y": (len(vocab), 2 * d), "b_y": (len(vocab),),
    }
    for k, shape in expected.items():
        if arrays[k].shape != shape:
            raise ValueError(f"array {k} has shape {arrays[k].shape}, expected {shape}")
    heads = {k: arrays[k] for k in HEAD_NAMES if k in arrays}
    return ModelParams(itab, vocab, *(arrays[k] for k in PARAM_NAMES), heads=heads,
                       pair_vocab=[tuple(p) for p in doc.get("pair_vocab", [])],
                       interleaved=bool(doc.get("interleaved", False)))
