"""Seeded random search over RNN and extraction settings."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, FstForgeError
from .extract import (
    ExtractionConfig,
    cluster,
    collect_activations,
    finalize,
    resolve_transitions,
)
from .fst import Transducer
from .pipeline import EvalReport, FstSystem, evaluate, synthetic_inputs, training_sequences
from .rnn import (
    GRID_BATCH,
    GRID_DROPOUT,
    GRID_EPOCHS,
    GRID_HIDDEN,
    GRID_LR,
    ModelParams,
    TrainConfig,
    train,
)

log = logging.getLogger(__name__)

LAMBDA_GRID = (None, 2, 3, 4, 5, 10, 15, 20, 25, 30, 40, 50)
CLASSIFIERS = ("svm", "logistic_regression")


def batch_grid(n_train: int, grid=GRID_BATCH) -> tuple[int, ...]:
    """The four largest grid batch sizes below a fifth of the training set."""
    ok = [b for b in sorted(grid) if b < n_train / 5]
    return tuple(ok[-4:]) if ok else (min(grid),)


@dataclass
class SweepSpec:
    budget: int = 10
    seed: int = 0
    rnn_budget: int | None = None  # distinct RNN configs; extraction trials share them
    hidden: tuple = GRID_HIDDEN
    dropout: tuple = GRID_DROPOUT
    lr: tuple = GRID_LR
    epochs: tuple = GRID_EPOCHS
    batch: tuple | None = None
    lambda_sn: tuple = (0.1,)
    objective: str = "transduction"
    classifiers: tuple = CLASSIFIERS
    lambdas: tuple = LAMBDA_GRID
    k_min: int = 50
    k_cap: int = 400
    align: str = "crp"
    align_iterations: int = 10
    merge: str | None = None
    synthetic: bool = True
    synthetic_cap: int = 50_000
    ngram_n: int = 2
    ngram_max_len: int = 6
    workers: int = 1

    def validate(self):
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if self.rnn_budget is not None and self.rnn_budget < 1:
            raise ConfigError("rnn_budget must be at least 1")
        grids = [(self.hidden, GRID_HIDDEN), (self.dropout, GRID_DROPOUT), (self.lr, GRID_LR),
                 (self.epochs, GRID_EPOCHS), (self.batch or (), GRID_BATCH)]
        for values, allowed in grids:
            if not set(values) <= set(allowed):
                raise ConfigError(f"grid values {values} outside {allowed}")
        if not set(self.lambdas) <= set(LAMBDA_GRID):
            raise ConfigError(f"lambda_trans values {self.lambdas} outside {LAMBDA_GRID}")
        if not self.lambda_sn or min(self.lambda_sn) < 0:
            raise ConfigError("lambda_sn choices must be non-negative")
        if not set(self.classifiers) <= set(CLASSIFIERS):
            raise ConfigError(f"unknown classifiers {self.classifiers}")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class Trial:
    index: int
    model: int
    extraction: dict
    dev: dict | None = None
    states: int | None = None
    transitions: int | None = None
    flags: list = field(default_factory=list)
    error: str | None = None


@dataclass
class SweepResult:
    model: ModelParams
    train_config: TrainConfig
    extraction_config: ExtractionConfig
    fst: Transducer
    dev: EvalReport
    test: EvalReport
    trials: list[Trial]
    wall_clock_s: float


def k_range(distinct: int, k_min: int = 50, k_cap: int = 400) -> tuple[int, int]:
    hi = max(1, min(distinct, k_cap))
    lo = max(1, min(k_min, distinct // 2, hi))
    return lo, hi


def _train_job(args):
    data, cfg = args
    return train(data, cfg)


def plan(spec: SweepSpec, n_train: int):
    """RNN configs and per-trial draws, fixed by the seed alone."""
    rng = np.random.default_rng(spec.seed)
    n_models = spec.rnn_budget or max(1, math.ceil(spec.budget / 4))
    n_models = min(n_models, spec.budget)
    batches = spec.batch or batch_grid(n_train)
    pick = lambda xs: xs[int(rng.integers(len(xs)))]
    configs = []
    for _ in range(n_models):
        configs.append(TrainConfig(
            hidden_dim=int(pick(spec.hidden)), lr=float(pick(spec.lr)),
            dropout=float(pick(spec.dropout)), epochs=int(pick(spec.epochs)),
            batch_size=int(pick(batches)), lambda_sn=float(pick(spec.lambda_sn)),
            objective=spec.objective, seed=int(rng.integers(2**31))))
    draws = []
    for i in range(spec.budget):
        draws.append({
            "model": i % n_models,
            "u": float(rng.random()),
            "classifier": pick(spec.classifiers),
            "lambda_trans": pick(spec.lambdas),
            "seed": int(rng.integers(2**31)),
        })
    return configs, draws


def run_sweep(ds: Dataset, spec: SweepSpec) -> SweepResult:
    """Random search; the dev-set winner is scored on test exactly once."""
    spec.validate()
    start = time.monotonic()
    data = training_sequences(ds, spec.align, spec.merge, spec.align_iterations, spec.seed)
    synthetic = (synthetic_inputs(ds, spec.synthetic_cap, spec.ngram_max_len, spec.ngram_n,
                                  spec.seed) if spec.synthetic else [])
    configs, draws = plan(spec, len(data))

    jobs = [(data, c) for c in configs]
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            models = list(pool.map(_train_job, jobs))
    else:
        models = [_train_job(j) for j in jobs]

    trials: list[Trial] = []
    best = None  # (key, trial index, fst, ext cfg, dev report)
    for mi, m in enumerate(models):
        acts = collect_activations(m, data, synthetic)
        distinct = len(np.unique(acts.vectors, axis=0))
        lo, hi = k_range(distinct, spec.k_min, spec.k_cap)
        for ti, d in enumerate(draws):
            if d["model"] != mi:
                continue
            k = int(round(math.exp(math.log(lo) + d["u"] * (math.log(hi) - math.log(lo)))))
            cfg = ExtractionConfig(k=k, classifier=d["classifier"],
                                   lambda_trans=d["lambda_trans"], seed=d["seed"])
            trial = Trial(ti, mi, cfg.to_dict())
            try:
                res = resolve_transitions(cluster(acts, k, cfg.seed, cfg.pin_root), cfg)
                fst = finalize(res, acts)
            except (FstForgeError, ValueError) as exc:
                trial.error = f"{type(exc).__name__}: {exc}"
                log.warning("trial %d failed: %s", ti, trial.error)
                trials.append(trial)
                continue
            dev = evaluate(FstSystem(fst), ds.dev)
            trial.dev = dev.as_dict()
            trial.states, trial.transitions = fst.num_states, fst.num_transitions
            trial.flags = list(res.flags)
            trials.append(trial)
            key = (dev.accuracy, -fst.num_states, -fst.num_transitions, -ti)
            if best is None or key > best[0]:
                best = (key, mi, fst, cfg, dev)
    if best is None:
        raise FstForgeError("every sweep trial failed")
    _, mi, fst, cfg, dev = best
    test = evaluate(FstSystem(fst), ds.test())
    trials.sort(key=lambda t: t.index)
    return SweepResult(models[mi], configs[mi], cfg, fst, dev, test, trials,
                       time.monotonic() - start)
