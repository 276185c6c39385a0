"""Dataset loading and task encoding."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .align import StringPair
from .errors import FormatError

TASKS = ("inflection", "g2p", "normalization")

SPLIT_SUFFIXES = {
    "train": (".trn", ".train", "_train.tsv", ".train.tsv", "-train.tsv", "train.tsv"),
    "dev": (".dev", "_dev.tsv", ".dev.tsv", "-dev.tsv", "dev.tsv"),
    "test": (".tst", ".test", "_test.tsv", ".test.tsv", "-test.tsv", "test.tsv"),
}


def tag_token(tag: str) -> str:
    return f"[{tag}]"


@dataclass
class Dataset:
    """Train/dev/test splits of symbol-tuple pairs.

    The test split sits behind :meth:`test`, which counts its readers so
    callers can check that model selection never looked at it.
    """

    task: str
    name: str
    train: list[StringPair]
    dev: list[StringPair]
    _test: list[StringPair] = field(repr=False, default_factory=list)
    tags: tuple[str, ...] = ()
    test_reads: int = 0

    def test(self) -> list[StringPair]:
        self.test_reads += 1
        return self._test

    def split_tags(self, x: Sequence[str]) -> tuple[tuple[str, ...], tuple[str, ...]]:
        """(tag tokens, lemma characters) of an encoded inflection input."""
        n = 0
        while n < len(x) and x[n].startswith("[") and x[n].endswith("]") and len(x[n]) > 2:
            n += 1
        return tuple(x[:n]), tuple(x[n:])


def parse_line(line: str, task: str, lineno: int, path: str = "",
               sort_tags: bool = False) -> StringPair:
    where = Path(path).name if path else "input"
    fields = line.rstrip("\n").rstrip("\r").split("\t")
    if task == "inflection":
        if len(fields) != 3:
            raise FormatError(
                f"{where}: expected lemma<TAB>form<TAB>tags, got {len(fields)} fields", lineno)
        lemma, form, tags = fields
        if not lemma or not tags:
            raise FormatError(f"{where}: empty lemma or tag field", lineno)
        feats = tags.split(";")
        if sort_tags:
            feats = sorted(feats)
        x = tuple(tag_token(t) for t in feats) + tuple(lemma)
        return StringPair(x, tuple(form))
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if len(fields) != 2:
        raise FormatError(f"{where}: expected input<TAB>output, got {len(fields)} fields", lineno)
    src, tgt = fields
    if not src:
        raise FormatError(f"{where}: empty input", lineno)
    out = tuple(tgt.split()) if task == "g2p" else tuple(tgt)
    return StringPair(tuple(src), out)


def read_pairs(path: str | Path, task: str, sort_tags: bool = False) -> list[StringPair]:
    pairs = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            pairs.append(parse_line(line, task, n, str(path), sort_tags))
    return pairs


def find_split_files(path: str | Path) -> dict[str, Path]:
    """Locate train/dev/test files from a directory or a shared file prefix."""
    p = Path(path)
    found: dict[str, Path] = {}
    if p.is_dir():
        files = sorted(f for f in p.iterdir() if f.is_file())
        for split, suffixes in SPLIT_SUFFIXES.items():
            for f in files:
                if any(f.name.endswith(s) for s in suffixes):
                    found.setdefault(split, f)
    else:
        for split, suffixes in SPLIT_SUFFIXES.items():
            for s in suffixes:
                cand = Path(str(p) + s)
                if cand.is_file():
                    found.setdefault(split, cand)
                    break
    return found


def load_dataset(path: str | Path, task: str, dev_fraction: float = 0.1, seed: int = 0,
                 sort_tags: bool = False) -> Dataset:
    """Read a dataset directory (or prefix) holding train, optional dev, and test files.

    Without a dev file, a seeded ``dev_fraction`` of the training pairs is held out.
    Inflection tags keep file order unless ``sort_tags`` is set.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    files = find_split_files(path)
    for need in ("train", "test"):
        if need not in files:
            raise FileNotFoundError(f"no {need} file found for {path}")
    train = read_pairs(files["train"], task, sort_tags)
    test = read_pairs(files["test"], task, sort_tags)
    if "dev" in files:
        dev = read_pairs(files["dev"], task, sort_tags)
    else:
        order = list(range(len(train)))
        random.Random(seed).shuffle(order)
        n_dev = max(1, int(round(dev_fraction * len(train)))) if len(train) > 1 else 0
        held = set(order[:n_dev])
        dev = [p for i, p in enumerate(train) if i in held]
        train = [p for i, p in enumerate(train) if i not in held]
    tags: set[str] = set()
    ds = Dataset(task, Path(path).name, train, dev, test)
    if task == "inflection":
        for p in train + dev:
            tags.update(ds.split_tags(p.input)[0])
    ds.tags = tuple(sorted(tags))
    return ds


def write_pairs(pairs: Sequence[StringPair], path: str | Path, task: str) -> None:
    """Inverse of :func:`read_pairs` for g2p/normalization files."""
    sep = " " if task == "g2p" else ""
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write("".join(p.input) + "\t" + sep.join(p.output) + "\n")
