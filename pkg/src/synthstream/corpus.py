"""Clickstream corpus model: vocabulary, streams, splits, and empirical statistics.

A corpus is a set of item-id sequences over a shared vocabulary. All types are
immutable after construction and safe for concurrent reads; every operation is
a pure function of its inputs and an explicit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Vocabulary",
    "Clickstream",
    "ClickstreamSet",
    "LengthDistribution",
    "StartDistribution",
    "FoldPlan",
    "load_clickstreams",
    "save_clickstreams",
    "load_vocabulary",
    "save_vocabulary",
    "horizontal_split",
    "vertical_split",
    "empirical_length_distribution",
    "empirical_start_distribution",
    "make_folds",
    "save_fold_plan",
    "load_fold_plan",
]


@dataclass(frozen=True)
class Vocabulary:
    """Bijection between item label strings and dense integer ids in [0, N)."""

    labels: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("vocabulary must contain at least one label")
        index: dict[str, int] = {}
        for i, label in enumerate(self.labels):
            if not label or any(ch.isspace() for ch in label):
                raise ValueError(f"invalid label {label!r}: must be non-empty and whitespace-free")
            if label in index:
                raise ValueError(f"duplicate label {label!r}")
            index[label] = i
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    def id_of(self, label: str) -> int:
        return self.index[label]

    def label_of(self, item: int) -> str:
        return self.labels[item]

    @classmethod
    def numeric(cls, n: int) -> "Vocabulary":
        """Placeholder vocabulary with labels "0".."n-1"."""
        return cls(tuple(str(i) for i in range(n)))


@dataclass(frozen=True)
class Clickstream:
    """One user's ordered item-id sequence. Repeats are permitted."""

    items: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.items) < 1:
            raise ValueError("clickstream must contain at least one item")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


@dataclass(frozen=True)
class ClickstreamSet:
    """A corpus: clickstreams plus the vocabulary they are indexed against."""

    streams: tuple[Clickstream, ...]
    vocab: Vocabulary

    def __post_init__(self) -> None:
        n = self.vocab.size
        for s in self.streams:
            if s.items and (min(s.items) < 0 or max(s.items) >= n):
                raise ValueError(f"stream contains item id outside [0, {n})")

    def __len__(self) -> int:
        return len(self.streams)

    def __iter__(self):
        return iter(self.streams)

    def lengths(self) -> list[int]:
        return [len(s) for s in self.streams]


@dataclass(frozen=True)
class LengthDistribution:
    """Distribution over stream lengths; every sample is clamped to >= 1.

    Kinds: constant, geometric (support {1,2,...}, mean 1/p), poisson,
    negative_binomial (failures before r successes), rounded_gaussian
    (nearest integer), empirical (histogram of observed lengths).
    """

    kind: str
    params: tuple[float, ...] = ()
    support: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()

    _KINDS = ("constant", "geometric", "poisson", "negative_binomial", "rounded_gaussian", "empirical")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown length distribution kind {self.kind!r}")
        if self.kind == "empirical":
            if not self.support or len(self.support) != len(self.weights):
                raise ValueError("empirical length distribution needs a nonempty histogram")
            total = float(sum(self.weights))
            if total <= 0 or any(w < 0 for w in self.weights):
                raise ValueError("empirical histogram must have nonnegative weights with positive total")
            cum = np.cumsum(np.asarray(self.weights, dtype=np.float64) / total)
            object.__setattr__(self, "_support_arr", np.asarray(self.support, dtype=np.int64))
            object.__setattr__(self, "_cum", cum)

    @classmethod
    def constant(cls, length: int) -> "LengthDistribution":
        if length < 1:
            raise ValueError("constant length must be >= 1")
        return cls("constant", (float(length),))

    @classmethod
    def geometric(cls, p: float) -> "LengthDistribution":
        if not 0 < p <= 1:
            raise ValueError("geometric parameter must be in (0, 1]")
        return cls("geometric", (p,))

    @classmethod
    def poisson(cls, lam: float) -> "LengthDistribution":
        if lam <= 0:
            raise ValueError("poisson rate must be positive")
        return cls("poisson", (lam,))

    @classmethod
    def negative_binomial(cls, r: float, p: float) -> "LengthDistribution":
        if r <= 0 or not 0 < p <= 1:
            raise ValueError("negative binomial needs r > 0 and p in (0, 1]")
        return cls("negative_binomial", (r, p))

    @classmethod
    def rounded_gaussian(cls, mu: float, sigma: float) -> "LengthDistribution":
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        return cls("rounded_gaussian", (mu, sigma))

    @classmethod
    def empirical(cls, histogram: dict[int, float]) -> "LengthDistribution":
        if not histogram:
            raise ValueError("empirical histogram must be nonempty")
        support = tuple(sorted(histogram))
        if support[0] < 1:
            raise ValueError("observed lengths must be >= 1")
        return cls("empirical", (), support, tuple(float(histogram[k]) for k in support))

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "constant":
            value = int(self.params[0])
        elif self.kind == "geometric":
            value = int(rng.geometric(self.params[0]))
        elif self.kind == "poisson":
            value = int(rng.poisson(self.params[0]))
        elif self.kind == "negative_binomial":
            value = int(rng.negative_binomial(self.params[0], self.params[1]))
        elif self.kind == "rounded_gaussian":
            value = int(round(rng.normal(self.params[0], self.params[1])))
        else:  # empirical
            idx = int(np.searchsorted(self._cum, rng.random(), side="right"))
            value = int(self._support_arr[min(idx, len(self._support_arr) - 1)])
        return max(1, value)

    def describe(self) -> str:
        if self.kind == "empirical":
            return f"empirical[{len(self.support)}]"
        return f"{self.kind}({','.join(format(p, 'g') for p in self.params)})"


@dataclass(frozen=True)
class StartDistribution:
    """Rule for drawing a walk's first item: per-item weights or uniform."""

    weights: tuple[float, ...] | None  # None marks the uniform rule

    def __post_init__(self) -> None:
        if self.weights is not None:
            if any(w < 0 for w in self.weights):
                raise ValueError("start weights must be nonnegative")
            total = float(sum(self.weights))
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"start weights must sum to 1 (got {total})")
            object.__setattr__(self, "_cum", np.cumsum(np.asarray(self.weights, dtype=np.float64)))

    @classmethod
    def uniform(cls) -> "StartDistribution":
        return cls(None)

    @classmethod
    def from_weights(cls, weights) -> "StartDistribution":
        return cls(tuple(float(w) for w in weights))

    @classmethod
    def fixed(cls, item: int, n: int) -> "StartDistribution":
        """Deterministic rule: every walk starts at `item`."""
        if not 0 <= item < n:
            raise ValueError(f"fixed start item {item} outside [0, {n})")
        return cls(tuple(1.0 if i == item else 0.0 for i in range(n)))

    def sample(self, rng: np.random.Generator, n: int) -> int:
        if self.weights is None:
            return int(rng.integers(n))
        if len(self.weights) != n:
            raise ValueError(f"start distribution over {len(self.weights)} items, corpus has {n}")
        idx = int(np.searchsorted(self._cum, rng.random() * self._cum[-1], side="right"))
        return min(idx, n - 1)

    def describe(self) -> str:
        return "uniform" if self.weights is None else f"weighted[{len(self.weights)}]"


@dataclass(frozen=True)
class FoldPlan:
    """Balanced random partition of stream indices into folds."""

    fold_count: int
    assignment: tuple[int, ...]  # stream index -> fold id
    seed: int

    def __post_init__(self) -> None:
        if self.fold_count < 2:
            raise ValueError("fold_count must be >= 2")
        sizes = [0] * self.fold_count
        for f in self.assignment:
            if not 0 <= f < self.fold_count:
                raise ValueError(f"fold id {f} outside [0, {self.fold_count})")
            sizes[f] += 1
        if sizes and max(sizes) - min(sizes) > 1:
            raise ValueError("fold sizes differ by more than 1")

    def fold_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]

    def split(self, cset: ClickstreamSet, fold: int) -> tuple[ClickstreamSet, ClickstreamSet]:
        """(train, test) for one fold; test = in-fold streams, original order kept."""
        train = tuple(s for i, s in enumerate(cset.streams) if self.assignment[i] != fold)
        test = tuple(s for i, s in enumerate(cset.streams) if self.assignment[i] == fold)
        return ClickstreamSet(train, cset.vocab), ClickstreamSet(test, cset.vocab)


# --- file I/O -------------------------------------------------------------
#
# Clickstream file: UTF-8 text, one stream per line, labels separated by
# single ASCII spaces. Lines beginning with '#' and blank lines are ignored.
# Vocabulary file: one label per line, line number (0-based) = item id.


def load_clickstreams(path, vocab: Vocabulary | None = None) -> ClickstreamSet:
    """Parse a clickstream file.

    Without `vocab`, the vocabulary is built from first-occurrence order of
    labels. With `vocab`, unseen labels are an error (prevents train/test
    vocabulary drift).
    """
    path = Path(path)
    labels: list[str] = []
    index: dict[str, int] = {} if vocab is None else dict(vocab.index)
    streams: list[Clickstream] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                continue
            tokens = line.split(" ")
            items: list[int] = []
            for tok in tokens:
                if not tok or any(ch.isspace() for ch in tok):
                    raise ValueError(f"{path}:{lineno}: malformed line (empty or whitespace-bearing label)")
                item = index.get(tok)
                if item is None:
                    if vocab is not None:
                        raise ValueError(f"{path}:{lineno}: label {tok!r} not in fixed vocabulary")
                    item = len(labels)
                    labels.append(tok)
                    index[tok] = item
                items.append(item)
            streams.append(Clickstream(tuple(items)))
    if not streams:
        raise ValueError(f"{path}: no clickstreams found")
    return ClickstreamSet(tuple(streams), vocab if vocab is not None else Vocabulary(tuple(labels)))


def save_clickstreams(cset: ClickstreamSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in cset.streams:
            fh.write(" ".join(cset.vocab.label_of(i) for i in s.items))
            fh.write("\n")


def load_vocabulary(path) -> Vocabulary:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        labels = [line.rstrip("\n") for line in fh]
    while labels and labels[-1] == "":
        labels.pop()
    if not labels:
        raise ValueError(f"{path}: empty vocabulary file")
    return Vocabulary(tuple(labels))


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label in vocab.labels:
            fh.write(label + "\n")


def save_fold_plan(plan: FoldPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("stream_index\tfold_id\n")
        for i, f in enumerate(plan.assignment):
            fh.write(f"{i}\t{f}\n")


def load_fold_plan(path, fold_count: int, seed: int = 0) -> FoldPlan:
    path = Path(path)
    rows: dict[int, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line == "stream_index\tfold_id" or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected stream_index<TAB>fold_id")
            rows[int(parts[0])] = int(parts[1])
    if sorted(rows) != list(range(len(rows))):
        raise ValueError(f"{path}: stream indices must cover 0..{len(rows) - 1}")
    return FoldPlan(fold_count, tuple(rows[i] for i in range(len(rows))), seed)


# --- splits and empirical statistics --------------------------------------


def horizontal_split(cset: ClickstreamSet, test_fraction: float, seed: int) -> tuple[ClickstreamSet, ClickstreamSet]:
    """Disjoint user-level partition into (train, test).

    |test| = round(test_fraction * |C|), half-up. Output preserves original
    stream order on both sides; deterministic given seed.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    total = len(cset)
    if total == 0:
        raise ValueError("cannot split an empty corpus")
    test_size = int(math.floor(test_fraction * total + 0.5))
    if test_size == 0 or test_size == total:
        raise ValueError(f"test_fraction {test_fraction} yields an empty train or test set for {total} streams")
    perm = np.random.default_rng(seed).permutation(total)
    test_idx = set(int(i) for i in perm[:test_size])
    train = tuple(s for i, s in enumerate(cset.streams) if i not in test_idx)
    test = tuple(s for i, s in enumerate(cset.streams) if i in test_idx)
    return ClickstreamSet(train, cset.vocab), ClickstreamSet(test, cset.vocab)


def vertical_split(cset: ClickstreamSet, prefix_fraction: float) -> tuple[ClickstreamSet, ClickstreamSet]:
    """Per-stream split into (query, holdout).

    Stream of length n contributes its first max(1, floor(prefix_fraction*n))
    items to the query set and the remainder to the holdout set; both pieces
    are nonempty for every stream.
    """
    if not 0 < prefix_fraction < 1:
        raise ValueError("prefix_fraction must be in (0, 1)")
    query: list[Clickstream] = []
    holdout: list[Clickstream] = []
    for s in cset.streams:
        n = len(s)
        if n < 2:
            raise ValueError("vertical_split requires every stream length >= 2")
        cut = max(1, math.floor(prefix_fraction * n))
        query.append(Clickstream(s.items[:cut]))
        holdout.append(Clickstream(s.items[cut:]))
    return ClickstreamSet(tuple(query), cset.vocab), ClickstreamSet(tuple(holdout), cset.vocab)


def empirical_length_distribution(cset: ClickstreamSet) -> LengthDistribution:
    if not cset.streams:
        raise ValueError("empty corpus")
    histogram: dict[int, float] = {}
    for s in cset.streams:
        histogram[len(s)] = histogram.get(len(s), 0.0) + 1.0
    return LengthDistribution.empirical(histogram)


def empirical_start_distribution(cset: ClickstreamSet) -> StartDistribution:
    if not cset.streams:
        raise ValueError("empty corpus")
    counts = np.zeros(cset.vocab.size, dtype=np.float64)
    for s in cset.streams:
        counts[s.items[0]] += 1.0
    return StartDistribution.from_weights(counts / len(cset.streams))


def make_folds(cset: ClickstreamSet, fold_count: int, seed: int) -> FoldPlan:
    """Balanced random fold assignment, deterministic given seed."""
    total = len(cset)
    if fold_count < 2 or fold_count > total:
        raise ValueError(f"fold_count must be in [2, {total}]")
    perm = np.random.default_rng(seed).permutation(total)
    assignment = [0] * total
    for pos, idx in enumerate(perm):
        assignment[int(idx)] = pos % fold_count
    return FoldPlan(fold_count, tuple(assignment), seed)
