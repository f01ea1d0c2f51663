"""Downstream utility evaluation: can a recommender trained on synthetic
streams serve real users?

The harness runs fold-wise cross-validation: train item-KNN models on the
real training streams, on a synthetic set generated from them, and on a
random-jump baseline, then query all three with real users' stream prefixes
and score the recommendations against the held-out suffixes with MAP, NDCG
and precision@10.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import (
    ClickstreamSet,
    empirical_length_distribution,
    empirical_start_distribution,
    make_folds,
    vertical_split,
)
from .generator import MbrwConfig, generate_set, split64
from .seqgraph import build_cvs, build_ds

__all__ = [
    "UserItemMatrix",
    "ItemKnnModel",
    "UtilityReport",
    "build_user_item",
    "train_item_knn",
    "recommend",
    "average_precision",
    "ndcg",
    "precision_at",
    "run_utility_experiment",
    "save_report",
    "load_report",
    "MODELS",
    "METRICS",
]

MODELS = ("real", "syn", "rnd")
METRICS = ("map", "ndcg", "p10")


@dataclass(frozen=True)
class UserItemMatrix:
    """Implicit-feedback interactions: one user per stream, binary item membership."""

    users: int
    items: int
    interactions: tuple[frozenset[int], ...]

    def __post_init__(self) -> None:
        if len(self.interactions) != self.users:
            raise ValueError("interaction row count must equal user count")
        for row in self.interactions:
            if not row:
                raise ValueError("empty user row")


@dataclass(frozen=True)
class ItemKnnModel:
    """Per-item neighbor lists: up to k (item, similarity) pairs, similarity descending."""

    k: int
    neighbors: dict[int, tuple[tuple[int, float], ...]]


def build_user_item(cset: ClickstreamSet) -> UserItemMatrix:
    rows = tuple(frozenset(s.items) for s in cset.streams)
    return UserItemMatrix(len(rows), cset.vocab.size, rows)


def train_item_knn(train: ClickstreamSet, k: int) -> ItemKnnModel:
    """Cosine similarity over user sets: sim(i,j) = |U_i & U_j| / sqrt(|U_i| |U_j|).

    Items that never co-occur get no edge; ties in the top-k cut break by
    ascending item id.
    """
    if not train.streams:
        raise ValueError("empty training corpus")
    if k < 1:
        raise ValueError("k must be >= 1")
    item_users: Counter = Counter()
    co: Counter = Counter()
    for s in train.streams:
        distinct = sorted(set(s.items))
        item_users.update(distinct)
        for i, a in enumerate(distinct):
            for b in distinct[i + 1 :]:
                co[(a, b)] += 1
    candidates: dict[int, list[tuple[float, int]]] = defaultdict(list)
    for (a, b), n_ab in co.items():
        sim = n_ab / math.sqrt(item_users[a] * item_users[b])
        candidates[a].append((sim, b))
        candidates[b].append((sim, a))
    neighbors: dict[int, tuple[tuple[int, float], ...]] = {}
    for item, cands in candidates.items():
        cands.sort(key=lambda sv: (-sv[0], sv[1]))
        neighbors[item] = tuple((j, sim) for sim, j in cands[:k])
    return ItemKnnModel(k, neighbors)


def recommend(model: ItemKnnModel, query: Iterable[int], top_n: int) -> list[int]:
    """Top-n items by summed similarity to the query items.

    Query items are never recommended; unknown query items contribute
    nothing; fewer than top_n items come back when fewer score positive.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    query_set = set(query)
    scores: dict[int, float] = defaultdict(float)
    for item in query_set:
        for j, sim in model.neighbors.get(item, ()):
            if j not in query_set:
                scores[j] += sim
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [j for j, score in ranked[:top_n] if score > 0.0]


def average_precision(recommended: Sequence[int], relevant: set[int]) -> float:
    """Sum of precision@p over hit positions p, normalized by |relevant|."""
    if not relevant:
        raise ValueError("relevant set must be nonempty")
    hits = 0
    total = 0.0
    for pos, item in enumerate(recommended, 1):
        if item in relevant:
            hits += 1
            total += hits / pos
    return total / len(relevant)


def ndcg(recommended: Sequence[int], relevant: set[int], cutoff: int = 10) -> float:
    """Binary-gain NDCG at a cutoff; the ideal ranking front-loads all hits."""
    if not relevant:
        raise ValueError("relevant set must be nonempty")
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    dcg = sum(
        1.0 / math.log2(pos + 1)
        for pos, item in enumerate(recommended[:cutoff], 1)
        if item in relevant
    )
    ideal = sum(1.0 / math.log2(pos + 1) for pos in range(1, min(len(relevant), cutoff) + 1))
    return dcg / ideal


def precision_at(recommended: Sequence[int], relevant: set[int], n: int = 10) -> float:
    """Relevant fraction of the first n slots; denominator stays n when fewer return."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return len(set(recommended[:n]) & relevant) / n


def _evaluate_model(
    model: ItemKnnModel,
    query: ClickstreamSet,
    holdout: ClickstreamSet,
    rec_depth: int,
    ndcg_cutoff: int,
    precision_n: int,
) -> tuple[float, float, float]:
    aps, ndcgs, precs = [], [], []
    for q, h in zip(query.streams, holdout.streams):
        relevant = set(h.items)
        recs = recommend(model, q.items, rec_depth)
        aps.append(average_precision(recs, relevant))
        ndcgs.append(ndcg(recs, relevant, ndcg_cutoff))
        precs.append(precision_at(recs, relevant, precision_n))
    return float(np.mean(aps)), float(np.mean(ndcgs)), float(np.mean(precs))


@dataclass(frozen=True)
class UtilityReport:
    """Per-fold, per-model metric values plus fold-exclusion bookkeeping."""

    fold_count: int
    rows: tuple[tuple[int, str, float, float, float], ...]  # (fold, model, map, ndcg, p10)
    excluded_streams: int
    params: tuple[tuple[str, str], ...]

    def values(self, model: str, metric: str) -> list[float]:
        idx = 2 + METRICS.index(metric)
        return [row[idx] for row in self.rows if row[1] == model]

    def mean(self, model: str, metric: str) -> float:
        return float(np.mean(self.values(model, metric)))

    def std(self, model: str, metric: str) -> float:
        return float(np.std(self.values(model, metric)))  # population std

    def wins(self, model_a: str, model_b: str, metric: str) -> int:
        """Folds in which model_a strictly beats model_b."""
        a = self.values(model_a, metric)
        b = self.values(model_b, metric)
        return sum(x > y for x, y in zip(a, b))

    def summary_lines(self) -> list[str]:
        lines = []
        for model in MODELS:
            parts = " ".join(
                f"mean_{metric}={self.mean(model, metric):.6g} std_{metric}={self.std(model, metric):.6g}"
                for metric in METRICS
            )
            lines.append(f"model={model} {parts}")
        return lines


def _fold_task(args) -> tuple[int, dict[str, tuple[float, float, float]], int]:
    (corpus, plan, fold, mbrw, knn_k, prefix_fraction, mode, ndcg_cutoff, precision_n, rec_depth) = args
    train, test = plan.split(corpus, fold)
    eligible = tuple(s for s in test.streams if len(s) >= 2)
    excluded = len(test.streams) - len(eligible)
    if not eligible:
        raise ValueError(f"fold {fold}: no test streams of length >= 2")
    test = ClickstreamSet(eligible, test.vocab)

    ds = build_ds(train, mode)
    cvs = build_cvs(train, mode)
    fold_seed = split64(mbrw.seed, fold + 1)
    base = replace(
        mbrw,
        stream_count=len(train),
        length_dist=empirical_length_distribution(train),
        start_dist=empirical_start_distribution(train),
    )
    syn = generate_set(ds, cvs, replace(base, seed=split64(fold_seed, 1)), train.vocab)
    rnd = generate_set(ds, cvs, replace(base, epsilon=1.0, seed=split64(fold_seed, 2)), train.vocab)

    query, holdout = vertical_split(test, prefix_fraction)
    results = {}
    for name, training_set in (("real", train), ("syn", syn), ("rnd", rnd)):
        model = train_item_knn(training_set, knn_k)
        results[name] = _evaluate_model(model, query, holdout, rec_depth, ndcg_cutoff, precision_n)
    return fold, results, excluded


def run_utility_experiment(
    corpus: ClickstreamSet,
    folds: int,
    mbrw: MbrwConfig,
    knn_k: int = 15,
    prefix_fraction: float = 0.5,
    mode: str = "per_stream",
    ndcg_cutoff: int = 10,
    precision_n: int = 10,
    rec_depth: int = 100,
    workers: int = 1,
) -> UtilityReport:
    """Fold-wise Real/Syn/Rnd comparison.

    Per fold: matrices come from the out-of-fold streams only; the synthetic
    set uses K = |train| with the training set's empirical length and start
    distributions; the random baseline is the same run at epsilon = 1. All
    randomness derives from mbrw.seed and the fold index, so reports are
    reproducible for any worker count.
    """
    plan = make_folds(corpus, folds, split64(mbrw.seed, 0))
    tasks = [
        (corpus, plan, fold, mbrw, knn_k, prefix_fraction, mode, ndcg_cutoff, precision_n, rec_depth)
        for fold in range(folds)
    ]
    if workers <= 1:
        outcomes = [_fold_task(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, folds)) as pool:
            outcomes = list(pool.map(_fold_task, tasks))
    outcomes.sort(key=lambda o: o[0])
    rows: list[tuple[int, str, float, float, float]] = []
    excluded = 0
    for fold, results, fold_excluded in outcomes:
        excluded += fold_excluded
        for model in MODELS:
            m, n, p = results[model]
            rows.append((fold, model, m, n, p))
    params = (
        ("folds", str(folds)),
        ("knn_k", str(knn_k)),
        ("prefix_fraction", format(prefix_fraction, "g")),
        ("counting_mode", mode),
        ("ndcg_cutoff", str(ndcg_cutoff)),
        ("precision_n", str(precision_n)),
        ("rec_depth", str(rec_depth)),
        ("map_normalizer", "relevant_count"),
        ("seed", str(mbrw.seed)),
        ("epsilon", format(mbrw.epsilon, "g")),
        ("memory_dist", mbrw.memory_dist.describe()),
    )
    return UtilityReport(folds, tuple(rows), excluded, params)


def save_report(report: UtilityReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fold\tmodel\tmap\tndcg\tp10\n")
        for fold, model, m, n, p in report.rows:
            fh.write(f"{fold}\t{model}\t{m:.6g}\t{n:.6g}\t{p:.6g}\n")
        for line in report.summary_lines():
            fh.write(f"# {line}\n")
        fh.write(f"# excluded_streams={report.excluded_streams}\n")
        fh.write(f"# params: {' '.join(f'{k}={v}' for k, v in report.params)}\n")


def load_report(path) -> UtilityReport:
    path = Path(path)
    rows: list[tuple[int, str, float, float, float]] = []
    excluded = 0
    params: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line == "fold\tmodel\tmap\tndcg\tp10":
                continue
            if line.startswith("# excluded_streams="):
                excluded = int(line.split("=", 1)[1])
                continue
            if line.startswith("# params: "):
                params = [tuple(kv.split("=", 1)) for kv in line[len("# params: ") :].split()]
                continue
            if line.startswith("#"):
                continue
            fold, model, m, n, p = line.split("\t")
            rows.append((int(fold), model, float(m), float(n), float(p)))
    fold_count = 1 + max(row[0] for row in rows) if rows else 0
    return UtilityReport(fold_count, tuple(rows), excluded, tuple(params))
