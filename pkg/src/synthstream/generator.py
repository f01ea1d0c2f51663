"""Memory-biased random walk with random jumps.

The walk emits item sequences whose transition weights combine two learned
count matrices: the candidate's successor count given the current item (a DS
column) times its co-occurrence counts with the m items visited just before
the current one (CVS factors). A jump probability epsilon mixes the kernel
with the uniform distribution, which both smooths the transition
probabilities and makes every sequence generable.

Weight of candidate j after history (..., w_m, ..., w_1, c):

    weight(j) = DS[j, c] * CVS[j, w_1] * ... * CVS[j, w_m]

normalized over all candidates; the effective window shrinks to
min(m, |history| - 1) early in a walk. When every candidate has zero weight
the walk falls back to a uniform jump even at epsilon = 0 (counted, so runs
can report it) because the walk must emit exactly the sampled length.
"""

from __future__ import annotations

from dataclasses import dataclass
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .corpus import Clickstream, ClickstreamSet, LengthDistribution, StartDistribution, Vocabulary
from .seqgraph import CvsMatrix, DsMatrix

__all__ = [
    "MemoryDistribution",
    "MbrwConfig",
    "TransitionDistribution",
    "DEAD_END",
    "split64",
    "mbrw_kernel",
    "mix_epsilon",
    "sample_step",
    "generate_clickstream",
    "generate_set",
    "generate_set_with_stats",
    "GenerationStats",
]

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def split64(seed: int, index: int) -> int:
    """Derive an independent 64-bit stream seed from (seed, index).

    SplitMix64 finalizer applied to seed xor index*gamma (gamma is the
    64-bit golden-ratio constant). Fixed for all time: walk i of a run with
    master seed s always uses split64(s, i), so generation order and worker
    count cannot change the output.
    """
    z = (seed ^ ((index * _GAMMA) & _MASK64)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class MemoryDistribution:
    """Per-walk memory size: constant or rounded gaussian, clamped to >= 0."""

    kind: str
    params: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "rounded_gaussian"):
            raise ValueError(f"unknown memory distribution kind {self.kind!r}")

    @classmethod
    def constant(cls, m: int) -> "MemoryDistribution":
        if m < 0:
            raise ValueError("memory size must be >= 0")
        return cls("constant", (float(m),))

    @classmethod
    def rounded_gaussian(cls, mu: float, sigma: float) -> "MemoryDistribution":
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        return cls("rounded_gaussian", (mu, sigma))

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "constant":
            return int(self.params[0])
        return max(0, int(round(rng.normal(self.params[0], self.params[1]))))

    def describe(self) -> str:
        return f"{self.kind}({','.join(format(p, 'g') for p in self.params)})"


@dataclass(frozen=True)
class MbrwConfig:
    """All generation knobs for one run."""

    memory_dist: MemoryDistribution
    length_dist: LengthDistribution
    epsilon: float
    stream_count: int
    start_dist: StartDistribution
    seed: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if self.stream_count < 1:
            raise ValueError("stream_count must be >= 1")


class _DeadEnd:
    """Marker: every candidate has zero kernel weight; caller jumps uniformly."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "DEAD_END"


DEAD_END = _DeadEnd()


@dataclass(frozen=True)
class TransitionDistribution:
    """Dense next-item probabilities; an inspection/testing surface, not the hot path."""

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        total = float(self.probabilities.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, expected 1")
        if np.any(self.probabilities < 0):
            raise ValueError("negative probability")


def _window(history, m: int) -> list[int]:
    # the min(m, |history|-1) items immediately preceding the current one
    depth = min(m, len(history) - 1)
    return [history[-2 - t] for t in range(depth)]


def _kernel_weights(ds: DsMatrix, cvs: CvsMatrix, history, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Sparse candidate rows and unnormalized walk weights for the next hop."""
    current = history[-1]
    rows, counts = ds.column(current)
    if rows.size == 0:
        return rows, counts
    weights = counts.copy()
    for w in _window(history, m):
        weights *= cvs.counts_at(rows, w)
    return rows, weights


def _check_inputs(ds: DsMatrix, cvs: CvsMatrix, history, m: int) -> None:
    if ds.n != cvs.n:
        raise ValueError(f"matrix size mismatch: DS n={ds.n}, CVS n={cvs.n}")
    if len(history) < 1:
        raise ValueError("history must be nonempty")
    if m < 0:
        raise ValueError("memory size must be >= 0")
    for item in history:
        if not 0 <= item < ds.n:
            raise ValueError(f"history item {item} outside [0, {ds.n})")


def mbrw_kernel(ds: DsMatrix, cvs: CvsMatrix, history, m: int):
    """Next-item distribution of the biased walk, or DEAD_END.

    With an empty effective window this is the plain successor distribution
    DS[., current] / column sum; each remembered item multiplies in its
    co-occurrence counts before renormalizing.
    """
    _check_inputs(ds, cvs, history, m)
    rows, weights = _kernel_weights(ds, cvs, history, m)
    total = float(weights.sum())
    if rows.size == 0 or total <= 0.0:
        return DEAD_END
    probs = np.zeros(ds.n, dtype=np.float64)
    probs[rows] = weights / total
    return TransitionDistribution(probs)


def mix_epsilon(kernel_result, epsilon: float, n: int) -> TransitionDistribution:
    """(1 - eps) * kernel + eps * uniform; DEAD_END mixes to pure uniform."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if isinstance(kernel_result, TransitionDistribution):
        probs = (1.0 - epsilon) * kernel_result.probabilities + epsilon / n
    else:
        probs = np.full(n, 1.0 / n, dtype=np.float64)
    return TransitionDistribution(probs)


def sample_step(ds: DsMatrix, cvs: CvsMatrix, history, m: int, epsilon: float, rng: np.random.Generator) -> tuple[int, bool]:
    """Draw the next item; returns (item, dead_end_fallback).

    Flips the epsilon coin first and only evaluates the kernel when the coin
    says walk: distributionally identical to sampling the mixed vector but
    never materializes a dense probability array. The flag is True only when
    the kernel branch was taken and had no positive candidate.
    """
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(ds.n)), False
    rows, weights = _kernel_weights(ds, cvs, history, m)
    if rows.size == 0:
        return int(rng.integers(ds.n)), True
    cum = np.cumsum(weights)
    total = cum[-1]
    if total <= 0.0:
        return int(rng.integers(ds.n)), True
    idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
    return int(rows[min(idx, rows.size - 1)]), False


def _walk(ds: DsMatrix, cvs: CvsMatrix, config: MbrwConfig, walk_seed: int) -> tuple[tuple[int, ...], int, int]:
    """One full walk: (items, dead-end jumps, memory size used)."""
    rng = np.random.Generator(np.random.PCG64(walk_seed))
    m = config.memory_dist.sample(rng)
    length = config.length_dist.sample(rng)
    history = [config.start_dist.sample(rng, ds.n)]
    dead_ends = 0
    for _ in range(length - 1):
        item, fell_back = sample_step(ds, cvs, history, m, config.epsilon, rng)
        dead_ends += fell_back
        history.append(item)
    return tuple(history), dead_ends, m


def generate_clickstream(ds: DsMatrix, cvs: CvsMatrix, config: MbrwConfig, walk_seed: int) -> Clickstream:
    """One synthetic stream, fully deterministic given walk_seed.

    Samples the memory size once for the walk and the target length up front;
    the number of hops is length - 1, so the sampled length is the emitted
    length.
    """
    if ds.n != cvs.n:
        raise ValueError(f"matrix size mismatch: DS n={ds.n}, CVS n={cvs.n}")
    items, _, _ = _walk(ds, cvs, config, walk_seed)
    return Clickstream(items)


@dataclass
class GenerationStats:
    """Run counters surfaced in manifests."""

    dead_end_jumps: int = 0
    zero_memory_walks: int = 0


def _walk_block(args) -> tuple[list[tuple[int, ...]], int, int]:
    ds, cvs, config, lo, hi = args
    streams = []
    dead_ends = 0
    zero_memory = 0
    for i in range(lo, hi):
        items, dead, m = _walk(ds, cvs, config, split64(config.seed, i))
        streams.append(items)
        dead_ends += dead
        zero_memory += m == 0
    return streams, dead_ends, zero_memory


def generate_set_with_stats(
    ds: DsMatrix,
    cvs: CvsMatrix,
    config: MbrwConfig,
    vocab: Vocabulary | None = None,
    workers: int = 1,
) -> tuple[ClickstreamSet, GenerationStats]:
    """K independent walks; walk i is seeded with split64(config.seed, i).

    Output is identical for any worker count: blocks are only a scheduling
    device and results are reassembled in index order.
    """
    if ds.n != cvs.n:
        raise ValueError(f"matrix size mismatch: DS n={ds.n}, CVS n={cvs.n}")
    if vocab is None:
        vocab = Vocabulary.numeric(ds.n)
    if vocab.size != ds.n:
        raise ValueError(f"vocabulary size {vocab.size} != matrix size {ds.n}")
    k = config.stream_count
    workers = max(1, min(workers, k))
    bounds = np.linspace(0, k, workers + 1, dtype=int)
    blocks = [(ds, cvs, config, int(lo), int(hi)) for lo, hi in zip(bounds, bounds[1:]) if lo < hi]
    if workers == 1:
        results = [_walk_block(block) for block in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_walk_block, blocks))
    streams: list[Clickstream] = []
    stats = GenerationStats()
    for block_streams, dead_ends, zero_memory in results:
        streams.extend(Clickstream(items) for items in block_streams)
        stats.dead_end_jumps += dead_ends
        stats.zero_memory_walks += zero_memory
    return ClickstreamSet(tuple(streams), vocab), stats


def generate_set(
    ds: DsMatrix,
    cvs: CvsMatrix,
    config: MbrwConfig,
    vocab: Vocabulary | None = None,
    workers: int = 1,
) -> ClickstreamSet:
    cset, _ = generate_set_with_stats(ds, cvs, config, vocab, workers)
    return cset
