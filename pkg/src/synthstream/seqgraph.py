"""Generator matrices learned from a corpus.

DS counts immediate-successor transitions: DS[m, n] measures how often item m
directly follows item n, so column n holds the outgoing weight of n. CVS is
the symmetric same-stream co-occurrence count with a zero diagonal. Both come
in two counting modes: per_stream (a stream contributes at most 1 per pair,
the default) and per_occurrence (every event counts).
"""

from __future__ import annotations

import itertools
from collections import Counter
from pathlib import Path
from typing import Iterator

import numpy as np

from .corpus import ClickstreamSet

__all__ = [
    "SparseCountMatrix",
    "DsMatrix",
    "CvsMatrix",
    "build_ds",
    "build_cvs",
    "k_anonymity_filter",
    "save_matrix",
    "load_matrix",
    "COUNT_MODES",
]

COUNT_MODES = ("per_stream", "per_occurrence")


class SparseCountMatrix:
    """N x N nonnegative integer counts with fast per-column access.

    Zero entries are never stored. Columns are indexed as sorted (rows,
    counts) array pairs so a column's nonzero rows can be scanned without
    touching the rest of the matrix; column sums are cached at construction.
    """

    kind = "GENERIC"

    def __init__(self, n: int, entries, mode: str = "per_stream"):
        if n < 1:
            raise ValueError("matrix size must be >= 1")
        if mode not in COUNT_MODES:
            raise ValueError(f"unknown counting mode {mode!r}")
        self.n = int(n)
        self.mode = mode
        data: dict[tuple[int, int], int] = {}
        for (row, col), count in dict(entries).items():
            row, col, count = int(row), int(col), int(count)
            if not (0 <= row < n and 0 <= col < n):
                raise ValueError(f"entry ({row}, {col}) outside [0, {n})")
            if count < 1:
                raise ValueError(f"entry ({row}, {col}) has nonpositive count {count}")
            data[(row, col)] = count
        self._entries = data
        self._build_column_index()
        self._rows_cache: dict[int, dict[int, int]] | None = None

    def _build_column_index(self) -> None:
        by_col: dict[int, list[tuple[int, int]]] = {}
        for (row, col), count in self._entries.items():
            by_col.setdefault(col, []).append((row, count))
        self._col_rows: dict[int, np.ndarray] = {}
        self._col_counts: dict[int, np.ndarray] = {}
        self._col_sums = np.zeros(self.n, dtype=np.int64)
        for col, pairs in by_col.items():
            pairs.sort()
            rows = np.fromiter((r for r, _ in pairs), dtype=np.int64, count=len(pairs))
            counts = np.fromiter((c for _, c in pairs), dtype=np.float64, count=len(pairs))
            self._col_rows[col] = rows
            self._col_counts[col] = counts
            self._col_sums[col] = int(counts.sum())

    # -- access -------------------------------------------------------------

    @property
    def nnz(self) -> int:
        return len(self._entries)

    def get(self, row: int, col: int) -> int:
        return self._entries.get((row, col), 0)

    def entries(self) -> Iterator[tuple[int, int, int]]:
        for (row, col), count in self._entries.items():
            yield row, col, count

    def column(self, col: int) -> tuple[np.ndarray, np.ndarray]:
        """(nonzero rows ascending, their counts as float64) of one column."""
        rows = self._col_rows.get(col)
        if rows is None:
            return _EMPTY_ROWS, _EMPTY_COUNTS
        return rows, self._col_counts[col]

    def counts_at(self, rows: np.ndarray, col: int) -> np.ndarray:
        """Counts at (rows[i], col), zeros where no entry is stored."""
        crows = self._col_rows.get(col)
        if crows is None:
            return np.zeros(len(rows), dtype=np.float64)
        ccounts = self._col_counts[col]
        idx = np.searchsorted(crows, rows)
        np.minimum(idx, len(crows) - 1, out=idx)
        out = ccounts[idx].copy()
        out[crows[idx] != rows] = 0.0
        return out

    def column_sum(self, col: int) -> int:
        return int(self._col_sums[col])

    def row_map(self, row: int) -> dict[int, int]:
        """{col: count} of one row (cached; rows are the Table-1 comparison unit)."""
        if self._rows_cache is None:
            cache: dict[int, dict[int, int]] = {}
            for (r, c), count in self._entries.items():
                cache.setdefault(r, {})[c] = count
            self._rows_cache = cache
        return self._rows_cache.get(row, {})

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n), dtype=np.int64)
        for (row, col), count in self._entries.items():
            dense[row, col] = count
        return dense

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseCountMatrix):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.mode == other.mode
            and self.n == other.n
            and self._entries == other._entries
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, nnz={self.nnz}, mode={self.mode})"


_EMPTY_ROWS = np.empty(0, dtype=np.int64)
_EMPTY_COUNTS = np.empty(0, dtype=np.float64)


class DsMatrix(SparseCountMatrix):
    """Directed successor counts; a diagonal entry means an item repeated back-to-back."""

    kind = "DS"


class CvsMatrix(SparseCountMatrix):
    """Symmetric co-occurrence counts with zero diagonal."""

    kind = "CVS"

    def __init__(self, n, entries, mode="per_stream"):
        super().__init__(n, entries, mode)
        for (row, col), count in self._entries.items():
            if row == col:
                raise ValueError(f"CVS diagonal entry at ({row}, {row}) must be zero")
            if self._entries.get((col, row)) != count:
                raise ValueError(f"CVS asymmetric at ({row}, {col})")


def build_ds(cset: ClickstreamSet, mode: str = "per_stream") -> DsMatrix:
    """Count immediate successions: entry (next, current) for each adjacent pair.

    per_stream counts distinct streams containing the adjacency at least once;
    per_occurrence counts every adjacent pair.
    """
    if not cset.streams:
        raise ValueError("empty corpus")
    if mode not in COUNT_MODES:
        raise ValueError(f"unknown counting mode {mode!r}")
    counts: Counter = Counter()
    for s in cset.streams:
        items = s.items
        pairs = zip(items[1:], items)  # (next, current)
        counts.update(set(pairs) if mode == "per_stream" else pairs)
    return DsMatrix(cset.vocab.size, counts, mode)


def build_cvs(cset: ClickstreamSet, mode: str = "per_stream") -> CvsMatrix:
    """Count same-stream co-occurrence for unordered pairs of distinct items.

    per_stream adds 1 per stream in which both items appear; per_occurrence
    adds (#occurrences of one) * (#occurrences of the other) per stream.
    """
    if not cset.streams:
        raise ValueError("empty corpus")
    if mode not in COUNT_MODES:
        raise ValueError(f"unknown counting mode {mode!r}")
    upper: Counter = Counter()
    if mode == "per_stream":
        for s in cset.streams:
            upper.update(itertools.combinations(sorted(set(s.items)), 2))
    else:
        for s in cset.streams:
            occ = Counter(s.items)
            distinct = sorted(occ)
            for i, a in enumerate(distinct):
                for b in distinct[i + 1 :]:
                    upper[(a, b)] += occ[a] * occ[b]
    entries: dict[tuple[int, int], int] = {}
    for (a, b), count in upper.items():
        entries[(a, b)] = count
        entries[(b, a)] = count
    return CvsMatrix(cset.vocab.size, entries, mode)


def k_anonymity_filter(matrix: SparseCountMatrix, k: int) -> SparseCountMatrix:
    """Drop every entry with count < k; k=1 is the identity."""
    if k < 1:
        raise ValueError("k must be >= 1")
    kept = {(row, col): count for row, col, count in matrix.entries() if count >= k}
    return type(matrix)(matrix.n, kept, matrix.mode)


# --- triplet file I/O ------------------------------------------------------
#
# Format: "# kind=DS|CVS mode=per_stream|per_occurrence n=<N>" metadata
# comment, a "row<TAB>col<TAB>count" header, then one 0-based triplet per
# line. CVS files store only the upper triangle and are mirrored on load.


def save_matrix(matrix: SparseCountMatrix, path) -> None:
    if matrix.kind not in ("DS", "CVS"):
        raise ValueError(f"cannot save matrix of kind {matrix.kind!r}")
    triplets = sorted(
        (row, col, count)
        for row, col, count in matrix.entries()
        if matrix.kind != "CVS" or row < col
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# kind={matrix.kind} mode={matrix.mode} n={matrix.n}\n")
        fh.write("row\tcol\tcount\n")
        for row, col, count in triplets:
            fh.write(f"{row}\t{col}\t{count}\n")


def _parse_metadata(line: str, path: Path) -> tuple[str, str, int]:
    fields = dict(part.split("=", 1) for part in line[1:].split() if "=" in part)
    kind = fields.get("kind")
    mode = fields.get("mode")
    n = fields.get("n")
    if kind not in ("DS", "CVS") or mode not in COUNT_MODES or n is None:
        raise ValueError(f"{path}: bad metadata header {line!r}")
    return kind, mode, int(n)


def load_matrix(path) -> SparseCountMatrix:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing metadata header")
        kind, mode, n = _parse_metadata(first, path)
        entries: dict[tuple[int, int], int] = {}
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line or line.startswith("#") or line == "row\tcol\tcount":
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected row<TAB>col<TAB>count")
            row, col, count = int(parts[0]), int(parts[1]), int(parts[2])
            if not (0 <= row < n and 0 <= col < n):
                raise ValueError(f"{path}:{lineno}: index ({row}, {col}) outside [0, {n})")
            if count <= 0:
                raise ValueError(f"{path}:{lineno}: nonpositive count {count}")
            if (row, col) in entries:
                raise ValueError(f"{path}:{lineno}: duplicate triplet ({row}, {col})")
            entries[(row, col)] = count
    if kind == "DS":
        return DsMatrix(n, entries, mode)
    mirrored: dict[tuple[int, int], int] = {}
    for (row, col), count in entries.items():
        if row == col:
            raise ValueError(f"{path}: CVS diagonal entry at ({row}, {row})")
        for key in ((row, col), (col, row)):
            if mirrored.get(key, count) != count:
                raise ValueError(f"{path}: conflicting counts for CVS pair {key}")
            mirrored[key] = count
    return CvsMatrix(n, mirrored, mode)
