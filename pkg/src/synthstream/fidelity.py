"""Statistical fidelity of a synthetic matrix against the real one.

Each row pair is compared by Spearman rank correlation restricted to the z
columns with the largest counts in the REAL row, so the metric measures how
well the real ranking of top items is preserved. Rows whose restricted
vectors are constant (or shorter than 2) are skipped rather than coerced, and
the report averages only over scored rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .seqgraph import SparseCountMatrix

__all__ = ["FidelityReport", "spearman", "row_top_z_correlation", "matrix_fidelity", "save_report", "load_report"]


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Pearson correlation of average-tied ranks; None when either input is constant."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValueError("need at least 2 points")
    rx = rankdata(xs, method="average")
    ry = rankdata(ys, method="average")
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        return None
    r = float(np.corrcoef(rx, ry)[0, 1])
    return min(1.0, max(-1.0, r))


def row_top_z_correlation(real_row: Mapping[int, int], syn_row: Mapping[int, int], z: int) -> float | None:
    """Correlation over the z heaviest real columns (ties broken by ascending id).

    Rows with fewer than z nonzeros use all their nonzero columns; absent
    synthetic entries read as 0. Returns None (skipped) when fewer than 2
    columns are selectable or the restriction is constant.
    """
    if z < 2:
        raise ValueError("z must be >= 2")
    top = sorted(real_row.items(), key=lambda kv: (-kv[1], kv[0]))[:z]
    if len(top) < 2:
        return None
    xs = [count for _, count in top]
    ys = [syn_row.get(col, 0) for col, _ in top]
    return spearman(xs, ys)


@dataclass(frozen=True)
class FidelityReport:
    """Per-row coefficients plus their mean and population std over scored rows."""

    z: int
    per_row: tuple[tuple[int, float | None], ...]
    avg: float
    std: float
    skipped_count: int

    def scored(self) -> list[float]:
        return [r for _, r in self.per_row if r is not None]


def _aggregate(z: int, per_row: list[tuple[int, float | None]]) -> FidelityReport:
    scored = [r for _, r in per_row if r is not None]
    skipped = len(per_row) - len(scored)
    if scored:
        avg = float(np.mean(scored))
        std = float(np.std(scored))  # population std
    else:
        avg = math.nan
        std = math.nan
    return FidelityReport(z, tuple(per_row), avg, std, skipped)


def matrix_fidelity(real: SparseCountMatrix, syn: SparseCountMatrix, z: int = 100) -> FidelityReport:
    """Row-wise top-z rank correlation between two matrices of equal size."""
    if real.n != syn.n:
        raise ValueError(f"matrix size mismatch: {real.n} vs {syn.n}")
    per_row = [
        (row, row_top_z_correlation(real.row_map(row), syn.row_map(row), z))
        for row in range(real.n)
    ]
    return _aggregate(z, per_row)


def save_report(report: FidelityReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row\tr\n")
        for row, r in report.per_row:
            fh.write(f"{row}\t{'NA' if r is None else format(r, '.6g')}\n")
        fh.write(
            f"# z={report.z}, avg={report.avg:.6g}, std={report.std:.6g}, skipped={report.skipped_count}\n"
        )


def load_report(path) -> FidelityReport:
    path = Path(path)
    per_row: list[tuple[int, float | None]] = []
    z = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line == "row\tr":
                continue
            if line.startswith("#"):
                for part in line[1:].split(","):
                    key, _, value = part.strip().partition("=")
                    if key == "z":
                        z = int(value)
                continue
            row_str, value = line.split("\t")
            per_row.append((int(row_str), None if value == "NA" else float(value)))
    if z is None:
        raise ValueError(f"{path}: missing trailing metadata block")
    return _aggregate(z, per_row)
