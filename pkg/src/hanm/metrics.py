"""Direction accuracy and clustering agreement scores (ARI, NMI)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    n: int

    @classmethod
    def from_labels(cls, labels_a, labels_b) -> "ContingencyTable":
        a, b = np.asarray(labels_a).reshape(-1), np.asarray(labels_b).reshape(-1)
        if a.size != b.size:
            raise DimensionError(f"label vectors differ in length: {a.size} vs {b.size}")
        _, ia = np.unique(a, return_inverse=True)
        _, ib = np.unique(b, return_inverse=True)
        counts = np.zeros((ia.max(initial=-1) + 1, ib.max(initial=-1) + 1), dtype=np.int64)
        np.add.at(counts, (ia, ib), 1)
        return cls(counts, counts.sum(axis=1), counts.sum(axis=0), int(a.size))


def _verdict_value(v) -> str:
    return getattr(v, "value", v)


def direction_accuracy(decisions: Sequence, ground_truths: Sequence,
                       weights: Sequence[float] | None = None) -> float:
    """Weighted share of verdicts equal to the truth. Undecided counts as wrong."""
    if len(decisions) == 0:
        raise ValueError("direction_accuracy needs at least one decision")
    if len(decisions) != len(ground_truths):
        raise DimensionError("decisions and ground truths differ in length")
    w = np.ones(len(decisions)) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.size != len(decisions):
        raise DimensionError("weights and decisions differ in length")
    correct = np.array([_verdict_value(d) == _verdict_value(t) for d, t in zip(decisions, ground_truths)])
    return float(w[correct].sum() / w.sum())


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def ari(labels_a, labels_b) -> float:
    """Hubert-Arabie adjusted Rand index."""
    table = ContingencyTable.from_labels(labels_a, labels_b)
    if table.n < 2:
        return 1.0
    sum_cells = float(_comb2(table.counts).sum())
    sum_a = float(_comb2(table.row_sums).sum())
    sum_b = float(_comb2(table.col_sums).sum())
    expected = sum_a * sum_b / float(_comb2(table.n))
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (single cluster or all singletons) in the same way
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(labels_a, labels_b, average: str = "arithmetic") -> float:
    """Mutual information normalised by the mean (arithmetic or geometric) entropy."""
    table = ContingencyTable.from_labels(labels_a, labels_b)
    if table.n == 0:
        raise ValueError("nmi needs non-empty labelings")
    h_a, h_b = _entropy(table.row_sums, table.n), _entropy(table.col_sums, table.n)
    if h_a == 0 and h_b == 0:
        return 1.0
    if h_a == 0 or h_b == 0:
        return 0.0
    nz = table.counts > 0
    joint = table.counts[nz] / table.n
    outer = np.outer(table.row_sums, table.col_sums)[nz] / (table.n * table.n)
    mi = float((joint * (np.log(joint) - np.log(outer))).sum())
    if average == "arithmetic":
        norm = 0.5 * (h_a + h_b)
    elif average == "geometric":
        norm = math.sqrt(h_a * h_b)
    else:
        raise ValueError(f"unknown averaging {average!r}")
    return float(min(max(mi / norm, 0.0), 1.0))
