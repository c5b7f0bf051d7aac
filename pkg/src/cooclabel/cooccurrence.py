"""Pairwise co-occurrence statistics of annotator responses.

For each unordered annotator pair, the empirical joint PMF of their responses
over co-labeled items is the second-order statistic everything downstream is
built from; under the generative model its population value is
``A_m @ diag(d) @ A_l.T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabelDataset, ModelEstimate
from .errors import DataError


@dataclass(frozen=True)
class CooccurrenceSet:
    """Empirical joint PMFs per annotator pair, stored once per unordered pair.

    Keys of ``pairs`` and ``counts`` are (m, l) with m < l (1-based); the
    transposed orientation is materialized on demand by :meth:`get`.
    """

    n_annotators: int
    n_classes: int
    pairs: dict[tuple[int, int], np.ndarray]
    counts: dict[tuple[int, int], int]

    def has(self, m: int, l: int) -> bool:
        return (min(m, l), max(m, l)) in self.pairs

    def get(self, m: int, l: int) -> np.ndarray:
        """Joint PMF with annotator m's responses on rows, l's on columns."""
        if m == l:
            raise DataError("cooccurrence: a pair requires two distinct annotators")
        key = (min(m, l), max(m, l))
        if key not in self.pairs:
            raise DataError(f"cooccurrence: annotators {m} and {l} share no co-labeled items")
        mat = self.pairs[key]
        return mat if m < l else mat.T

    def count(self, m: int, l: int) -> int:
        key = (min(m, l), max(m, l))
        return self.counts.get(key, 0)

    def partners(self, m: int) -> list[int]:
        """Annotators that co-labeled at least one item with m, ascending."""
        out = [b for (a, b) in self.pairs if a == m]
        out += [a for (a, b) in self.pairs if b == m]
        return sorted(out)


def count_pairs(dataset: LabelDataset) -> CooccurrenceSet:
    """Empirical co-occurrence PMFs for every pair with co-labeled items.

    For a pair observed on S common items, entry (j, j') is the fraction of
    those items where the first annotator answered j+1 and the second j'+1.
    Counting is exact integer accumulation, so the result does not depend on
    traversal order. Pairs with no common items are omitted.
    """
    k = dataset.n_classes
    mat = dataset.response_matrix()
    pairs: dict[tuple[int, int], np.ndarray] = {}
    counts: dict[tuple[int, int], int] = {}
    for m in range(dataset.n_annotators):
        col_m = mat[:, m]
        for l in range(m + 1, dataset.n_annotators):
            col_l = mat[:, l]
            both = (col_m > 0) & (col_l > 0)
            s = int(np.count_nonzero(both))
            if s == 0:
                continue
            flat = (col_m[both] - 1) * k + (col_l[both] - 1)
            joint = np.bincount(flat, minlength=k * k).reshape(k, k)
            pairs[(m + 1, l + 1)] = joint / s
            counts[(m + 1, l + 1)] = s
    return CooccurrenceSet(dataset.n_annotators, k, pairs, counts)


def population_cooccurrence(model: ModelEstimate, m: int, l: int) -> np.ndarray:
    """Exact joint PMF of annotators m and l under the model."""
    if m == l:
        raise DataError("cooccurrence: population pair requires two distinct annotators")
    a_m = model.confusions[m - 1]
    a_l = model.confusions[l - 1]
    return (a_m * model.prior) @ a_l.T


def population_cooccurrences(model: ModelEstimate, count: int = 1) -> CooccurrenceSet:
    """CooccurrenceSet holding the exact population PMF for every pair.

    ``count`` is recorded as the co-label count of each pair, for code paths
    that weight or threshold by sample size.
    """
    m_total = model.n_annotators
    pairs = {}
    counts = {}
    for m in range(1, m_total + 1):
        for l in range(m + 1, m_total + 1):
            pairs[(m, l)] = population_cooccurrence(model, m, l)
            counts[(m, l)] = count
    return CooccurrenceSet(m_total, model.n_classes, pairs, counts)
