"""Algebraic identification of confusion matrices from co-occurrence blocks.

Per annotator, all available pair PMFs are stacked side by side and column
normalized; greedy successive projection then picks the K extreme columns,
which equal that annotator's confusion columns whenever some partners answer
a class perfectly (anchor condition). A breadth-first alignment pass removes
the per-annotator column permutation ambiguity, after which the class prior
is extracted pairwise by linear solves.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cooccurrence import CooccurrenceSet, count_pairs
from .data import LabelDataset, ModelEstimate, validate_dataset
from .errors import DataError

COND_LIMIT = 1e8
DEGENERATE_TOL = 1e-12


@dataclass
class MultiSpaConfig:
    """Tuning knobs for the algebraic pipeline.

    eta: minimum l1 mass for a stacked column to survive normalization.
    reference: annotator whose column order every other annotator is aligned
        to; defaults to the annotator with the most co-labeled items.
    s_min: minimum co-label count for a pair to enter prior estimation.
    permutation: "assignment" aligns through the pair graph by optimal
        assignment; "diagonal" independently reorders each estimate to be
        diagonally dominant.
    """

    eta: float = 1e-6
    reference: int | None = None
    s_min: int = 1
    permutation: str = "assignment"


@dataclass(frozen=True)
class StackedBlock:
    """Horizontally stacked co-occurrence blocks for one annotator.

    ``column_origin[j]`` records, for column j of ``matrix``, the partner
    annotator and the 1-based column index within that partner's block.
    ``kept_mask`` marks which columns of the unfiltered stack survived the
    mass filter (all True before normalization).
    """

    annotator: int
    matrix: np.ndarray
    column_origin: list[tuple[int, int]]
    kept_mask: np.ndarray


def build_stacked(m: int, cooc: CooccurrenceSet) -> StackedBlock:
    """Concatenate the pair PMFs of annotator m over partners in ascending order."""
    partners = cooc.partners(m)
    if not partners:
        raise DataError(f"multispa: annotator {m} is isolated (no co-labeled items)")
    blocks = [cooc.get(m, l) for l in partners]
    origin = [(l, j + 1) for l in partners for j in range(cooc.n_classes)]
    matrix = np.hstack(blocks)
    return StackedBlock(m, matrix, origin, np.ones(matrix.shape[1], dtype=bool))


def normalize_columns(block: StackedBlock, eta: float = 1e-6) -> StackedBlock:
    """Scale every column to unit l1 norm, dropping columns with mass < eta."""
    if not 0.0 < eta <= 1.0:
        raise DataError(f"multispa: eta must lie in (0, 1], got {eta}")
    norms = block.matrix.sum(axis=0)
    keep = norms >= eta
    k = block.matrix.shape[0]
    if int(keep.sum()) < k:
        raise DataError(
            f"multispa: annotator {block.annotator}: insufficient mass, only "
            f"{int(keep.sum())} of {keep.size} columns reach eta={eta}"
        )
    matrix = block.matrix[:, keep] / norms[keep]
    origin = [o for o, kept in zip(block.column_origin, keep) if kept]
    return StackedBlock(block.annotator, matrix, origin, keep)


def spa(normalized: StackedBlock, n_classes: int) -> tuple[np.ndarray, list[int]]:
    """Greedy successive projection: pick the K most extreme columns.

    At each step the column with the largest squared residual after
    projecting out the span of previous picks is selected; ties break to the
    lowest column index. The picked columns form the confusion estimate.
    """
    z = normalized.matrix
    if z.shape[1] < n_classes:
        raise DataError(
            f"multispa: annotator {normalized.annotator}: "
            f"{z.shape[1]} columns available, need {n_classes}"
        )
    picked: list[int] = []
    basis = np.zeros((z.shape[0], 0))
    norms_sq = (z * z).sum(axis=0)
    for _ in range(n_classes):
        proj = basis.T @ z
        residual = norms_sq - (proj * proj).sum(axis=0)
        residual[picked] = -np.inf
        q = int(np.argmax(residual))
        if residual[q] < DEGENERATE_TOL:
            raise DataError(
                f"multispa: annotator {normalized.annotator}: degenerate block "
                f"(all residuals below {DEGENERATE_TOL} after {len(picked)} picks)"
            )
        picked.append(q)
        vec = z[:, q] - basis @ (basis.T @ z[:, q])
        basis = np.column_stack([basis, vec / np.linalg.norm(vec)])
    return z[:, picked].copy(), picked


def _normalized_pair_estimate(a_ref: np.ndarray, pair_pmf: np.ndarray) -> np.ndarray:
    """Estimate of the partner's confusion (in the reference column order).

    Solving ``a_ref @ X = pair_pmf`` gives X = D A_l^T up to the reference
    ordering, so the transpose has the partner's scaled confusion columns;
    clamping negatives and normalizing the columns removes the prior scaling.
    """
    est = np.linalg.solve(a_ref, pair_pmf).T
    est = np.maximum(est, 0.0)
    sums = est.sum(axis=0)
    zero = sums <= 0.0
    if np.any(zero):
        est[:, zero] = 1.0 / est.shape[0]
        sums = est.sum(axis=0)
    return est / sums


def _matching_cost(target: np.ndarray, estimate: np.ndarray) -> np.ndarray:
    """cost[i, j] = squared distance between target column i and estimate column j."""
    k = target.shape[1]
    cost = np.zeros((k, k))
    for i in range(k):
        diff = target[:, i][:, None] - estimate
        cost[i] = (diff * diff).sum(axis=0)
    return cost


def align_permutations(
    estimates: dict[int, np.ndarray],
    cooc: CooccurrenceSet,
    reference: int,
) -> dict[int, np.ndarray]:
    """Propagate the reference annotator's column order through the pair graph.

    Annotators are visited breadth-first from the reference. Each one is
    permuted to best match, by optimal assignment, the targets implied by
    its already-aligned well-conditioned partners; pooling the assignment
    costs over partners keeps the matching stable when a single neighbor is
    noisy or poorly conditioned. Ill-conditioned annotators are aligned but
    never serve as partners, so alignment can route around them.
    """
    if np.linalg.cond(estimates[reference]) >= COND_LIMIT:
        raise DataError(f"multispa: reference annotator {reference} not invertible")
    usable = {m: np.linalg.cond(a) < COND_LIMIT for m, a in estimates.items()}
    order: list[int] = []
    seen = {reference}
    queue = deque([reference])
    while queue:
        r = queue.popleft()
        if not usable[r]:
            continue
        for l in cooc.partners(r):
            if l not in seen:
                seen.add(l)
                order.append(l)
                queue.append(l)
    aligned = {reference: estimates[reference].copy()}
    for l in order:
        cost = np.zeros((cooc.n_classes, cooc.n_classes))
        for r in cooc.partners(l):
            if r not in aligned or not usable[r]:
                continue
            target = _normalized_pair_estimate(aligned[r], cooc.get(r, l))
            cost += _matching_cost(target, estimates[l])
        _, cols = linear_sum_assignment(cost)
        aligned[l] = estimates[l][:, cols]
    missing = sorted(set(estimates) - set(aligned))
    if missing:
        raise DataError(
            f"multispa: annotators {missing} are not connected to reference {reference}"
        )
    return aligned


def diagonal_dominant_order(estimate: np.ndarray) -> np.ndarray:
    """Reorder columns to maximize the diagonal (heuristic alignment)."""
    _, cols = linear_sum_assignment(-estimate)
    return estimate[:, cols]


def estimate_prior(
    confusions: dict[int, np.ndarray],
    cooc: CooccurrenceSet,
    s_min: int = 1,
) -> np.ndarray:
    """Extract the class prior from pairwise statistics and aligned estimates.

    For every well-conditioned pair with enough co-labels, the diagonal of
    ``A_m^-1 R A_l^-T`` estimates the prior; diagonals are clamped at zero
    and averaged weighted by co-label count.
    """
    k = cooc.n_classes
    invertible = {
        m: np.linalg.cond(a) < COND_LIMIT for m, a in confusions.items()
    }
    acc = np.zeros(k)
    weight = 0.0
    for (m, l), pmf in cooc.pairs.items():
        s = cooc.counts[(m, l)]
        if s < s_min or not (invertible.get(m) and invertible.get(l)):
            continue
        x = np.linalg.solve(confusions[m], pmf)
        mid = np.linalg.solve(confusions[l], x.T).T
        acc += s * np.maximum(np.diag(mid), 0.0)
        weight += s
    if weight == 0.0:
        raise DataError(
            f"multispa: no pair qualifies for prior estimation (s_min={s_min})"
        )
    total = acc.sum()
    if total <= 0.0:
        raise DataError("multispa: degenerate prior (all diagonal mass clamped to zero)")
    return acc / total


def _enforce_columns(matrix: np.ndarray) -> np.ndarray:
    """Clamp negatives and rescale every column to sum 1."""
    out = np.maximum(matrix, 0.0)
    sums = out.sum(axis=0)
    zero = sums <= 0.0
    if np.any(zero):
        out[:, zero] = 1.0 / out.shape[0]
        sums = out.sum(axis=0)
    return out / sums


def default_reference(cooc: CooccurrenceSet) -> int:
    """Annotator with the largest total co-label count (ties to lowest index)."""
    totals = np.zeros(cooc.n_annotators)
    for (m, l), s in cooc.counts.items():
        totals[m - 1] += s
        totals[l - 1] += s
    return int(np.argmax(totals)) + 1


def _anchor_class_identity(confusions: np.ndarray, prior: np.ndarray):
    """Relabel classes so the average confusion matrix is diagonally dominant.

    Factorization recovers the classes in an arbitrary shared order; when
    annotators are informative on average, the true order is the one that
    puts the aggregate response mass on the diagonal. With chance-level
    annotator pools the aggregate carries no identity signal, so callers
    evaluating against a known model should resolve the ordering with
    :func:`cooclabel.predict.align_model_classes` instead.
    """
    _, cols = linear_sum_assignment(-confusions.mean(axis=0))
    return confusions[:, :, cols], prior[cols]


def multispa_from_cooccurrences(
    cooc: CooccurrenceSet, config: MultiSpaConfig | None = None
) -> ModelEstimate:
    """Run the algebraic pipeline on precomputed co-occurrence statistics."""
    config = config or MultiSpaConfig()
    k = cooc.n_classes
    estimates: dict[int, np.ndarray] = {}
    for m in range(1, cooc.n_annotators + 1):
        block = normalize_columns(build_stacked(m, cooc), config.eta)
        estimates[m], _ = spa(block, k)
    if config.permutation == "diagonal":
        aligned = {m: diagonal_dominant_order(a) for m, a in estimates.items()}
    elif config.permutation == "assignment":
        reference = config.reference or default_reference(cooc)
        aligned = align_permutations(estimates, cooc, reference)
    else:
        raise DataError(f"multispa: unknown permutation mode {config.permutation!r}")
    aligned = {m: _enforce_columns(a) for m, a in aligned.items()}
    prior = estimate_prior(aligned, cooc, config.s_min)
    confusions = np.stack([aligned[m] for m in range(1, cooc.n_annotators + 1)])
    confusions, prior = _anchor_class_identity(confusions, prior)
    return ModelEstimate(confusions=confusions, prior=prior)


def multispa(dataset: LabelDataset, config: MultiSpaConfig | None = None) -> ModelEstimate:
    """Identify all confusion matrices and the prior from raw responses."""
    validate_dataset(dataset)
    return multispa_from_cooccurrences(count_pairs(dataset), config)
