"""Coupled KL-divergence fitting of all co-occurrence blocks.

Refines an algebraic initialization by cyclically minimizing the summed KL
divergence between every observed pair PMF and its model value, one
confusion matrix at a time and then the prior. Each subproblem is convex and
is handled with exponentiated-gradient steps that keep the iterates on the
probability simplex; a backtracking line search guarantees the objective
never increases.

Plain alternation crawls in two situations this module handles explicitly:
a confusion matrix whose initialization carries the wrong column order sits
behind a combinatorial barrier (fixed by a per-annotator column-permutation
polish), and the objective has nearly flat coupled directions at moderate
sample sizes (traversed by a safeguarded log-space extrapolation along the
sweep displacement). Both extra moves only ever accept a strictly lower
objective, so the sweep-to-sweep objective stays non-increasing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .cooccurrence import CooccurrenceSet, count_pairs
from .data import LabelDataset, ModelEstimate, validate_dataset
from .errors import DataError
from .multispa import MultiSpaConfig, multispa_from_cooccurrences


@dataclass
class FitConfig:
    """Outer/inner iteration budget and numeric safeguards for the KL fit.

    delta floors model probabilities inside every logarithm (and the
    initialization), preventing divergent terms from sparse-data zeros.
    step_init and step_shrink drive the backtracking line search of the
    inner exponentiated-gradient solver.
    """

    max_outer_sweeps: int = 100
    inner_iterations: int = 50
    tol: float = 1e-6
    delta: float = 1e-6
    step_init: float = 1.0
    step_shrink: float = 0.5
    max_backtracks: int = 40
    weight_by_count: bool = False

    def check(self, n_classes: int) -> None:
        if self.tol <= 0:
            raise DataError("klfit: tolerance must be positive")
        if not 0.0 < self.delta < 1.0 / n_classes:
            raise DataError(f"klfit: delta must lie in (0, 1/K), got {self.delta}")
        if self.max_outer_sweeps < 1 or self.inner_iterations < 1:
            raise DataError("klfit: iteration counts must be at least 1")


def _pair_weight(cooc: CooccurrenceSet, key: tuple[int, int], weighted: bool) -> float:
    return float(cooc.counts[key]) if weighted else 1.0


def _entropy_base(observed: np.ndarray, weights: np.ndarray) -> float:
    """Sum of w * p * log(p) over positive entries of stacked pair PMFs."""
    safe = np.where(observed > 0, observed, 1.0)
    return float(np.sum(weights[:, None, None] * observed * np.log(safe)))


def _kl_term(observed: np.ndarray, model_pmf: np.ndarray, delta: float) -> float:
    mask = observed > 0
    p = observed[mask]
    q = np.maximum(model_pmf[mask], delta)
    return float(np.sum(p * np.log(p / q)))


def kl_objective(
    model: ModelEstimate,
    cooc: CooccurrenceSet,
    delta: float = 1e-6,
    weight_by_count: bool = False,
) -> float:
    """Summed KL divergence of observed pair PMFs from the model, each pair once.

    Terms with zero observed mass are skipped (0 log 0 = 0); model entries
    are floored at ``delta`` inside the logarithm.
    """
    if not cooc.pairs:
        raise DataError("klfit: no co-occurrence pairs available")
    a = model.confusions
    d = model.prior
    total = 0.0
    for (m, l), observed in cooc.pairs.items():
        q = (a[m - 1] * d) @ a[l - 1].T
        total += _pair_weight(cooc, (m, l), weight_by_count) * _kl_term(observed, q, delta)
    return total


def _floor_columns(matrix: np.ndarray, delta: float) -> np.ndarray:
    out = np.maximum(matrix, delta)
    return out / out.sum(axis=0)


def _floor_vector(vec: np.ndarray, delta: float) -> np.ndarray:
    out = np.maximum(vec, delta)
    return out / out.sum()


def floor_model(model: ModelEstimate, delta: float) -> ModelEstimate:
    """Reset tiny entries to delta and renormalize; used before refinement."""
    confusions = np.stack(
        [_floor_columns(model.confusions[m], delta) for m in range(model.n_annotators)]
    )
    return ModelEstimate(confusions=confusions, prior=_floor_vector(model.prior, delta))


class _ConfusionSubproblem:
    """KL terms of one annotator against its partners, with other factors fixed."""

    def __init__(self, m, confusions, prior, cooc, config):
        partners = cooc.partners(m)
        self.observed = np.stack([cooc.get(m, l) for l in partners])
        self.right = confusions[np.array(partners) - 1] * prior
        self.weights = np.array(
            [_pair_weight(cooc, (min(m, l), max(m, l)), config.weight_by_count) for l in partners]
        )
        self.delta = config.delta
        self.base = _entropy_base(self.observed, self.weights)

    def objective(self, a: np.ndarray) -> float:
        q = np.maximum(np.einsum("ik,tjk->tij", a, self.right), self.delta)
        return self.base - float(
            np.sum(self.weights[:, None, None] * self.observed * np.log(q))
        )

    def gradient(self, a: np.ndarray) -> np.ndarray:
        q = np.maximum(np.einsum("ik,tjk->tij", a, self.right), self.delta)
        ratio = self.weights[:, None, None] * self.observed / q
        return -np.einsum("tij,tjk->ik", ratio, self.right)


class _PriorSubproblem:
    """KL terms of the whole model as a function of the prior only."""

    def __init__(self, confusions, cooc, config):
        keys = sorted(cooc.pairs)
        self.observed = np.stack([cooc.pairs[key] for key in keys])
        self.left = confusions[np.array([m for m, _ in keys]) - 1]
        self.right = confusions[np.array([l for _, l in keys]) - 1]
        self.weights = np.array(
            [_pair_weight(cooc, key, config.weight_by_count) for key in keys]
        )
        self.delta = config.delta
        self.base = _entropy_base(self.observed, self.weights)

    def objective(self, d: np.ndarray) -> float:
        q = np.maximum(np.einsum("tik,k,tjk->tij", self.left, d, self.right), self.delta)
        return self.base - float(
            np.sum(self.weights[:, None, None] * self.observed * np.log(q))
        )

    def gradient(self, d: np.ndarray) -> np.ndarray:
        q = np.maximum(np.einsum("tik,k,tjk->tij", self.left, d, self.right), self.delta)
        ratio = self.weights[:, None, None] * self.observed / q
        return -np.einsum("tij,tik,tjk->k", ratio, self.left, self.right)


def _mirror_columns(a: np.ndarray, grad: np.ndarray, step: float, delta: float) -> np.ndarray:
    logits = -step * grad
    logits -= logits.max(axis=0)
    out = a * np.exp(logits)
    out /= out.sum(axis=0)
    return _floor_columns(out, delta)


def _mirror_vector(d: np.ndarray, grad: np.ndarray, step: float, delta: float) -> np.ndarray:
    logits = -step * grad
    logits -= logits.max()
    out = d * np.exp(logits)
    out /= out.sum()
    return _floor_vector(out, delta)


SNAP_THRESHOLDS = (1e-2, 1e-3, 1e-4)


def _snap_columns(a: np.ndarray, threshold: float, delta: float) -> np.ndarray:
    return _floor_columns(np.where(a < threshold, 0.0, a), delta)


def _snap_vector(d: np.ndarray, threshold: float, delta: float) -> np.ndarray:
    return _floor_vector(np.where(d < threshold, 0.0, d), delta)


def _descend(value, subproblem, mirror, snap, config):
    """Exponentiated-gradient descent with a non-increase line search.

    Returns iterates on the (floored) simplex whose subproblem objective is
    never above the starting value; the step doubles after an accepted move
    and halves on rejection. Multiplicative steps approach boundary zeros
    only asymptotically, so small entries are finally offered a snap to the
    floor, kept when it does not increase the objective.
    """
    current = value
    current_obj = subproblem.objective(current)
    step = config.step_init
    for _ in range(config.inner_iterations):
        grad = subproblem.gradient(current)
        accepted = False
        for _ in range(config.max_backtracks):
            candidate = mirror(current, grad, step, config.delta)
            candidate_obj = subproblem.objective(candidate)
            if candidate_obj <= current_obj:
                accepted = True
                break
            step *= config.step_shrink
        if not accepted:
            break
        improvement = current_obj - candidate_obj
        current, current_obj = candidate, candidate_obj
        step = min(step * 2.0, 1e4)
        if improvement <= 1e-12 * max(1.0, abs(current_obj)):
            break
    if snap is not None:
        for threshold in SNAP_THRESHOLDS:
            if current.min() >= threshold:
                continue
            candidate = snap(current, threshold, config.delta)
            candidate_obj = subproblem.objective(candidate)
            if candidate_obj <= current_obj:
                current, current_obj = candidate, candidate_obj
    return current


def update_confusion(
    m: int,
    model: ModelEstimate,
    cooc: CooccurrenceSet,
    config: FitConfig | None = None,
    snap: bool = False,
) -> np.ndarray:
    """Improve annotator m's confusion matrix, holding everything else fixed."""
    config = config or FitConfig()
    sub = _ConfusionSubproblem(m, model.confusions, model.prior, cooc, config)
    return _descend(
        model.confusions[m - 1].copy(), sub, _mirror_columns,
        _snap_columns if snap else None, config,
    )


def update_prior(
    model: ModelEstimate,
    cooc: CooccurrenceSet,
    config: FitConfig | None = None,
    snap: bool = False,
) -> np.ndarray:
    """Improve the class prior, holding all confusion matrices fixed."""
    config = config or FitConfig()
    sub = _PriorSubproblem(model.confusions, cooc, config)
    return _descend(
        model.prior.copy(), sub, _mirror_vector,
        _snap_vector if snap else None, config,
    )


POLISH_MAX_CLASSES = 6


def _polish_permutations(confusions, prior, cooc, config) -> int:
    """Replace each confusion matrix by its best column permutation.

    A wrongly ordered initialization cannot be fixed by the smooth updates,
    so every annotator's pair terms are evaluated under all column orders
    and the best strict improvement is kept. Enumeration is skipped for
    class counts where K! is no longer negligible.
    """
    k = cooc.n_classes
    if k > POLISH_MAX_CLASSES:
        return 0
    moved = 0
    for m in range(1, cooc.n_annotators + 1):
        sub = _ConfusionSubproblem(m, confusions, prior, cooc, config)
        current = confusions[m - 1]
        best_obj = sub.objective(current)
        best = None
        for perm in itertools.permutations(range(k)):
            candidate = current[:, perm]
            objective = sub.objective(candidate)
            if objective < best_obj - 1e-12:
                best_obj, best = objective, candidate
        if best is not None:
            confusions[m - 1] = best
            moved += 1
    return moved


def _global_snap(confusions, prior, objective, obj_of, config):
    """Jointly snap small entries of every factor to the floor.

    Residual near-zero errors in different factors can support each other so
    that no single-factor snap helps; zeroing them together across the whole
    model removes that deadlock. Candidates are kept only when the objective
    does not increase.
    """
    for threshold in SNAP_THRESHOLDS:
        if min(confusions.min(), prior.min()) >= threshold:
            continue
        cand_conf = np.where(confusions < threshold, 0.0, confusions)
        cand_conf = np.maximum(cand_conf, config.delta)
        cand_conf /= cand_conf.sum(axis=1, keepdims=True)
        cand_prior = np.where(prior < threshold, 0.0, prior)
        cand_prior = np.maximum(cand_prior, config.delta)
        cand_prior /= cand_prior.sum()
        cand_obj = obj_of(cand_conf, cand_prior)
        if cand_obj <= objective:
            confusions, prior, objective = cand_conf, cand_prior, cand_obj
    return confusions, prior, objective


def _extrapolate(confusions, prior, start_conf, start_prior, objective, obj_of, config):
    """Safeguarded log-space line search along the sweep displacement.

    Doubles the extrapolation factor while the objective strictly drops;
    falls back to the un-extrapolated iterate otherwise. Keeps progress
    moving along nearly flat valley directions that block updates crawl
    through.
    """
    if not (np.all(start_conf > 0) and np.all(start_prior > 0)):
        return confusions, prior, objective
    log_dir_conf = np.log(confusions) - np.log(start_conf)
    log_dir_prior = np.log(prior) - np.log(start_prior)
    best = (confusions, prior, objective)
    factor = 2.0
    while factor <= 2.0 ** 20:
        cand_conf = np.exp(np.log(confusions) + (factor - 1.0) * log_dir_conf)
        cand_conf /= cand_conf.sum(axis=1, keepdims=True)
        cand_conf = np.maximum(cand_conf, config.delta)
        cand_conf /= cand_conf.sum(axis=1, keepdims=True)
        cand_prior = np.exp(np.log(prior) + (factor - 1.0) * log_dir_prior)
        cand_prior /= cand_prior.sum()
        cand_prior = np.maximum(cand_prior, config.delta)
        cand_prior /= cand_prior.sum()
        cand_obj = obj_of(cand_conf, cand_prior)
        if cand_obj < best[2]:
            best = (cand_conf, cand_prior, cand_obj)
            factor *= 2.0
        else:
            break
    return best


def fit_kl(
    cooc: CooccurrenceSet,
    init: ModelEstimate,
    config: FitConfig | None = None,
) -> tuple[ModelEstimate, list[float]]:
    """Alternating KL fit from a given initialization.

    Each sweep polishes column permutations, updates the confusion matrices
    in annotator order, updates the prior, and then extrapolates along the
    sweep displacement; it stops when the relative objective decrease over a
    sweep drops below the tolerance. Returns the fitted model and the
    objective recorded before the first sweep and after every sweep (a
    non-increasing sequence).
    """
    config = config or FitConfig()
    config.check(cooc.n_classes)
    model = floor_model(init, config.delta)
    confusions = model.confusions.copy()
    prior = model.prior.copy()

    def obj_of(conf, pri):
        return kl_objective(
            ModelEstimate(confusions=conf, prior=pri),
            cooc,
            config.delta,
            config.weight_by_count,
        )

    history = [obj_of(confusions, prior)]
    # Boundary snapping only starts once sweeps stop changing the structure
    # (an early snap can freeze entries the fit still needs to move).
    snap_engage = 1e-3
    snapping = False
    for _ in range(config.max_outer_sweeps):
        _polish_permutations(confusions, prior, cooc, config)
        start_conf, start_prior = confusions.copy(), prior.copy()
        for m in range(1, cooc.n_annotators + 1):
            current = ModelEstimate(confusions=confusions, prior=prior)
            confusions[m - 1] = update_confusion(m, current, cooc, config, snap=snapping)
        prior = update_prior(
            ModelEstimate(confusions=confusions, prior=prior), cooc, config, snap=snapping
        )
        objective = obj_of(confusions, prior)
        confusions, prior, objective = _extrapolate(
            confusions, prior, start_conf, start_prior, objective, obj_of, config
        )
        if snapping:
            confusions, prior, objective = _global_snap(
                confusions, prior, objective, obj_of, config
            )
        confusions, prior = confusions.copy(), prior.copy()
        previous = history[-1]
        history.append(objective)
        relative_drop = (previous - objective) / max(abs(previous), 1e-30)
        if relative_drop < config.tol:
            if snapping:
                break
            snapping = True
        elif relative_drop < snap_engage:
            snapping = True
    return ModelEstimate(confusions=confusions, prior=prior), history


def multispa_kl(
    dataset: LabelDataset,
    config: FitConfig | None = None,
    spa_config: MultiSpaConfig | None = None,
) -> ModelEstimate:
    """Full pipeline: algebraic initialization followed by the coupled KL fit."""
    validate_dataset(dataset)
    cooc = count_pairs(dataset)
    init = multispa_from_cooccurrences(cooc, spa_config)
    model, _ = fit_kl(cooc, init, config)
    return model
