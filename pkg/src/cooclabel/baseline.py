"""Majority voting and the classic EM estimator for comparison runs."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .data import LabelDataset, ModelEstimate, validate_dataset, validate_model
from .errors import DataError
from .klfit import floor_model


def majority_vote(dataset: LabelDataset) -> np.ndarray:
    """Modal response per item; ties break to the lowest class, 0 = unlabeled."""
    validate_dataset(dataset)
    k = dataset.n_classes
    votes = np.zeros((dataset.n_items, k), dtype=np.int64)
    for (item, _), label in dataset.responses.items():
        votes[item - 1, label - 1] += 1
    labels = np.argmax(votes, axis=1) + 1
    labels[votes.sum(axis=1) == 0] = 0
    return labels


class EMResult(NamedTuple):
    model: ModelEstimate
    posteriors: np.ndarray
    log_likelihoods: list[float]


def _annotator_views(mat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per annotator: (indices of labeled items, their 0-based labels)."""
    views = []
    for m in range(mat.shape[1]):
        idx = np.flatnonzero(mat[:, m] > 0)
        views.append((idx, mat[idx, m] - 1))
    return views


def _e_step(views, log_conf, log_prior, n_items):
    scores = np.tile(log_prior, (n_items, 1))
    for m, (idx, labels) in enumerate(views):
        scores[idx] += log_conf[m][labels, :]
    norms = logsumexp(scores, axis=1)
    # Items whose every class was zeroed out fall back to the prior.
    dead = ~np.isfinite(norms)
    if np.any(dead):
        scores[dead] = log_prior
        norms[dead] = 0.0
    posteriors = np.exp(scores - norms[:, None])
    return posteriors, float(norms.sum())


def em_fit(
    dataset: LabelDataset,
    init: ModelEstimate,
    max_iters: int = 100,
    tol: float = 1e-7,
    delta: float = 1e-6,
) -> EMResult:
    """Expectation-maximization for confusion matrices and prior.

    The initialization is floored at ``delta`` and renormalized; posteriors
    are computed in the log domain. Iteration stops when the observed-data
    log-likelihood improves by less than ``tol`` relative, or after
    ``max_iters`` sweeps. The returned posteriors correspond to the returned
    model, and the log-likelihood sequence is non-decreasing.
    """
    validate_dataset(dataset)
    validate_model(init)
    if init.n_classes != dataset.n_classes or init.n_annotators != dataset.n_annotators:
        raise DataError("baseline: init model dimensions do not match the dataset")
    if not dataset.responses:
        raise DataError("baseline: dataset has no responses")
    mat = dataset.response_matrix()
    views = _annotator_views(mat)
    labeled = np.flatnonzero(mat.max(axis=1) > 0)

    model = floor_model(init, delta)
    confusions = model.confusions.copy()
    prior = model.prior.copy()
    k = dataset.n_classes
    history: list[float] = []
    posteriors = None
    with np.errstate(divide="ignore"):
        for _ in range(max_iters + 1):
            log_conf = [np.log(confusions[m]) for m in range(dataset.n_annotators)]
            log_prior = np.log(prior)
            posteriors, ll = _e_step(views, log_conf, log_prior, dataset.n_items)
            history.append(ll)
            if len(history) > 1 and ll - history[-2] < tol * max(abs(history[-2]), 1e-30):
                break
            if len(history) > max_iters:
                break
            for m, (idx, labels) in enumerate(views):
                counts = np.zeros((k, k))
                np.add.at(counts, labels, posteriors[idx])
                sums = counts.sum(axis=0)
                empty = sums <= 0.0
                counts[:, empty] = 1.0 / k
                confusions[m] = counts / counts.sum(axis=0)
            prior = posteriors[labeled].sum(axis=0)
            prior /= prior.sum()
    return EMResult(ModelEstimate(confusions=confusions, prior=prior), posteriors, history)


def mv_initialize(dataset: LabelDataset, delta: float = 1e-6) -> ModelEstimate:
    """Model built by treating majority-vote labels as ground truth.

    Confusion columns with no observed mass (e.g. an annotator who labeled
    nothing) are set uniform; everything is floored at ``delta`` and
    renormalized so the result is a usable EM initialization.
    """
    mv = majority_vote(dataset)
    k = dataset.n_classes
    keep = mv > 0
    if not np.any(keep):
        raise DataError("baseline: no item has any response")
    label_counts = np.bincount(mv[keep] - 1, minlength=k).astype(float)
    prior = label_counts / label_counts.sum()
    mat = dataset.response_matrix()
    confusions = np.empty((dataset.n_annotators, k, k))
    for m in range(dataset.n_annotators):
        idx = np.flatnonzero((mat[:, m] > 0) & keep)
        counts = np.zeros((k, k))
        np.add.at(counts, (mat[idx, m] - 1, mv[idx] - 1), 1.0)
        sums = counts.sum(axis=0)
        empty = sums <= 0.0
        counts[:, empty] = 1.0 / k
        confusions[m] = counts / counts.sum(axis=0)
    model = ModelEstimate(confusions=confusions, prior=prior)
    return floor_model(model, delta)
