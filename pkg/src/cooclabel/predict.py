"""Label prediction from a fitted model, and evaluation metrics."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .data import LabelDataset, ModelEstimate, validate_dataset, validate_model
from .errors import DataError


def map_predict(
    model: ModelEstimate, dataset: LabelDataset, delta: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-maximizing label per item under the naive Bayes model.

    The unnormalized log posterior of class k is log d(k) plus the log
    confusion entries of every response on the item, with probabilities
    floored at ``delta``; ties break to the lowest class and items with no
    responses fall back to the prior argmax. Returns (labels, posteriors).
    """
    validate_dataset(dataset)
    validate_model(model)
    if model.n_classes != dataset.n_classes or model.n_annotators != dataset.n_annotators:
        raise DataError("predict: model dimensions do not match the dataset")
    mat = dataset.response_matrix()
    log_prior = np.log(np.maximum(model.prior, delta))
    scores = np.tile(log_prior, (dataset.n_items, 1))
    for m in range(dataset.n_annotators):
        idx = np.flatnonzero(mat[:, m] > 0)
        log_conf = np.log(np.maximum(model.confusions[m], delta))
        scores[idx] += log_conf[mat[idx, m] - 1, :]
    posteriors = np.exp(scores - logsumexp(scores, axis=1)[:, None])
    # Flooring keeps every term finite, but guard the all-zero pathology anyway.
    dead = posteriors.sum(axis=1) <= 0.0
    if np.any(dead):
        posteriors[dead] = model.prior
    labels = np.argmax(posteriors, axis=1) + 1
    return labels, posteriors


def _assignment_cost(truth: np.ndarray, estimate: np.ndarray) -> np.ndarray:
    """cost[i, j] = squared distance between truth column i and estimate column j."""
    k = truth.shape[1]
    cost = np.empty((k, k))
    for i in range(k):
        diff = truth[:, i][:, None] - estimate
        cost[i] = (diff * diff).sum(axis=0)
    return cost


def mse(estimated: np.ndarray, truth: np.ndarray) -> float:
    """Permutation-minimal mean squared column error between two K x K matrices."""
    if estimated.shape != truth.shape:
        raise DataError(
            f"predict: shape mismatch {estimated.shape} vs {truth.shape}"
        )
    cost = _assignment_cost(truth, estimated)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum()) / truth.shape[1]


def model_mse(
    estimate: ModelEstimate, truth: ModelEstimate, per_annotator: bool = False
) -> float:
    """Average confusion-matrix MSE between two models.

    By default one permutation, chosen to minimize the total cost summed
    over annotators, is applied everywhere; that matches estimators whose
    outputs share a single column ordering. With ``per_annotator`` each
    annotator is permuted independently (useful when diagnosing alignment
    failures).
    """
    if estimate.n_classes != truth.n_classes or estimate.n_annotators != truth.n_annotators:
        raise DataError("predict: model dimension mismatch")
    k = truth.n_classes
    if per_annotator:
        return float(
            np.mean([mse(estimate.confusions[m], truth.confusions[m])
                     for m in range(truth.n_annotators)])
        )
    costs = np.stack(
        [_assignment_cost(truth.confusions[m], estimate.confusions[m])
         for m in range(truth.n_annotators)]
    )
    rows, cols = linear_sum_assignment(costs.sum(axis=0))
    return float(costs[:, rows, cols].sum()) / (k * truth.n_annotators)


def align_model_classes(model: ModelEstimate, reference: ModelEstimate) -> ModelEstimate:
    """Relabel the model's classes to best match a reference model.

    Applies the single shared column permutation minimizing the summed
    assignment cost across annotators (the same permutation the default
    :func:`model_mse` selects) to every confusion matrix and to the prior.
    Factorization-based estimators recover classes only up to a shared
    relabeling; evaluation harnesses use this to express a fitted model in
    the reference's label alphabet before comparing predictions.
    """
    if model.n_classes != reference.n_classes or model.n_annotators != reference.n_annotators:
        raise DataError("predict: model dimension mismatch")
    costs = np.stack(
        [_assignment_cost(reference.confusions[m], model.confusions[m])
         for m in range(reference.n_annotators)]
    )
    _, cols = linear_sum_assignment(costs.sum(axis=0))
    return ModelEstimate(
        confusions=model.confusions[:, :, cols], prior=model.prior[cols]
    )


def classification_error(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Percentage of items whose prediction differs from the truth.

    Items flagged unlabeled (predicted label 0) count as errors; every
    evaluated item must have a truth label.
    """
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise DataError("predict: prediction and truth lengths differ")
    if predicted.size == 0:
        raise DataError("predict: nothing to evaluate")
    if np.any(truth < 1):
        missing = int(np.flatnonzero(truth < 1)[0]) + 1
        raise DataError(f"predict: missing truth label for item {missing}")
    return float(np.mean(predicted != truth)) * 100.0
