"""Shared oracle implementations kept independent of the library code paths."""

import itertools

import numpy as np


def random_stochastic(rng, k):
    cols = rng.random((k, k))
    return cols / cols.sum(axis=0)


def population_pair_oracle(a_m, a_l, prior):
    """Triple-loop joint PMF of two annotators; the slow reference."""
    k = prior.shape[0]
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            for c in range(k):
                out[i, j] += prior[c] * a_m[i, c] * a_l[j, c]
    return out


def spa_oracle(z, k):
    """Successive projection via explicit pseudoinverse projectors."""
    picked = []
    for _ in range(k):
        if picked:
            basis = z[:, picked]
            proj = np.eye(z.shape[0]) - basis @ np.linalg.pinv(basis)
        else:
            proj = np.eye(z.shape[0])
        residuals = np.linalg.norm(proj @ z, axis=0) ** 2
        residuals[picked] = -np.inf
        picked.append(int(np.argmax(residuals)))
    return z[:, picked], picked


def map_oracle(model, dataset, delta=1e-6):
    """Per-item argmax of prior times response probabilities, plain products."""
    prior = np.maximum(model.prior, delta)
    labels = np.zeros(dataset.n_items, dtype=int)
    for item in range(1, dataset.n_items + 1):
        scores = prior.copy()
        for m in range(1, dataset.n_annotators + 1):
            response = dataset.responses.get((item, m))
            if response is None:
                continue
            scores = scores * np.maximum(model.confusions[m - 1][response - 1, :], delta)
        labels[item - 1] = int(np.argmax(scores)) + 1
    return labels


def mse_oracle(estimated, truth):
    """Permutation-minimal MSE by exhaustive enumeration."""
    k = truth.shape[1]
    best = np.inf
    for perm in itertools.permutations(range(k)):
        total = sum(
            np.sum((truth[:, perm[j]] - estimated[:, j]) ** 2) for j in range(k)
        )
        best = min(best, total / k)
    return best
