"""Seeded generator for synthetic crowdsourcing datasets.

Two structured regimes control the confusion matrix of one uniformly chosen
annotator: ``case1`` gives it an identity matrix (a perfect annotator) and
``case2`` makes it diagonally dominant; every other annotator draws each
confusion column uniformly at random. Responses are drawn per item from
the column of the true class and independently retained with probability p.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabelDataset, ModelEstimate, validate_prior
from .errors import DataError

REGIMES = ("case1", "case2", "all_random")


@dataclass(frozen=True)
class SynthConfig:
    n_items: int
    n_annotators: int
    n_classes: int
    prior: np.ndarray | None = None
    p: float = 1.0
    regime: str = "case2"
    seed: int = 0

    def resolved_prior(self) -> np.ndarray:
        if self.prior is None:
            return np.full(self.n_classes, 1.0 / self.n_classes)
        return np.asarray(self.prior, dtype=float)


def _check(config: SynthConfig) -> np.ndarray:
    if config.n_items < 1 or config.n_annotators < 1:
        raise DataError("synth: item and annotator counts must be positive")
    if config.n_classes < 2:
        raise DataError("synth: need at least 2 classes")
    if not 0.0 < config.p <= 1.0:
        raise DataError(f"synth: labeling probability must lie in (0, 1], got {config.p}")
    if config.regime not in REGIMES:
        raise DataError(f"synth: unknown regime {config.regime!r}")
    prior = config.resolved_prior()
    if prior.shape != (config.n_classes,):
        raise DataError("synth: prior length does not match the class count")
    validate_prior(prior)
    return prior


def _random_stochastic(rng: np.random.Generator, k: int) -> np.ndarray:
    cols = rng.random((k, k))
    return cols / cols.sum(axis=0)


def _diagonally_dominant(rng: np.random.Generator, k: int) -> np.ndarray:
    """Random column-stochastic matrix with the maximum swapped onto the diagonal."""
    mat = _random_stochastic(rng, k)
    for col in range(k):
        j = int(np.argmax(mat[:, col]))
        mat[[col, j], col] = mat[[j, col], col]
    return mat / mat.sum(axis=0)


def _build_confusions(rng: np.random.Generator, config: SynthConfig) -> np.ndarray:
    k, m_total = config.n_classes, config.n_annotators
    confusions = np.empty((m_total, k, k))
    special = int(rng.integers(m_total)) if config.regime != "all_random" else -1
    for m in range(m_total):
        if m == special and config.regime == "case1":
            confusions[m] = np.eye(k)
        elif m == special and config.regime == "case2":
            confusions[m] = _diagonally_dominant(rng, k)
        else:
            confusions[m] = _random_stochastic(rng, k)
    return confusions


def generate(config: SynthConfig) -> tuple[LabelDataset, ModelEstimate, np.ndarray]:
    """Draw (dataset, generating model, true labels) from the seed.

    All randomness derives from the seed through a fixed splitting scheme:
    one child stream for the labels, one for the model, and one per
    annotator for its responses and retention, so results are reproducible
    regardless of how generation is scheduled.
    """
    prior = _check(config)
    streams = np.random.SeedSequence(config.seed).spawn(2 + config.n_annotators)
    label_rng = np.random.default_rng(streams[0])
    model_rng = np.random.default_rng(streams[1])

    labels = label_rng.choice(config.n_classes, size=config.n_items, p=prior) + 1
    confusions = _build_confusions(model_rng, config)
    model = ModelEstimate(confusions=confusions, prior=prior)

    responses: dict[tuple[int, int], int] = {}
    for m in range(config.n_annotators):
        rng = np.random.default_rng(streams[2 + m])
        draws = rng.random(config.n_items)
        cumulative = np.cumsum(confusions[m], axis=0)[:, labels - 1]
        answers = np.minimum(
            (draws[None, :] > cumulative).sum(axis=0), config.n_classes - 1
        ) + 1
        kept = rng.random(config.n_items) < config.p
        for item in np.flatnonzero(kept):
            responses[(int(item) + 1, m + 1)] = int(answers[item])
    dataset = LabelDataset(
        n_items=config.n_items,
        n_annotators=config.n_annotators,
        n_classes=config.n_classes,
        responses=responses,
    )
    return dataset, model, labels
