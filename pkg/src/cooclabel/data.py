"""Core domain types, validation, and file formats.

Class labels, item indices, and annotator indices are 1-based everywhere at
the interface level; absence of a response is encoded by absence from the
sparse response map (never by a sentinel label).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DataError

PROB_TOL = 1e-9


@dataclass(frozen=True)
class LabelDataset:
    """Sparse collection of annotator responses.

    ``responses`` maps (item, annotator) to a class label in {1..n_classes}.
    Instances are treated as immutable after construction.
    """

    n_items: int
    n_annotators: int
    n_classes: int
    responses: dict[tuple[int, int], int]

    @classmethod
    def from_records(
        cls,
        n_items: int,
        n_annotators: int,
        n_classes: int,
        records: Iterable[tuple[int, int, int]],
    ) -> "LabelDataset":
        """Build a dataset from (item, annotator, label) triples.

        Raises DataError on a duplicate (item, annotator) pair.
        """
        responses: dict[tuple[int, int], int] = {}
        for item, annotator, label in records:
            key = (item, annotator)
            if key in responses:
                raise DataError(
                    f"data: duplicate response at item {item}, annotator {annotator}"
                )
            responses[key] = label
        return cls(n_items, n_annotators, n_classes, responses)

    def response_matrix(self) -> np.ndarray:
        """Dense (n_items, n_annotators) label matrix; 0 marks a missing response."""
        mat = np.zeros((self.n_items, self.n_annotators), dtype=np.int64)
        for (item, annotator), label in self.responses.items():
            mat[item - 1, annotator - 1] = label
        return mat


@dataclass(frozen=True)
class ModelEstimate:
    """Confusion matrices and class prior sharing one column ordering.

    ``confusions`` has shape (M, K, K); ``confusions[m][j, k]`` is the
    probability that annotator m+1 answers class j+1 when the truth is k+1,
    so every confusion column sums to 1. ``prior`` is the length-K class PMF.
    """

    confusions: np.ndarray
    prior: np.ndarray

    @property
    def n_annotators(self) -> int:
        return self.confusions.shape[0]

    @property
    def n_classes(self) -> int:
        return self.prior.shape[0]


def validate_dataset(dataset: LabelDataset) -> None:
    """Check dataset invariants, raising DataError at the first violation."""
    if dataset.n_items < 1 or dataset.n_annotators < 1:
        raise DataError("data: item and annotator counts must be positive")
    if dataset.n_classes < 2:
        raise DataError("data: need at least 2 classes")
    for (item, annotator), label in dataset.responses.items():
        if not 1 <= item <= dataset.n_items:
            raise DataError(f"data: item index {item} out of range at annotator {annotator}")
        if not 1 <= annotator <= dataset.n_annotators:
            raise DataError(f"data: annotator index {annotator} out of range at item {item}")
        if not 1 <= label <= dataset.n_classes:
            raise DataError(
                f"data: label {label} out of range at item {item}, annotator {annotator}"
            )


def validate_confusion(matrix: np.ndarray, tol: float = PROB_TOL) -> None:
    """Check that a K x K matrix is column-stochastic within ``tol``."""
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DataError(f"data: confusion matrix must be square, got {matrix.shape}")
    if np.any(matrix < 0):
        raise DataError("data: confusion matrix has a negative entry")
    sums = matrix.sum(axis=0)
    if np.any(np.abs(sums - 1.0) > tol):
        k = int(np.argmax(np.abs(sums - 1.0)))
        raise DataError(f"data: confusion column {k + 1} sums to {sums[k]!r}, expected 1")


def validate_prior(probs: np.ndarray, tol: float = PROB_TOL) -> None:
    """Check that a vector is a probability mass function within ``tol``."""
    if probs.ndim != 1:
        raise DataError("data: prior must be a vector")
    if np.any(probs < 0):
        raise DataError("data: prior has a negative entry")
    if abs(probs.sum() - 1.0) > tol:
        raise DataError(f"data: prior sums to {probs.sum()!r}, expected 1")


def validate_model(model: ModelEstimate, tol: float = PROB_TOL) -> None:
    """Check all model invariants (shapes, simplex constraints)."""
    if model.confusions.ndim != 3:
        raise DataError("data: confusions must have shape (M, K, K)")
    k = model.n_classes
    if model.confusions.shape[1:] != (k, k):
        raise DataError(
            f"data: confusion shape {model.confusions.shape[1:]} does not match K={k}"
        )
    validate_prior(model.prior, tol)
    for m in range(model.n_annotators):
        try:
            validate_confusion(model.confusions[m], tol)
        except DataError as exc:
            raise DataError(f"data: annotator {m + 1}: {exc}") from None


DATASET_HEADER = ["item", "annotator", "label"]
TRUTH_HEADER = ["item", "label"]


def _read_int(field: str, path: str, line: int, name: str) -> int:
    try:
        return int(field)
    except ValueError:
        raise DataError(f"data: {path}:{line}: {name} {field!r} is not an integer") from None


def load_dataset(
    path: str,
    n_classes: int,
    n_items: int | None = None,
    n_annotators: int | None = None,
) -> LabelDataset:
    """Read a response CSV (header ``item,annotator,label``).

    Item and annotator counts default to the largest index seen. A label of
    0 is rejected: absence is encoded by omitting the row entirely.
    """
    records = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != DATASET_HEADER:
            raise DataError(f"data: {path}: expected header {','.join(DATASET_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"data: {path}:{lineno}: expected 3 fields, got {len(row)}")
            item = _read_int(row[0], path, lineno, "item")
            annotator = _read_int(row[1], path, lineno, "annotator")
            label = _read_int(row[2], path, lineno, "label")
            if label == 0:
                raise DataError(
                    f"data: {path}:{lineno}: label 0 is reserved for absent responses"
                )
            records.append((item, annotator, label))
    if n_items is None:
        n_items = max((r[0] for r in records), default=0)
    if n_annotators is None:
        n_annotators = max((r[1] for r in records), default=0)
    dataset = LabelDataset.from_records(n_items, n_annotators, n_classes, records)
    validate_dataset(dataset)
    return dataset


def save_dataset(dataset: LabelDataset, path: str) -> None:
    """Write a response CSV, rows sorted by (item, annotator)."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(DATASET_HEADER)
        for (item, annotator), label in sorted(dataset.responses.items()):
            writer.writerow([item, annotator, label])


def load_truth_labels(path: str, n_items: int | None = None) -> np.ndarray:
    """Read a ground-truth CSV (header ``item,label``) into a dense vector.

    Entry i-1 holds the label of item i; 0 marks items without truth.
    """
    pairs = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != TRUTH_HEADER:
            raise DataError(f"data: {path}: expected header {','.join(TRUTH_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"data: {path}:{lineno}: expected 2 fields, got {len(row)}")
            item = _read_int(row[0], path, lineno, "item")
            label = _read_int(row[1], path, lineno, "label")
            if item < 1 or label < 1:
                raise DataError(f"data: {path}:{lineno}: indices and labels are 1-based")
            pairs.append((item, label))
    size = n_items if n_items is not None else max((i for i, _ in pairs), default=0)
    truth = np.zeros(size, dtype=np.int64)
    for item, label in pairs:
        if item > size:
            raise DataError(f"data: {path}: item {item} exceeds declared count {size}")
        truth[item - 1] = label
    return truth


def save_truth_labels(labels: np.ndarray, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRUTH_HEADER)
        for item, label in enumerate(labels, start=1):
            writer.writerow([item, int(label)])


def save_model(model: ModelEstimate, path: str) -> None:
    """Write a model as a self-describing JSON document.

    ``confusions[m][k]`` holds column k of annotator m+1's confusion matrix,
    i.e. the response distribution given true class k+1.
    """
    validate_model(model)
    doc = {
        "k": model.n_classes,
        "m": model.n_annotators,
        "prior": model.prior.tolist(),
        "confusions": [model.confusions[m].T.tolist() for m in range(model.n_annotators)],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2)
        handle.write("\n")


def load_model(path: str) -> ModelEstimate:
    """Read a model document written by :func:`save_model`."""
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DataError(f"data: {path}: not a valid model file ({exc})") from None
    for field in ("k", "m", "prior", "confusions"):
        if field not in doc:
            raise DataError(f"data: {path}: missing field {field!r}")
    k, m = doc["k"], doc["m"]
    prior = np.asarray(doc["prior"], dtype=float)
    if prior.shape != (k,):
        raise DataError(f"data: {path}: prior length {prior.shape} does not match k={k}")
    raw = doc["confusions"]
    if len(raw) != m:
        raise DataError(f"data: {path}: expected {m} confusion matrices, got {len(raw)}")
    confusions = np.empty((m, k, k), dtype=float)
    for i, columns in enumerate(raw):
        arr = np.asarray(columns, dtype=float)
        if arr.shape != (k, k):
            raise DataError(
                f"data: {path}: confusion {i + 1} has shape {arr.shape}, expected ({k}, {k})"
            )
        confusions[i] = arr.T
    model = ModelEstimate(confusions=confusions, prior=prior)
    validate_model(model)
    return model


def save_predictions(
    labels: np.ndarray, posteriors: np.ndarray, path: str
) -> None:
    """Write per-item predicted labels and posteriors as CSV."""
    k = posteriors.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["item", "label"] + [f"p{j + 1}" for j in range(k)])
        for item in range(labels.shape[0]):
            row = [item + 1, int(labels[item])]
            row += [f"{posteriors[item, j]:.12g}" for j in range(k)]
            writer.writerow(row)


def load_predictions(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a predictions CSV; returns (item indices, predicted labels)."""
    items, labels = [], []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or header[:2] != ["item", "label"]:
            raise DataError(f"data: {path}: expected header starting with item,label")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            items.append(_read_int(row[0], path, lineno, "item"))
            labels.append(_read_int(row[1], path, lineno, "label"))
    return np.asarray(items, dtype=np.int64), np.asarray(labels, dtype=np.int64)
