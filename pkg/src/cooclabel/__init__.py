"""Crowdsourced label aggregation from pairwise co-occurrence statistics."""

from .baseline import EMResult, em_fit, majority_vote, mv_initialize
from .cooccurrence import (
    CooccurrenceSet,
    count_pairs,
    population_cooccurrence,
    population_cooccurrences,
)
from .data import (
    LabelDataset,
    ModelEstimate,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
    validate_dataset,
    validate_model,
)
from .errors import DataError
from .klfit import FitConfig, fit_kl, kl_objective, multispa_kl, update_confusion, update_prior
from .multispa import (
    MultiSpaConfig,
    StackedBlock,
    align_permutations,
    build_stacked,
    estimate_prior,
    multispa,
    multispa_from_cooccurrences,
    normalize_columns,
    spa,
)
from .predict import align_model_classes, classification_error, map_predict, model_mse, mse
from .synth import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "CooccurrenceSet",
    "DataError",
    "EMResult",
    "FitConfig",
    "LabelDataset",
    "ModelEstimate",
    "MultiSpaConfig",
    "StackedBlock",
    "SynthConfig",
    "align_model_classes",
    "align_permutations",
    "build_stacked",
    "classification_error",
    "count_pairs",
    "em_fit",
    "estimate_prior",
    "fit_kl",
    "generate",
    "kl_objective",
    "load_dataset",
    "load_model",
    "majority_vote",
    "map_predict",
    "model_mse",
    "mse",
    "multispa",
    "multispa_from_cooccurrences",
    "multispa_kl",
    "mv_initialize",
    "normalize_columns",
    "population_cooccurrence",
    "population_cooccurrences",
    "save_dataset",
    "save_model",
    "spa",
    "update_confusion",
    "update_prior",
    "validate_dataset",
    "validate_model",
]
