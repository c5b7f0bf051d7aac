import numpy as np
import pytest

from cooclabel import (
    DataError,
    FitConfig,
    ModelEstimate,
    SynthConfig,
    count_pairs,
    fit_kl,
    generate,
    kl_objective,
    model_mse,
    multispa_from_cooccurrences,
    multispa_kl,
    population_cooccurrences,
    update_confusion,
    update_prior,
)
from cooclabel.cooccurrence import CooccurrenceSet
from helpers import random_stochastic


def identifiable_model(rng, m_total=6, k=3):
    conf = np.stack([random_stochastic(rng, k) for _ in range(m_total)])
    conf[2] = np.eye(k)
    prior = rng.random(k) + 0.5
    prior /= prior.sum()
    return ModelEstimate(conf, prior)


def test_objective_zero_at_exact_fit():
    rng = np.random.default_rng(0)
    model = identifiable_model(rng)
    cooc = population_cooccurrences(model)
    assert abs(kl_objective(model, cooc)) <= 1e-12


def test_objective_hand_value():
    # single pair, observed diag(0.5, 0.5) against a uniform model: ln 2
    observed = np.array([[0.5, 0.0], [0.0, 0.5]])
    cooc = CooccurrenceSet(2, 2, {(1, 2): observed}, {(1, 2): 4})
    uniform = np.full((2, 2), 0.5)
    model = ModelEstimate(np.stack([uniform, uniform]), np.array([0.5, 0.5]))
    assert abs(kl_objective(model, cooc) - np.log(2)) <= 1e-12


def test_objective_nonnegative_up_to_floor():
    rng = np.random.default_rng(1)
    for seed in range(5):
        cfg = SynthConfig(n_items=300, n_annotators=4, n_classes=3, p=0.7,
                          regime="all_random", seed=seed)
        ds, _, _ = generate(cfg)
        cooc = count_pairs(ds)
        conf = np.stack([random_stochastic(rng, 3) for _ in range(4)])
        prior = rng.random(3)
        prior /= prior.sum()
        model = ModelEstimate(conf, prior)
        assert kl_objective(model, cooc) >= -1e-6


def test_objective_counts_each_pair_once():
    observed = np.array([[0.5, 0.0], [0.0, 0.5]])
    uniform = np.full((2, 2), 0.5)
    single = CooccurrenceSet(2, 2, {(1, 2): observed}, {(1, 2): 1})
    model = ModelEstimate(np.stack([uniform, uniform]), np.array([0.5, 0.5]))
    weighted = kl_objective(model, single, weight_by_count=True)
    assert abs(weighted - kl_objective(model, single)) <= 1e-12
    heavier = CooccurrenceSet(2, 2, {(1, 2): observed}, {(1, 2): 3})
    assert abs(kl_objective(model, heavier, weight_by_count=True) - 3 * np.log(2)) <= 1e-12


def test_update_confusion_fixed_point_at_truth():
    rng = np.random.default_rng(2)
    model = identifiable_model(rng)
    cooc = population_cooccurrences(model)
    for m in (1, 4):
        updated = update_confusion(m, model, cooc)
        assert np.max(np.abs(updated - model.confusions[m - 1])) <= 1e-9


def test_update_confusion_feasible_and_monotone():
    rng = np.random.default_rng(3)
    truth = identifiable_model(rng)
    cooc = population_cooccurrences(truth)
    noisy = truth.confusions.copy()
    noisy[0] = random_stochastic(rng, 3)
    model = ModelEstimate(noisy, truth.prior)
    before = kl_objective(model, cooc)
    updated = update_confusion(1, model, cooc)
    after_model = ModelEstimate(
        np.concatenate([updated[None], noisy[1:]]), truth.prior
    )
    assert np.allclose(updated.sum(axis=0), 1.0, atol=1e-9)
    assert np.all(updated >= 0)
    assert kl_objective(after_model, cooc) <= before + 1e-12


def test_update_confusion_single_pair_closed_form():
    # with an identity partner and known uniform prior, the optimal column-
    # stochastic fit of observed [[0.4, 0.1], [0.1, 0.4]] is its column
    # normalization [[0.8, 0.2], [0.2, 0.8]]
    observed = np.array([[0.4, 0.1], [0.1, 0.4]])
    cooc = CooccurrenceSet(2, 2, {(1, 2): observed}, {(1, 2): 10})
    start = np.full((2, 2), 0.5)
    model = ModelEstimate(np.stack([start, np.eye(2)]), np.array([0.5, 0.5]))
    config = FitConfig(inner_iterations=500)
    updated = update_confusion(1, model, cooc, config)
    assert np.max(np.abs(updated - [[0.8, 0.2], [0.2, 0.8]])) <= 1e-3

    # grid-search oracle over 2x2 column-stochastic matrices
    grid = np.linspace(1e-4, 1 - 1e-4, 201)
    best, best_ab = np.inf, None
    for a in grid:
        for b in grid:
            q = 0.5 * np.array([[a, b], [1 - a, 1 - b]])
            val = float(np.sum(observed * np.log(observed / q)))
            if val < best:
                best, best_ab = val, (a, b)
    assert abs(best_ab[0] - 0.8) <= 5e-3
    assert abs(best_ab[1] - 0.2) <= 5e-3


def test_update_prior_fixed_point_and_feasible():
    rng = np.random.default_rng(4)
    model = identifiable_model(rng)
    cooc = population_cooccurrences(model)
    updated = update_prior(model, cooc)
    assert np.max(np.abs(updated - model.prior)) <= 1e-9
    assert abs(updated.sum() - 1.0) <= 1e-9
    assert np.all(updated >= 0)


def test_update_prior_single_pair_closed_form():
    observed = np.array([[0.7, 0.0], [0.0, 0.3]])
    cooc = CooccurrenceSet(2, 2, {(1, 2): observed}, {(1, 2): 10})
    model = ModelEstimate(np.stack([np.eye(2), np.eye(2)]), np.array([0.5, 0.5]))
    config = FitConfig(inner_iterations=500)
    updated = update_prior(model, cooc, config)
    assert np.max(np.abs(updated - [0.7, 0.3])) <= 1e-3

    # 1-d grid oracle over the simplex
    grid = np.linspace(1e-4, 1 - 1e-4, 2001)
    values = 0.7 * np.log(0.7 / grid) + 0.3 * np.log(0.3 / (1 - grid))
    assert abs(grid[np.argmin(values)] - 0.7) <= 1e-3


def test_fit_recovers_truth_from_population_input():
    # the truth is the global optimum with objective zero; when every
    # stacked block carries exact anchors the algebraic init already sits on
    # it, and the fit must hold that optimum at numerical-zero objective
    rng = np.random.default_rng(5)
    conf = np.stack([random_stochastic(rng, 3) for _ in range(6)])
    conf[1] = np.eye(3)
    conf[4] = np.eye(3)
    prior = rng.random(3) + 0.5
    prior /= prior.sum()
    model = ModelEstimate(conf, prior)
    cooc = population_cooccurrences(model)
    init = multispa_from_cooccurrences(cooc)
    # flooring the identity confusions costs ~4*delta of objective on their
    # mutual pair, so the floor must sit well below the 1e-10 target
    config = FitConfig(max_outer_sweeps=200, tol=1e-12, delta=1e-12)
    fitted, history = fit_kl(cooc, init, config)
    assert history[-1] <= 1e-10
    assert model_mse(fitted, model) <= 1e-10
    assert np.max(np.abs(np.sort(fitted.prior) - np.sort(model.prior))) <= 1e-9


def test_fit_repairs_anchor_free_annotator():
    # one annotator has no perfect partner, so its algebraic estimate is
    # badly biased; the coupled fit must repair most of that error. The
    # factors are recovered from near-zero data residuals through an
    # ill-conditioned inverse map, hence the modest absolute tolerance.
    rng = np.random.default_rng(5)
    model = identifiable_model(rng)
    cooc = population_cooccurrences(model)
    init = multispa_from_cooccurrences(cooc)
    fitted, history = fit_kl(cooc, init, FitConfig(max_outer_sweeps=200, tol=1e-12, delta=1e-9))
    assert history[-1] <= 1e-7
    assert model_mse(fitted, model) <= 1e-6
    assert model_mse(fitted, model) <= model_mse(init, model) / 1000
    assert np.max(np.abs(np.sort(fitted.prior) - np.sort(model.prior))) <= 1e-4


def test_fit_objective_non_increasing():
    for seed in range(5):
        cfg = SynthConfig(n_items=1500, n_annotators=6, n_classes=3, p=0.7,
                          regime="case2", seed=40 + seed)
        ds, _, _ = generate(cfg)
        cooc = count_pairs(ds)
        init = multispa_from_cooccurrences(cooc)
        _, history = fit_kl(cooc, init, FitConfig(max_outer_sweeps=30))
        rises = [history[i + 1] - history[i] for i in range(len(history) - 1)]
        assert max(rises) <= 1e-9 * max(1.0, abs(history[0]))


def test_fit_output_feasible():
    cfg = SynthConfig(n_items=1000, n_annotators=5, n_classes=3, p=0.8, regime="case2", seed=50)
    ds, _, _ = generate(cfg)
    model = multispa_kl(ds, FitConfig(max_outer_sweeps=20))
    assert np.allclose(model.confusions.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(model.confusions >= 0)
    assert abs(model.prior.sum() - 1.0) <= 1e-9


def test_fit_improves_on_initialization():
    cfg = SynthConfig(n_items=8000, n_annotators=10, n_classes=3, p=0.6, regime="case2", seed=60)
    ds, truth, _ = generate(cfg)
    cooc = count_pairs(ds)
    init = multispa_from_cooccurrences(cooc)
    fitted, _ = fit_kl(cooc, init)
    assert model_mse(fitted, truth) < model_mse(init, truth)


def test_config_validation():
    cooc = CooccurrenceSet(2, 2, {(1, 2): np.full((2, 2), 0.25)}, {(1, 2): 4})
    model = ModelEstimate(np.stack([np.eye(2), np.eye(2)]), np.array([0.5, 0.5]))
    with pytest.raises(DataError, match="delta"):
        fit_kl(cooc, model, FitConfig(delta=0.9))
    with pytest.raises(DataError, match="tolerance"):
        fit_kl(cooc, model, FitConfig(tol=0.0))
    with pytest.raises(DataError, match="counts"):
        fit_kl(cooc, model, FitConfig(max_outer_sweeps=0))


def test_objective_requires_pairs():
    model = ModelEstimate(np.stack([np.eye(2), np.eye(2)]), np.array([0.5, 0.5]))
    empty = CooccurrenceSet(2, 2, {}, {})
    with pytest.raises(DataError, match="no co-occurrence pairs"):
        kl_objective(model, empty)
