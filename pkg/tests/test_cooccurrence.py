import numpy as np
import pytest

from cooclabel import (
    DataError,
    LabelDataset,
    ModelEstimate,
    SynthConfig,
    count_pairs,
    generate,
    population_cooccurrence,
    population_cooccurrences,
)
from helpers import population_pair_oracle, random_stochastic


def test_count_pairs_hand_example():
    # two annotators, three co-labeled items with label pairs (1,1),(1,2),(2,2)
    ds = LabelDataset.from_records(
        3, 2, 2,
        [(1, 1, 1), (1, 2, 1), (2, 1, 1), (2, 2, 2), (3, 1, 2), (3, 2, 2)],
    )
    cooc = count_pairs(ds)
    assert cooc.count(1, 2) == 3
    expected = np.array([[1 / 3, 1 / 3], [0.0, 1 / 3]])
    assert np.allclose(cooc.get(1, 2), expected, atol=1e-15)


def test_disjoint_annotators_share_no_pair():
    ds = LabelDataset.from_records(4, 2, 2, [(1, 1, 1), (2, 1, 2), (3, 2, 1), (4, 2, 2)])
    cooc = count_pairs(ds)
    assert not cooc.has(1, 2)
    with pytest.raises(DataError, match="no co-labeled items"):
        cooc.get(1, 2)


def test_transpose_orientation_exact():
    ds = LabelDataset.from_records(
        3, 2, 2,
        [(1, 1, 1), (1, 2, 2), (2, 1, 2), (2, 2, 1), (3, 1, 1), (3, 2, 1)],
    )
    cooc = count_pairs(ds)
    assert np.array_equal(cooc.get(2, 1), cooc.get(1, 2).T)


def test_pair_pmf_sums_to_one():
    cfg = SynthConfig(n_items=500, n_annotators=4, n_classes=3, p=0.6, regime="all_random", seed=3)
    ds, _, _ = generate(cfg)
    cooc = count_pairs(ds)
    assert cooc.pairs
    for pmf in cooc.pairs.values():
        assert abs(pmf.sum() - 1.0) <= 1e-9
        assert np.all(pmf >= 0)


def test_empirical_matches_population_at_scale():
    cfg = SynthConfig(n_items=100000, n_annotators=3, n_classes=3, p=1.0, regime="all_random", seed=11)
    ds, truth, _ = generate(cfg)
    cooc = count_pairs(ds)
    for m in range(1, 4):
        for l in range(m + 1, 4):
            pop = population_cooccurrence(truth, m, l)
            assert np.max(np.abs(cooc.get(m, l) - pop)) <= 0.01


def test_population_cooccurrence_identity_confusions():
    k = 4
    model = ModelEstimate(np.stack([np.eye(k), np.eye(k)]), np.full(k, 1 / k))
    assert np.allclose(population_cooccurrence(model, 1, 2), np.eye(k) / k, atol=1e-15)


def test_population_cooccurrence_hand_product():
    a_m = np.array([[0.8, 0.3], [0.2, 0.7]])
    model = ModelEstimate(np.stack([a_m, np.eye(2)]), np.array([0.5, 0.5]))
    got = population_cooccurrence(model, 1, 2)
    assert np.allclose(got, [[0.40, 0.15], [0.10, 0.35]], atol=1e-12)
    oracle = population_pair_oracle(a_m, np.eye(2), np.array([0.5, 0.5]))
    assert np.allclose(got, oracle, atol=1e-15)


def test_population_cooccurrence_matches_oracle_random():
    rng = np.random.default_rng(5)
    for _ in range(10):
        k = int(rng.integers(2, 5))
        a1, a2 = random_stochastic(rng, k), random_stochastic(rng, k)
        prior = rng.random(k)
        prior /= prior.sum()
        model = ModelEstimate(np.stack([a1, a2]), prior)
        got = population_cooccurrence(model, 1, 2)
        assert np.allclose(got, population_pair_oracle(a1, a2, prior), atol=1e-14)
        assert abs(got.sum() - 1.0) <= 1e-12
        assert np.all(got >= 0)


def test_population_rejects_equal_indices():
    model = ModelEstimate(np.stack([np.eye(2), np.eye(2)]), np.array([0.5, 0.5]))
    with pytest.raises(DataError, match="distinct"):
        population_cooccurrence(model, 1, 1)


def test_population_set_covers_all_pairs():
    rng = np.random.default_rng(9)
    conf = np.stack([random_stochastic(rng, 3) for _ in range(4)])
    model = ModelEstimate(conf, np.full(3, 1 / 3))
    cooc = population_cooccurrences(model, count=100)
    assert len(cooc.pairs) == 6
    assert cooc.count(2, 4) == 100


def test_concentration_rate():
    # median Frobenius error of the empirical pair PMF scales like 1/sqrt(S)
    rng = np.random.default_rng(21)
    a1, a2 = random_stochastic(rng, 3), random_stochastic(rng, 3)
    prior = np.full(3, 1 / 3)
    pop = population_pair_oracle(a1, a2, prior)
    flat = pop.ravel()
    medians = {}
    for s in (100, 1600):
        errors = []
        for _ in range(40):
            draws = rng.choice(9, size=s, p=flat)
            emp = np.bincount(draws, minlength=9).reshape(3, 3) / s
            errors.append(np.linalg.norm(emp - pop))
        medians[s] = np.median(errors)
    # quadrupling S twice should shrink the error by ~4, within slack
    ratio = medians[100] / medians[1600]
    assert 4 / 1.6 <= ratio <= 4 * 1.6


def test_expectation_consistency():
    # averaging count_pairs output over many independent datasets drawn from
    # one fixed model converges entry-wise to the population PMF
    rng = np.random.default_rng(77)
    a1, a2 = random_stochastic(rng, 3), random_stochastic(rng, 3)
    prior = np.array([0.2, 0.5, 0.3])
    truth = ModelEstimate(np.stack([a1, a2]), prior)
    pop = population_cooccurrence(truth, 1, 2)
    n = 400
    reps = 200
    total = np.zeros((3, 3))
    for _ in range(reps):
        labels = rng.choice(3, size=n, p=prior)
        records = []
        for item in range(n):
            for m, a in ((1, a1), (2, a2)):
                records.append((item + 1, m, int(rng.choice(3, p=a[:, labels[item]])) + 1))
        ds = LabelDataset.from_records(n, 2, 3, records)
        total += count_pairs(ds).get(1, 2)
    assert np.max(np.abs(total / reps - pop)) <= 0.006
