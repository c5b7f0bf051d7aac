import numpy as np
import pytest

from cooclabel import DataError, SynthConfig, generate, validate_dataset
from cooclabel.data import validate_model


def test_same_seed_reproduces_exactly():
    cfg = SynthConfig(n_items=200, n_annotators=5, n_classes=3, p=0.6, regime="case2", seed=17)
    ds1, model1, labels1 = generate(cfg)
    ds2, model2, labels2 = generate(cfg)
    assert ds1.responses == ds2.responses
    assert np.array_equal(model1.confusions, model2.confusions)
    assert np.array_equal(labels1, labels2)


def test_different_seeds_differ():
    cfg1 = SynthConfig(n_items=200, n_annotators=5, n_classes=3, p=1.0, regime="case2", seed=1)
    cfg2 = SynthConfig(n_items=200, n_annotators=5, n_classes=3, p=1.0, regime="case2", seed=2)
    assert generate(cfg1)[0].responses != generate(cfg2)[0].responses


def test_case1_has_exactly_one_identity():
    for seed in range(5):
        cfg = SynthConfig(n_items=10, n_annotators=7, n_classes=3, p=1.0, regime="case1", seed=seed)
        _, model, _ = generate(cfg)
        identities = sum(
            np.array_equal(model.confusions[m], np.eye(3)) for m in range(7)
        )
        assert identities == 1


def test_case2_special_annotator_diagonally_dominant():
    for seed in range(5):
        cfg = SynthConfig(n_items=10, n_annotators=6, n_classes=4, p=1.0, regime="case2", seed=seed)
        _, model, _ = generate(cfg)
        dominant = 0
        for m in range(6):
            a = model.confusions[m]
            if all(a[k, k] == a[:, k].max() and np.argmax(a[:, k]) == k for k in range(4)):
                if all(a[k, k] > a[j, k] for k in range(4) for j in range(4) if j != k):
                    dominant += 1
        assert dominant >= 1


def test_p_one_labels_everything():
    cfg = SynthConfig(n_items=50, n_annotators=4, n_classes=2, p=1.0, regime="all_random", seed=2)
    ds, _, _ = generate(cfg)
    assert len(ds.responses) == 50 * 4


def test_retention_near_expectation():
    n, m, p = 4000, 5, 0.5
    cfg = SynthConfig(n_items=n, n_annotators=m, n_classes=3, p=p, regime="all_random", seed=3)
    ds, _, _ = generate(cfg)
    count = len(ds.responses)
    sigma = np.sqrt(n * m * p * (1 - p))
    assert abs(count - n * m * p) <= 3 * sigma


def test_outputs_validate():
    for seed, regime, p in [(0, "case1", 1.0), (1, "case2", 0.4), (2, "all_random", 0.8)]:
        cfg = SynthConfig(n_items=300, n_annotators=6, n_classes=3, p=p, regime=regime, seed=seed)
        ds, model, labels = generate(cfg)
        validate_dataset(ds)
        validate_model(model)
        assert labels.shape == (300,)
        assert labels.min() >= 1 and labels.max() <= 3


def test_conditional_frequencies_match_confusions():
    # empirical response frequencies given the true label converge to the
    # confusion columns
    for seed in range(10):
        cfg = SynthConfig(n_items=100000, n_annotators=2, n_classes=3, p=1.0,
                          regime="all_random", seed=200 + seed)
        ds, model, labels = generate(cfg)
        mat = ds.response_matrix()
        worst = 0.0
        for m in range(2):
            for k in range(3):
                idx = labels == k + 1
                freq = np.bincount(mat[idx, m] - 1, minlength=3) / idx.sum()
                worst = max(worst, float(np.max(np.abs(freq - model.confusions[m][:, k]))))
        assert worst <= 0.02


def test_custom_prior_respected():
    prior = np.array([0.1, 0.1, 0.8])
    cfg = SynthConfig(n_items=50000, n_annotators=1, n_classes=3, prior=prior,
                      p=1.0, regime="all_random", seed=4)
    _, model, labels = generate(cfg)
    assert np.array_equal(model.prior, prior)
    freq = np.bincount(labels - 1, minlength=3) / labels.size
    assert np.max(np.abs(freq - prior)) <= 0.01


def test_config_validation():
    with pytest.raises(DataError, match="labeling probability"):
        generate(SynthConfig(n_items=10, n_annotators=2, n_classes=2, p=0.0, seed=0))
    with pytest.raises(DataError, match="regime"):
        generate(SynthConfig(n_items=10, n_annotators=2, n_classes=2, regime="nope", seed=0))
    with pytest.raises(DataError, match="prior length"):
        generate(SynthConfig(n_items=10, n_annotators=2, n_classes=2,
                             prior=np.array([1.0]), seed=0))
    with pytest.raises(DataError, match="classes"):
        generate(SynthConfig(n_items=10, n_annotators=2, n_classes=1, seed=0))
