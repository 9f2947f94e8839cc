import numpy as np
import pytest

from sumorl.data import OfflineDataset
from sumorl.dynamics import EnsembleConfig, GaussianEnsemble, train_ensemble
from sumorl.envs import generate_dataset
from sumorl.errors import EmptyDatasetError, ShapeError
from sumorl.estimators import max_pairwise_diff

SMALL = EnsembleConfig(n_members=3, hidden=(32, 32), epochs=5)


def linear_dataset(n, seed=0):
    rng = np.random.default_rng(seed)
    s, a = rng.uniform(-1, 1, (n, 1)), rng.uniform(-1, 1, (n, 1))
    return OfflineDataset(s, a, np.zeros(n), s + a)


@pytest.fixture(scope="module")
def linear_model():
    return train_ensemble(linear_dataset(5000), EnsembleConfig(n_members=3, hidden=(64, 64),
                                                               epochs=20), seed=0)


def test_linear_system_is_learned(linear_model):
    test = linear_dataset(1000, seed=1)
    pred = linear_model.predict_all(test.s, test.a)
    err = np.abs(pred.mean[:, :, 0] - test.s_next[:, 0])
    assert err.mean() < 0.01


def test_holdout_nll_and_logvar_decrease(linear_model):
    log = linear_model.train_log
    assert all(f < i for f, i in zip(log["holdout_nll_final"], log["holdout_nll_init"]))
    fresh = GaussianEnsemble.initialize(linear_dataset(5000), linear_model.config, seed=0)
    s, a = np.zeros((10, 1)), np.zeros((10, 1))
    assert linear_model.predict_all(s, a).var.mean() < fresh.predict_all(s, a).var.mean()


def test_constant_target():
    rng = np.random.default_rng(0)
    ds = OfflineDataset(rng.uniform(-1, 1, (2000, 1)), rng.uniform(-1, 1, (2000, 1)),
                        np.full(2000, 0.7), np.full((2000, 1), 0.3))
    ens = train_ensemble(ds, EnsembleConfig(n_members=2, hidden=(32, 32), epochs=40), seed=0)
    pred = ens.predict_all(ds.s[:500], ds.a[:500])
    assert np.abs(pred.mean[..., 0] - 0.3).mean() < 0.01
    assert np.abs(pred.mean[..., 1] - 0.7).max() < 0.01


@pytest.mark.parametrize("variant", ["random", "medium", "expert"])
def test_holdout_nll_improves_on_toy_data(variant):
    ds, _ = generate_dataset(variant, 10, seed=0)
    for seed in range(5):
        log = train_ensemble(ds, SMALL, seed=seed).train_log
        assert all(f < i for f, i in zip(log["holdout_nll_final"], log["holdout_nll_init"]))


def test_training_is_seed_deterministic():
    ds = linear_dataset(500)
    assert train_ensemble(ds, SMALL, seed=4).params_equal(train_ensemble(ds, SMALL, seed=4))
    assert not train_ensemble(ds, SMALL, seed=4).params_equal(train_ensemble(ds, SMALL, seed=5))


def test_empty_dataset():
    with pytest.raises(EmptyDatasetError):
        train_ensemble(linear_dataset(10).subset(np.zeros(10, dtype=bool)), SMALL)


def test_untrained_members_differ_and_match_forward():
    ens = GaussianEnsemble.initialize(linear_dataset(100), SMALL, seed=0)
    s, a = np.array([[0.3]]), np.array([[-0.2]])
    pred = ens.predict_all(s, a)
    assert max_pairwise_diff(pred)[0] > 0
    assert np.all(pred.var > 0)
    for i in range(ens.n_members):
        mean, var = ens.member_forward(i, s, a)
        np.testing.assert_array_equal(pred.mean[i], mean)
        # Independent oracle: raw output of the member network, de-standardised by hand.
        x = (np.array([[0.3, -0.2]]) - ens.in_shift) / ens.in_scale
        mu, lv = ens.members[i].forward(x)
        expected = mu * ens.out_scale + ens.out_shift
        expected[:, 0] += 0.3
        np.testing.assert_allclose(mean, expected, rtol=1e-12)
        np.testing.assert_allclose(var, np.exp(lv) * ens.out_scale ** 2, rtol=1e-12)


def test_identical_members_predict_identically():
    ens = GaussianEnsemble.initialize(linear_dataset(100), SMALL, seed=0)
    for m in ens.members[1:]:
        m.params = [p.copy() for p in ens.members[0].params]
    pred = ens.predict_all(np.zeros((4, 1)), np.ones((4, 1)))
    np.testing.assert_array_equal(max_pairwise_diff(pred), 0.0)


def test_shape_errors():
    ens = GaussianEnsemble.initialize(linear_dataset(100), SMALL, seed=0)
    with pytest.raises(ShapeError):
        ens.predict_all(np.zeros((2, 2)), np.zeros((2, 1)))


def test_zero_variance_sample_equals_mean():
    ens = GaussianEnsemble.initialize(linear_dataset(100), SMALL, seed=0)
    ens.out_scale = np.full_like(ens.out_scale, 1e-200)
    s, r, member = ens.sample_step(np.zeros((3, 1)), np.zeros((3, 1)), np.random.default_rng(0))
    np.testing.assert_allclose(s, ens.out_shift[0] + 0.0)


def test_member_selection_is_uniform():
    ens = GaussianEnsemble.initialize(linear_dataset(100), EnsembleConfig(hidden=(8,)), seed=0)
    _, r, member = ens.sample_step(np.zeros((10_000, 1)), np.zeros((10_000, 1)),
                                   np.random.default_rng(1))
    counts = np.bincount(member, minlength=7)
    p = 1 / 7
    sigma = np.sqrt(10_000 * p * (1 - p))
    assert np.all(np.abs(counts - 10_000 * p) <= 3 * sigma)
    assert np.all((r >= 0) & (r <= 1))


def test_sampling_is_reproducible():
    ens = GaussianEnsemble.initialize(linear_dataset(100), SMALL, seed=0)
    a = ens.sample_step(np.ones((5, 1)), np.ones((5, 1)), np.random.default_rng(3))
    b = ens.sample_step(np.ones((5, 1)), np.ones((5, 1)), np.random.default_rng(3))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_save_load_round_trip(tmp_path):
    ens = train_ensemble(linear_dataset(300), SMALL, seed=0)
    ens.save(tmp_path / "m.npz")
    back = GaussianEnsemble.load(tmp_path / "m.npz")
    assert back.params_equal(ens) and back.train_log == ens.train_log
    s = np.ones((2, 1))
    np.testing.assert_array_equal(back.predict_all(s, s).mean, ens.predict_all(s, s).mean)
    ens.save(tmp_path / "m2.npz")
    assert (tmp_path / "m.npz").read_bytes() == (tmp_path / "m2.npz").read_bytes()
