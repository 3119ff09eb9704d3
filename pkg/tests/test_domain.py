import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_sample, make_samples
from phyres.domain import DatasetConfig, SplitIndex, split_dataset
from phyres.errors import ConfigError, DataError


def _config(**overrides):
    base = dict(delta=0.1, k_vehicles=3, t_back=6, t_fwd=4,
                omega_train=0.6, omega_val=0.2, seed=0)
    base.update(overrides)
    return DatasetConfig(**base)


class TestDatasetConfig:
    def test_valid(self):
        _config()

    @pytest.mark.parametrize("overrides", [
        {"delta": 0.0}, {"delta": -0.1}, {"k_vehicles": 1},
        {"t_back": 0}, {"t_fwd": 0}, {"omega_train": 0.0},
        {"omega_val": -0.1}, {"omega_train": 0.8, "omega_val": 0.2},
    ])
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            _config(**overrides)


class TestTrajectorySample:
    def test_shapes_and_properties(self):
        s = make_sample(k=3, tb=6, tf=4)
        assert s.k_vehicles == 3 and s.t_back == 6 and s.t_fwd == 4
        s.validate()

    def test_spacing_of_lead_vehicle_fails(self):
        s = make_sample()
        with pytest.raises(ValueError):
            s.spacing_of(0)
        assert np.all(np.isfinite(s.spacing_of(1)))

    def test_validate_rejects_negative_speed(self):
        s = make_sample()
        s.hist_speed[1, 2] = -0.5
        with pytest.raises(DataError):
            s.validate()

    def test_validate_rejects_non_positive_gap(self):
        s = make_sample()
        s.hist_position[0] = s.hist_position[1] - 1.0
        with pytest.raises(DataError):
            s.validate()

    def test_validate_rejects_spacing_mismatch(self):
        s = make_sample()
        s.hist_spacing[1, 0] += 1.0
        with pytest.raises(DataError):
            s.validate()

    def test_validate_requires_sentinel_row(self):
        s = make_sample()
        s.hist_spacing[0] = 1.0
        with pytest.raises(DataError):
            s.validate()


class TestSplitIndex:
    def test_disjointness_enforced(self):
        with pytest.raises(ConfigError):
            SplitIndex(train_ids=frozenset({1, 2}), val_ids=frozenset({2}),
                       test_ids=frozenset())

    def test_all_ids(self):
        s = SplitIndex(frozenset({1}), frozenset({2}), frozenset({3}))
        assert s.all_ids == {1, 2, 3}


class TestSplitDataset:
    def test_floor_sizes(self):
        split = split_dataset(range(100), _config())
        assert len(split.train_ids) == 60
        assert len(split.val_ids) == 20
        assert len(split.test_ids) == 20

    def test_deterministic_and_seed_sensitive(self):
        ids = list(range(50))
        a = split_dataset(ids, _config(seed=7))
        b = split_dataset(ids, _config(seed=7))
        c = split_dataset(ids, _config(seed=8))
        assert a == b
        assert a != c

    def test_order_insensitive(self):
        ids = list(range(50))
        shuffled = list(reversed(ids))
        assert split_dataset(ids, _config()) == split_dataset(shuffled, _config())

    def test_empty_set_rejected(self):
        with pytest.raises(ConfigError):
            split_dataset(range(4), _config(omega_train=0.9, omega_val=0.05))

    def test_too_few_samples(self):
        with pytest.raises(ConfigError):
            split_dataset([1, 2], _config())

    @given(n=st.integers(min_value=10, max_value=300),
           seed=st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_partition_property(self, n, seed):
        ids = list(range(n))
        split = split_dataset(ids, _config(seed=seed))
        assert split.all_ids == set(ids)
        total = len(split.train_ids) + len(split.val_ids) + len(split.test_ids)
        assert total == n
        assert len(split.train_ids) == int(np.floor(0.6 * n))
        assert len(split.val_ids) == int(np.floor(0.2 * n))


def test_make_samples_have_unique_ids():
    samples = make_samples(10)
    assert len({s.sample_id for s in samples}) == 10
    for s in samples:
        s.validate()
