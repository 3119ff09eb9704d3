"""Core data types and the train/val/test split.

Conventions used everywhere in the package:

* positions are front-of-vehicle longitudinal coordinates increasing
  downstream (a leader has a larger position than its follower);
* spacing is the front-position difference to the immediate predecessor
  and ignores vehicle length;
* vehicle index 0 is the most-downstream observed leader, index
  ``k_vehicles - 1`` is the ego whose future acceleration is predicted;
* all time series live on a uniform grid with step ``delta`` seconds and
  the last history point is the prediction origin t0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# Lead vehicle has no observed predecessor; its spacing slot is a NaN
# sentinel so an accidental arithmetic read poisons the result.
NO_LEADER = float("nan")


@dataclass(frozen=True)
class DatasetConfig:
    """Sample-extraction geometry and split fractions."""

    delta: float
    k_vehicles: int
    t_back: int
    t_fwd: int
    omega_train: float
    omega_val: float
    seed: int

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.k_vehicles < 2:
            raise ConfigError("k_vehicles must be at least 2")
        if self.t_back < 1 or self.t_fwd < 1:
            raise ConfigError("t_back and t_fwd must be at least 1")
        if not (0 < self.omega_train):
            raise ConfigError("omega_train must be positive")
        if self.omega_val < 0:
            raise ConfigError("omega_val must be non-negative")
        if self.omega_train + self.omega_val >= 1:
            raise ConfigError("omega_train + omega_val must be < 1")


@dataclass(frozen=True)
class VehicleState:
    """Kinematic state of one vehicle at one grid time."""

    accel: float
    speed: float
    spacing: float  # NO_LEADER sentinel for the lead vehicle


@dataclass
class TrajectorySample:
    """One training/evaluation unit: K chained vehicles over a window.

    History arrays have shape (K, t_back) and cover times
    t0-(t_back-1)*delta .. t0; future arrays have length t_fwd and cover
    t0+delta .. t0+t_fwd*delta.  ``hist_spacing[0]`` is the NO_LEADER
    sentinel row and must never be read as a number.
    """

    sample_id: int
    hist_accel: np.ndarray       # (K, t_back)
    hist_speed: np.ndarray       # (K, t_back)
    hist_spacing: np.ndarray     # (K, t_back); row 0 is NaN sentinel
    hist_position: np.ndarray    # (K, t_back) absolute positions, m
    ego_future_accel: np.ndarray   # (t_fwd,)
    ego_speed_at_t0: float
    leader_future_accel: np.ndarray  # (K-1, t_fwd)

    @property
    def k_vehicles(self) -> int:
        return self.hist_accel.shape[0]

    @property
    def t_back(self) -> int:
        return self.hist_accel.shape[1]

    @property
    def t_fwd(self) -> int:
        return self.ego_future_accel.shape[0]

    def spacing_of(self, k: int) -> np.ndarray:
        """Spacing series of vehicle k; fails loudly for the lead vehicle."""
        if k == 0:
            raise ValueError("lead vehicle has no spacing (no observed leader)")
        return self.hist_spacing[k]

    def validate(self, atol: float = 1e-6) -> None:
        """Check the structural invariants; raises DataError on violation."""
        from .errors import DataError

        k, tb = self.hist_accel.shape
        for name in ("hist_speed", "hist_spacing", "hist_position"):
            if getattr(self, name).shape != (k, tb):
                raise DataError(f"{name} shape mismatch in sample {self.sample_id}")
        if self.leader_future_accel.shape != (k - 1, self.t_fwd):
            raise DataError(f"leader_future_accel shape mismatch in sample {self.sample_id}")
        if np.any(self.hist_speed < 0):
            raise DataError(f"negative speed in sample {self.sample_id}")
        gaps = self.hist_position[:-1] - self.hist_position[1:]
        if np.any(gaps <= 0):
            raise DataError(f"non-positive spacing in sample {self.sample_id}")
        if np.max(np.abs(self.hist_spacing[1:] - gaps)) > atol:
            raise DataError(f"spacing/position inconsistency in sample {self.sample_id}")
        if not np.all(np.isnan(self.hist_spacing[0])):
            raise DataError(f"lead-vehicle spacing must be the sentinel in sample {self.sample_id}")


@dataclass(frozen=True)
class SplitIndex:
    """Disjoint train/val/test sample-id sets."""

    train_ids: frozenset
    val_ids: frozenset
    test_ids: frozenset

    def __post_init__(self):
        if self.train_ids & self.val_ids or self.train_ids & self.test_ids \
                or self.val_ids & self.test_ids:
            raise ConfigError("split sets must be pairwise disjoint")

    @property
    def all_ids(self) -> frozenset:
        return self.train_ids | self.val_ids | self.test_ids


def split_dataset(ids, config: DatasetConfig) -> SplitIndex:
    """Randomly partition sample ids into train/val/test.

    Deterministic in (ids, config.seed).  Sizes follow the floor rule:
    |train| = floor(omega_train*I), |val| = floor(omega_val*I), test gets
    the remainder.
    """
    ids = sorted(ids)
    n = len(ids)
    if n < 3:
        raise ConfigError("need at least 3 samples to split")
    n_train = int(np.floor(config.omega_train * n))
    n_val = int(np.floor(config.omega_val * n))
    n_test = n - n_train - n_val
    if n_train == 0 or n_val == 0 or n_test == 0:
        raise ConfigError(
            f"split of {n} samples with fractions "
            f"({config.omega_train}, {config.omega_val}) leaves an empty set"
        )
    perm = np.random.default_rng(config.seed).permutation(n)
    shuffled = [ids[i] for i in perm]
    return SplitIndex(
        train_ids=frozenset(shuffled[:n_train]),
        val_ids=frozenset(shuffled[n_train:n_train + n_val]),
        test_ids=frozenset(shuffled[n_train + n_val:]),
    )
