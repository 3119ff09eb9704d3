"""The four predictor variants and their training loops.

* physics: calibrated car-following rollout, no learning;
* nn: recurrent net trained on ground-truth future accelerations;
* pinn: same net, loss blends data error and deviation from the (frozen)
  physics prediction with weight mu;
* perl: net trained on residuals (truth minus physics), final prediction
  is physics + residual.

All training runs are bit-deterministic given (config, seeds): one RNG
drives both batch shuffling and dropout, so variants sharing a seed
consume the stream identically (pinn with mu=1 reproduces nn exactly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import serialize
from .domain import SplitIndex, TrajectorySample
from .errors import ConfigError, NumericError
from .ingest import NormStats, compute_norm_stats, sample_features
from .neuralnet import AdamState, NetConfig, RecurrentNet, adam_step, forward_batch, backward, init_net
from .physics import PhysicsParams, physics_rollout

VARIANTS = ("physics", "nn", "pinn", "perl")


@dataclass(frozen=True)
class TrainConfig:
    variant: str
    seed: int
    max_epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 20
    mu: float = 0.5   # pinn loss weight on the data term

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if not (0.0 <= self.mu <= 1.0):
            raise ConfigError("mu must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant, "seed": self.seed,
            "max_epochs": self.max_epochs, "batch_size": self.batch_size,
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
            "eps": self.eps, "patience": self.patience, "mu": self.mu,
        }


@dataclass
class TrainReport:
    variant: str
    config: dict
    net_config: dict
    per_epoch: list[dict]   # {epoch, train_loss, mse_a_val, mse_v_val}
    best_epoch: int
    seeds: dict
    test_metrics: dict | None = None

    def to_dict(self) -> dict:
        return {
            "variant": self.variant, "config": self.config,
            "net_config": self.net_config, "per_epoch": self.per_epoch,
            "best_epoch": self.best_epoch, "seeds": self.seeds,
            "test_metrics": self.test_metrics,
        }

    def write_json(self, path) -> None:
        serialize.write_json(path, self.to_dict())


@dataclass
class PredictionRecord:
    sample_id: int
    predicted_accel: np.ndarray     # (t_fwd,)
    predicted_speed: np.ndarray     # (t_fwd,)
    physics_component: np.ndarray | None = None   # perl only
    residual_component: np.ndarray | None = None  # perl only
    collision_in_rollout: bool = False


def reconstruct_speed(v0: float, accel: np.ndarray, delta: float) -> np.ndarray:
    """Cumulative speed from predicted accelerations: v_j = v0 + delta*sum."""
    return v0 + delta * np.cumsum(accel, axis=-1)


def make_residual_targets(samples: list[TrajectorySample], params: PhysicsParams,
                          delta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residual targets r = truth - physics prediction, per sample.

    Returns (residuals (n, t_fwd), physics predictions (n, t_fwd),
    collision flags (n,))."""
    n = len(samples)
    t_fwd = samples[0].t_fwd
    phys = np.empty((n, t_fwd))
    flags = np.zeros(n, dtype=bool)
    for i, s in enumerate(samples):
        phys[i], flags[i] = physics_rollout(s, params, delta)
    truth = np.stack([s.ego_future_accel for s in samples])
    return truth - phys, phys, flags


def compose_prediction(phys: np.ndarray, resid: np.ndarray):
    """Sum physics + residual so the decomposition is bit-exact.

    Returns (total, phys_stored, resid_stored) with the smaller-magnitude
    component recomputed as total - larger (Fast2Sum), which makes both
    total - phys_stored - resid_stored and total - resid_stored -
    phys_stored exactly zero in float64.
    """
    total = phys + resid
    phys_big = np.abs(phys) >= np.abs(resid)
    small = total - np.where(phys_big, phys, resid)
    return total, np.where(phys_big, phys, small), np.where(phys_big, small, resid)


def _stack_features(samples, stats: NormStats) -> np.ndarray:
    return np.stack([sample_features(s, stats) for s in samples])


def _val_metrics(pred: np.ndarray, truth: np.ndarray, v0: np.ndarray,
                 delta: float) -> tuple[float, float]:
    mse_a = float(np.mean((truth - pred) ** 2))
    v_pred = reconstruct_speed(v0[:, None], pred, delta)
    v_true = reconstruct_speed(v0[:, None], truth, delta)
    mse_v = float(np.mean((v_true - v_pred) ** 2))
    return mse_a, mse_v


def _train_loop(x_train, targets, pinn_phys, x_val, val_truth, val_phys, v0_val,
                tconf: TrainConfig, nconf: NetConfig, stats: NormStats,
                delta: float) -> tuple[RecurrentNet, TrainReport]:
    """Shared Adam/BPTT loop.

    targets are what the net regresses on (truth, or residuals for perl);
    pinn_phys (n, t_fwd) switches on the blended pinn loss; val_phys is
    added to the net's validation output before scoring (perl
    composition).
    """
    n, t_fwd = targets.shape
    net = init_net(nconf, norm_stats=stats)
    state = AdamState.for_net(net, lr=tconf.lr, beta1=tconf.beta1,
                              beta2=tconf.beta2, eps=tconf.eps)
    rng = np.random.default_rng(tconf.seed)
    mu = tconf.mu
    best = (float("inf"), -1, net.copy_params())
    per_epoch = []
    bad = 0
    for epoch in range(1, tconf.max_epochs + 1):
        perm = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, tconf.batch_size):
            idx = perm[start:start + tconf.batch_size]
            xb, tb = x_train[idx], targets[idx]
            y, cache = forward_batch(net, xb, "train", dropout_rng=rng)
            scale = y.shape[0] * t_fwd
            if pinn_phys is None:
                loss = float(np.mean((y - tb) ** 2))
                grad = 2.0 * (y - tb) / scale
            else:
                pb = pinn_phys[idx]
                loss = mu * float(np.mean((y - tb) ** 2)) \
                    + (1.0 - mu) * float(np.mean((y - pb) ** 2))
                grad = (2.0 * mu * (y - tb) + 2.0 * (1.0 - mu) * (y - pb)) / scale
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {start // tconf.batch_size}")
            grads = backward(net, cache, grad)
            adam_step(net, grads, state)
            epoch_losses.append(loss)
        y_val, _ = forward_batch(net, x_val, "eval")
        pred_val = y_val if val_phys is None else val_phys + y_val
        mse_a, mse_v = _val_metrics(pred_val, val_truth, v0_val, delta)
        per_epoch.append({
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)),
            "mse_a_val": mse_a,
            "mse_v_val": mse_v,
        })
        if mse_a < best[0]:
            best = (mse_a, epoch, net.copy_params())
            bad = 0
        else:
            bad += 1
            if bad >= tconf.patience:
                break
    net.params = best[2]
    report = TrainReport(
        variant=tconf.variant, config=tconf.to_dict(), net_config=nconf.to_dict(),
        per_epoch=per_epoch, best_epoch=best[1],
        seeds={"train_seed": tconf.seed, "net_seed": nconf.seed},
    )
    return net, report


def _split_lists(samples, split: SplitIndex):
    train = [s for s in samples if s.sample_id in split.train_ids]
    val = [s for s in samples if s.sample_id in split.val_ids]
    if not train or not val:
        raise ConfigError("train and val splits must be non-empty")
    return train, val


def train_nn(samples, split, tconf: TrainConfig, nconf: NetConfig, delta: float,
             stats: NormStats | None = None):
    train, val = _split_lists(samples, split)
    stats = stats or compute_norm_stats(samples, split)
    x_train = _stack_features(train, stats)
    x_val = _stack_features(val, stats)
    targets = np.stack([s.ego_future_accel for s in train])
    val_truth = np.stack([s.ego_future_accel for s in val])
    v0_val = np.array([s.ego_speed_at_t0 for s in val])
    return _train_loop(x_train, targets, None, x_val, val_truth, None, v0_val,
                       tconf, nconf, stats, delta)


def train_pinn(samples, split, tconf: TrainConfig, nconf: NetConfig,
               params: PhysicsParams, delta: float,
               stats: NormStats | None = None):
    train, val = _split_lists(samples, split)
    stats = stats or compute_norm_stats(samples, split)
    x_train = _stack_features(train, stats)
    x_val = _stack_features(val, stats)
    targets = np.stack([s.ego_future_accel for s in train])
    _, phys_train, _ = make_residual_targets(train, params, delta)
    val_truth = np.stack([s.ego_future_accel for s in val])
    v0_val = np.array([s.ego_speed_at_t0 for s in val])
    return _train_loop(x_train, targets, phys_train, x_val, val_truth, None,
                       v0_val, tconf, nconf, stats, delta)


def train_perl(samples, split, tconf: TrainConfig, nconf: NetConfig,
               params: PhysicsParams, delta: float,
               stats: NormStats | None = None):
    train, val = _split_lists(samples, split)
    stats = stats or compute_norm_stats(samples, split)
    x_train = _stack_features(train, stats)
    x_val = _stack_features(val, stats)
    residuals, _, _ = make_residual_targets(train, params, delta)
    _, phys_val, _ = make_residual_targets(val, params, delta)
    val_truth = np.stack([s.ego_future_accel for s in val])
    v0_val = np.array([s.ego_speed_at_t0 for s in val])
    return _train_loop(x_train, residuals, None, x_val, val_truth, phys_val,
                       v0_val, tconf, nconf, stats, delta)


def predict(variant: str, sample: TrajectorySample, *, delta: float,
            params: PhysicsParams | None = None,
            net: RecurrentNet | None = None) -> PredictionRecord:
    """Produce a PredictionRecord for one sample with trained artifacts."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    collided = False
    phys_stored = resid_stored = None
    if variant == "physics":
        if params is None:
            raise ConfigError("physics variant needs calibrated params")
        accel, collided = physics_rollout(sample, params, delta)
    elif variant in ("nn", "pinn"):
        if net is None or net.norm_stats is None:
            raise ConfigError(f"{variant} variant needs a trained net with norm stats")
        x = sample_features(sample, net.norm_stats)
        accel, _ = forward_batch(net, x[None], "eval")
        accel = accel[0]
    else:  # perl
        if net is None or net.norm_stats is None or params is None:
            raise ConfigError("perl variant needs calibrated params and a trained net")
        phys, collided = physics_rollout(sample, params, delta)
        x = sample_features(sample, net.norm_stats)
        resid, _ = forward_batch(net, x[None], "eval")
        accel, phys_stored, resid_stored = compose_prediction(phys, resid[0])
    return PredictionRecord(
        sample_id=sample.sample_id,
        predicted_accel=accel,
        predicted_speed=reconstruct_speed(sample.ego_speed_at_t0, accel, delta),
        physics_component=phys_stored,
        residual_component=resid_stored,
        collision_in_rollout=collided,
    )


def predict_many(variant: str, samples: list[TrajectorySample], *, delta: float,
                 params: PhysicsParams | None = None,
                 net: RecurrentNet | None = None) -> list[PredictionRecord]:
    return [predict(variant, s, delta=delta, params=params, net=net) for s in samples]
