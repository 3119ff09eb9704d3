"""Car-following models as pure acceleration predictors.

Three models are supported:

* time-shift model: the ego's future acceleration is its leader's
  acceleration shifted back in time by (position distance)/(wave speed);
* IDM: continuous acceleration from speed, gap and speed difference with
  a desired-headway term;
* FVD: optimal-speed deficit plus a velocity-difference term.

Multi-step IDM/FVD prediction is an explicit-Euler self-rollout with a
teacher-forced leader (its realized future accelerations are given) and a
free-running ego.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import TrajectorySample
from .errors import ConfigError, NumericError

ROLLOUT_GAP_FLOOR = 0.1  # m; used when a rollout gap collapses


@dataclass(frozen=True)
class NewellParams:
    w: float  # wave speed, m/s

    def __post_init__(self):
        if self.w <= 0:
            raise ConfigError("wave speed must be positive")


@dataclass(frozen=True)
class IdmParams:
    v_free: float   # free-flow speed, m/s
    a_max: float    # maximum acceleration, m/s^2
    b_comf: float   # comfortable deceleration, m/s^2
    s0: float       # minimum spacing, m
    t_gap: float    # desired time gap, s

    def __post_init__(self):
        for name in ("v_free", "a_max", "b_comf", "s0", "t_gap"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"IDM parameter {name} must be positive")


@dataclass(frozen=True)
class FvdParams:
    kappa: float    # 1/s
    lam: float      # 1/s
    v1: float       # m/s
    v2: float       # m/s
    c1: float       # 1/m
    c2: float       # dimensionless
    l_c: float      # m, length offset in the optimal-speed argument

    def __post_init__(self):
        if self.kappa < 0 or self.lam < 0:
            raise ConfigError("FVD sensitivities must be non-negative")
        if self.c1 <= 0:
            raise ConfigError("FVD c1 must be positive")


PhysicsParams = NewellParams | IdmParams | FvdParams

# Reference optimal-speed constants used when only kappa/lambda are fitted.
FVD_FIXED = {"v1": 6.75, "v2": 7.91, "c1": 0.13, "c2": 1.54, "l_c": 5.0}


def model_name(params: PhysicsParams) -> str:
    return {NewellParams: "newell", IdmParams: "idm", FvdParams: "fvd"}[type(params)]


def idm_accel(v, dv, gap, params: IdmParams):
    """IDM acceleration; dv = v_ego - v_leader (positive when closing).

    Accepts scalars or equally-shaped arrays.
    """
    if np.any(np.asarray(gap) <= 0):
        raise NumericError("IDM requires a positive gap")
    s_star = params.s0 + params.t_gap * v - v * dv / (2.0 * np.sqrt(params.a_max * params.b_comf))
    return params.a_max * (1.0 - (v / params.v_free) ** 4 - (s_star / gap) ** 2)


def fvd_accel(v, dv, gap, params: FvdParams):
    """FVD acceleration kappa*(V(gap) - v) + lambda*dv.

    dv follows the same ego-minus-leader convention as idm_accel and
    enters with a positive sign, matching the adopted model form.
    """
    v_opt = params.v1 + params.v2 * np.tanh(params.c1 * (gap - params.l_c) - params.c2)
    return params.kappa * (v_opt - v) + params.lam * dv


def newell_predict_batch(lead_hist_accel: np.ndarray, dist_t0: np.ndarray,
                         t_fwd: int, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized time-shift prediction for a batch of samples.

    lead_hist_accel: (n, K-1, t_back) leader acceleration histories
    (row 0 = farthest leader).  dist_t0: (n, K-1) position distances from
    the ego at t0.  Returns (predictions (n, t_fwd), chosen leader index
    (n,)).

    Leader choice: the closest leader whose shifted source times all fall
    inside the observed history window; if none qualifies, the farthest
    leader with source times clamped to the window's endpoints.
    """
    n, n_lead, tb = lead_hist_accel.shape
    shift_steps = dist_t0 / delta  # divided by w by the caller
    ok = (shift_steps >= t_fwd) & (shift_steps <= tb)
    # argmax on the reversed axis finds the largest qualifying index
    rev_ok = ok[:, ::-1]
    chosen = np.where(rev_ok.any(axis=1), n_lead - 1 - rev_ok.argmax(axis=1), 0)
    rows = np.arange(n)
    shift = shift_steps[rows, chosen]  # in steps
    preds = np.empty((n, t_fwd))
    src_series = lead_hist_accel[rows, chosen]  # (n, tb)
    for j in range(1, t_fwd + 1):
        idx = np.clip((tb - 1) + j - shift, 0.0, tb - 1.0)
        lo = np.floor(idx).astype(int)
        hi = np.minimum(lo + 1, tb - 1)
        frac = idx - lo
        preds[:, j - 1] = (1.0 - frac) * src_series[rows, lo] + frac * src_series[rows, hi]
    return preds, chosen


def newell_predict(sample: TrajectorySample, params: NewellParams, delta: float) -> np.ndarray:
    """Time-shift prediction for one sample over its horizon.

    The position distance to each leader is frozen at its t0 value for
    the whole horizon (the ego's future position is the very quantity
    being predicted).
    """
    ego_pos = sample.hist_position[-1, -1]
    dist = sample.hist_position[:-1, -1] - ego_pos  # (K-1,)
    preds, _ = newell_predict_batch(
        sample.hist_accel[None, :-1, :], dist[None, :] / params.w,
        sample.t_fwd, delta,
    )
    return preds[0]


def physics_rollout(sample: TrajectorySample, params: PhysicsParams,
                    delta: float) -> tuple[np.ndarray, bool]:
    """Predict the ego's future accelerations over the sample horizon.

    Returns (accel vector of length t_fwd, collision-in-rollout flag).
    The time-shift model reads the leader's observed history directly;
    IDM/FVD self-roll the ego forward while the immediate leader follows
    its realized future accelerations.
    """
    if isinstance(params, NewellParams):
        return newell_predict(sample, params, delta), False

    t_fwd = sample.t_fwd
    v_e = sample.ego_speed_at_t0
    x_e = sample.hist_position[-1, -1]
    v_l = sample.hist_speed[-2, -1]
    x_l = sample.hist_position[-2, -1]
    lead_acc = sample.leader_future_accel[-1]
    out = np.empty(t_fwd)
    collided = False
    for j in range(t_fwd):
        gap = x_l - x_e
        if gap <= 0.0:
            gap = ROLLOUT_GAP_FLOOR
            collided = True
        dv = v_e - v_l
        if isinstance(params, IdmParams):
            a = float(idm_accel(v_e, dv, gap, params))
        else:
            a = float(fvd_accel(v_e, dv, gap, params))
        if not np.isfinite(a):
            raise NumericError(f"non-finite rollout acceleration in sample {sample.sample_id}")
        out[j] = a
        v_e = max(v_e + a * delta, 0.0)
        x_e = x_e + v_e * delta
        v_l = max(v_l + lead_acc[j] * delta, 0.0)
        x_l = x_l + v_l * delta
    return out, collided


def one_step_batch(samples: list[TrajectorySample], params: PhysicsParams,
                   delta: float) -> np.ndarray:
    """First-future-step predictions for many samples (calibration kernel)."""
    if isinstance(params, NewellParams):
        lead_hist = np.stack([s.hist_accel[:-1] for s in samples])
        dist = np.stack([s.hist_position[:-1, -1] - s.hist_position[-1, -1] for s in samples])
        preds, _ = newell_predict_batch(lead_hist, dist / params.w, 1, delta)
        return preds[:, 0]
    v = np.array([s.ego_speed_at_t0 for s in samples])
    v_l = np.array([s.hist_speed[-2, -1] for s in samples])
    gap = np.array([s.hist_position[-2, -1] - s.hist_position[-1, -1] for s in samples])
    dv = v - v_l
    if isinstance(params, IdmParams):
        return idm_accel(v, dv, gap, params)
    return fvd_accel(v, dv, gap, params)
