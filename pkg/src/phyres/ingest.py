"""Raw trajectory CSV parsing, sample extraction, normalization, persistence.

Raw CSV schema: header ``vehicle_id,time,position,speed,accel,leader_id``,
UTF-8, ``leader_id`` empty for no leader.  Chains are built from the
leader_id pointers only; turning noisy source data (e.g. NGSIM) into this
schema is the caller's responsibility.

Sample file: JSON lines.  Line 1 is a header object
``{"format_version": 1, "delta": ..., "k_vehicles": ..., "t_back": ...,
"t_fwd": ...}``; every following line is one sample object.  Floats carry
17 significant digits so the round trip is bit-exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import serialize
from .domain import DatasetConfig, SplitIndex, TrajectorySample
from .errors import DataError

SAMPLE_FORMAT_VERSION = 1
CSV_HEADER = ["vehicle_id", "time", "position", "speed", "accel", "leader_id"]


@dataclass
class VehicleSeries:
    """Uniform-grid time series of one vehicle."""

    vehicle_id: int
    leader_id: int | None
    t_start: float
    delta: float
    position: np.ndarray
    speed: np.ndarray
    accel: np.ndarray

    def __len__(self) -> int:
        return len(self.position)

    @property
    def t_end(self) -> float:
        return self.t_start + (len(self) - 1) * self.delta


def parse_trajectory_csv(path, delta: float, grid_atol: float = 1e-6) -> list[VehicleSeries]:
    """Parse a raw trajectory CSV into per-vehicle series.

    Validates the header, timestep uniformity against ``delta`` and
    duplicate (vehicle, time) pairs; errors name the offending row number
    (1-based, header = row 1).
    """
    rows_by_vehicle: dict[int, list[tuple[int, float, float, float, float, int | None]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: no rows")
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: bad header {header!r}, expected {CSV_HEADER}")
        n_rows = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(CSV_HEADER)} columns, got {len(row)}")
            try:
                vid = int(row[0])
                t = float(row[1])
                pos, spd, acc = float(row[2]), float(row[3]), float(row[4])
                lid = int(row[5]) if row[5].strip() != "" else None
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            rows_by_vehicle.setdefault(vid, []).append((lineno, t, pos, spd, acc, lid))
            n_rows += 1
    if n_rows == 0:
        raise DataError(f"{path}: no rows")

    series = []
    for vid, rows in rows_by_vehicle.items():
        rows.sort(key=lambda r: r[1])
        for (ln_a, t_a, *_), (ln_b, t_b, *_) in zip(rows, rows[1:]):
            dt = t_b - t_a
            if abs(dt) <= grid_atol:
                raise DataError(f"{path}:{ln_b}: duplicate time {t_b} for vehicle {vid}")
            if abs(dt - delta) > grid_atol:
                raise DataError(
                    f"{path}:{ln_b}: non-uniform timestep {dt!r} for vehicle {vid} (expected {delta})"
                )
        lids = {r[5] for r in rows}
        if len(lids) != 1:
            raise DataError(f"{path}: vehicle {vid} has inconsistent leader_id values {lids}")
        series.append(VehicleSeries(
            vehicle_id=vid,
            leader_id=rows[0][5],
            t_start=rows[0][1],
            delta=delta,
            position=np.array([r[2] for r in rows]),
            speed=np.array([r[3] for r in rows]),
            accel=np.array([r[4] for r in rows]),
        ))
    series.sort(key=lambda s: s.vehicle_id)
    return series


def _chain_for_ego(ego: VehicleSeries, by_id: dict[int, VehicleSeries], k: int):
    """Walk leader pointers from the ego; returns [lead,...,ego] or None."""
    chain = [ego]
    cur = ego
    for _ in range(k - 1):
        if cur.leader_id is None or cur.leader_id not in by_id:
            return None
        cur = by_id[cur.leader_id]
        chain.append(cur)
    return chain[::-1]


def extract_samples(series: list[VehicleSeries], config: DatasetConfig) -> list[TrajectorySample]:
    """Extract K-vehicle sliding-window samples (stride 1 step).

    One chain per ego vehicle that has K-1 chained leaders; one sample per
    window start over the chain's co-presence interval.  Sample ids are
    assigned in (series order, window start) order and are stable.
    """
    k = config.k_vehicles
    tb, tf = config.t_back, config.t_fwd
    window = tb + tf
    by_id = {s.vehicle_id: s for s in series}
    samples: list[TrajectorySample] = []
    sid = 0
    for ego in series:
        chain = _chain_for_ego(ego, by_id, k)
        if chain is None:
            continue
        t_start = max(s.t_start for s in chain)
        t_end = min(s.t_end for s in chain)
        n_common = int(round((t_end - t_start) / config.delta)) + 1
        if n_common < window:
            continue
        # per-vehicle offset of the common interval into its own series
        offsets = [int(round((t_start - s.t_start) / config.delta)) for s in chain]
        pos = np.stack([s.position[o:o + n_common] for s, o in zip(chain, offsets)])
        spd = np.stack([s.speed[o:o + n_common] for s, o in zip(chain, offsets)])
        acc = np.stack([s.accel[o:o + n_common] for s, o in zip(chain, offsets)])
        for start in range(n_common - window + 1):
            h = slice(start, start + tb)
            f = slice(start + tb, start + window)
            spacing = np.empty((k, tb))
            spacing[0] = np.nan
            spacing[1:] = pos[:-1, h] - pos[1:, h]
            samples.append(TrajectorySample(
                sample_id=sid,
                hist_accel=acc[:, h].copy(),
                hist_speed=spd[:, h].copy(),
                hist_spacing=spacing,
                hist_position=pos[:, h].copy(),
                ego_future_accel=acc[-1, f].copy(),
                ego_speed_at_t0=float(spd[-1, start + tb - 1]),
                leader_future_accel=acc[:-1, f].copy(),
            ))
            sid += 1
    return samples


@dataclass(frozen=True)
class NormStats:
    """Per-channel z-score statistics, pooled over vehicle slots.

    Computed on training-set inputs only; the lead vehicle's sentinel
    spacing row is excluded from the spacing channel.
    """

    accel_mean: float
    accel_std: float
    speed_mean: float
    speed_std: float
    spacing_mean: float
    spacing_std: float

    def to_dict(self) -> dict:
        return {
            "accel_mean": self.accel_mean, "accel_std": self.accel_std,
            "speed_mean": self.speed_mean, "speed_std": self.speed_std,
            "spacing_mean": self.spacing_mean, "spacing_std": self.spacing_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(**{k: float(d[k]) for k in (
            "accel_mean", "accel_std", "speed_mean", "speed_std",
            "spacing_mean", "spacing_std")})


def compute_norm_stats(samples: list[TrajectorySample], split: SplitIndex) -> NormStats:
    """Channel statistics over the training split's history inputs."""
    train = [s for s in samples if s.sample_id in split.train_ids]
    if not train:
        raise DataError("training split is empty")
    acc = np.concatenate([s.hist_accel.ravel() for s in train])
    spd = np.concatenate([s.hist_speed.ravel() for s in train])
    spc = np.concatenate([s.hist_spacing[1:].ravel() for s in train])
    stats = {}
    for name, vals in (("accel", acc), ("speed", spd), ("spacing", spc)):
        std = float(np.std(vals))
        if std <= 0:
            raise DataError(f"zero-variance {name} channel in training data")
        stats[f"{name}_mean"] = float(np.mean(vals))
        stats[f"{name}_std"] = std
    return NormStats(**stats)


def sample_features(sample: TrajectorySample, stats: NormStats) -> np.ndarray:
    """Normalized network input, shape (t_back, 3K).

    Columns are per-vehicle blocks [accel, speed, spacing].  The lead
    vehicle's spacing slot is a constant 0 after normalization (there is
    no observed leader; the sentinel itself is never read).
    """
    k, tb = sample.hist_accel.shape
    out = np.empty((tb, 3 * k))
    out[:, 0::3] = ((sample.hist_accel - stats.accel_mean) / stats.accel_std).T
    out[:, 1::3] = ((sample.hist_speed - stats.speed_mean) / stats.speed_std).T
    spc = (sample.hist_spacing - stats.spacing_mean) / stats.spacing_std
    out[:, 2::3] = spc.T
    out[:, 2] = 0.0
    return out


def write_samples(samples: list[TrajectorySample], path, config: DatasetConfig) -> None:
    """Persist samples as JSON lines (see module docstring for the schema)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize.dumps({
            "format_version": SAMPLE_FORMAT_VERSION,
            "delta": config.delta,
            "k_vehicles": config.k_vehicles,
            "t_back": config.t_back,
            "t_fwd": config.t_fwd,
        }))
        fh.write("\n")
        for s in samples:
            fh.write(serialize.dumps({
                "sample_id": s.sample_id,
                "hist_accel": s.hist_accel,
                "hist_speed": s.hist_speed,
                "hist_spacing": s.hist_spacing[1:],  # sentinel row not stored
                "hist_position": s.hist_position,
                "ego_future_accel": s.ego_future_accel,
                "ego_speed_at_t0": s.ego_speed_at_t0,
                "leader_future_accel": s.leader_future_accel,
            }))
            fh.write("\n")


def read_samples(path) -> tuple[list[TrajectorySample], dict]:
    """Load a sample file; returns (samples, header dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:1: malformed header: {exc}") from exc
    if header.get("format_version") != SAMPLE_FORMAT_VERSION:
        raise DataError(
            f"{path}: format_version {header.get('format_version')!r}, "
            f"expected {SAMPLE_FORMAT_VERSION}"
        )
    k = int(header["k_vehicles"])
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: malformed sample: {exc}") from exc
        try:
            spacing_rows = np.array(obj["hist_spacing"], dtype=float)
            spacing = np.full((k, spacing_rows.shape[1]), np.nan)
            spacing[1:] = spacing_rows
            samples.append(TrajectorySample(
                sample_id=int(obj["sample_id"]),
                hist_accel=np.array(obj["hist_accel"], dtype=float),
                hist_speed=np.array(obj["hist_speed"], dtype=float),
                hist_spacing=spacing,
                hist_position=np.array(obj["hist_position"], dtype=float),
                ego_future_accel=np.array(obj["ego_future_accel"], dtype=float),
                ego_speed_at_t0=float(obj["ego_speed_at_t0"]),
                leader_future_accel=np.array(obj["leader_future_accel"], dtype=float),
            ))
        except (KeyError, IndexError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad sample object: {exc}") from exc
    return samples, header
