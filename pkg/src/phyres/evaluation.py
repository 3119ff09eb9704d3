"""Metrics, the training-data-size sweep, and plot-data emission.

Speed ground truth is reconstructed from ground-truth accelerations (not
read from raw speed columns) so the speed MSE isolates
acceleration-prediction error.

Sweep protocol: per seed the train split is shuffled once and size-s
cells take the first s ids, so smaller training sets are strict subsets
of larger ones; the test split is identical across every cell.
"""

from __future__ import annotations

import csv
import os
import traceback
from dataclasses import dataclass

import numpy as np

from . import serialize
from .calibrate import CalibrationConfig, CalibrationReport, make_params, monte_carlo_calibrate
from .domain import DatasetConfig, SplitIndex, TrajectorySample, split_dataset
from .errors import ConfigError, DataError
from .neuralnet import NetConfig
from .predictors import (PredictionRecord, TrainConfig, TrainReport,
                         predict_many, reconstruct_speed, train_nn,
                         train_perl, train_pinn)

DEFAULT_DATA_SIZES = (300, 500, 1000, 2000, 5000, 10000, 12000)


@dataclass
class EvalReport:
    variant: str
    data_size: int
    seed: int
    mse_a_test: float
    mse_v_test: float
    per_sample_mse_a: list[float]
    collision_count: int

    def to_dict(self) -> dict:
        return {
            "variant": self.variant, "data_size": self.data_size,
            "seed": self.seed, "mse_a_test": self.mse_a_test,
            "mse_v_test": self.mse_v_test,
            "per_sample_mse_a": self.per_sample_mse_a,
            "collision_count": self.collision_count,
        }


def mse_metrics(records: list[PredictionRecord], truth: list[TrajectorySample],
                delta: float) -> tuple[float, float]:
    """Acceleration and speed MSE over all samples and horizon steps."""
    by_id = {s.sample_id: s for s in truth}
    if sorted(r.sample_id for r in records) != sorted(by_id):
        raise DataError("prediction records and truth samples are misaligned")
    sq_a, sq_v = [], []
    for r in records:
        s = by_id[r.sample_id]
        sq_a.append((s.ego_future_accel - r.predicted_accel) ** 2)
        v_true = reconstruct_speed(s.ego_speed_at_t0, s.ego_future_accel, delta)
        sq_v.append((v_true - r.predicted_speed) ** 2)
    return float(np.mean(sq_a)), float(np.mean(sq_v))


@dataclass(frozen=True)
class SweepConfig:
    variants: tuple = ("physics", "nn", "pinn", "perl")
    data_sizes: tuple = DEFAULT_DATA_SIZES
    seeds: tuple = (0,)
    physics_model: str = "newell"
    cell: str = "lstm"
    units1: int = 32
    units2: int = 16
    dense_units: int = 32
    dropout: float = 0.2
    output_activation: str = "linear"
    max_epochs: int = 200
    batch_size: int = 64
    patience: int = 20
    lr: float = 1e-3
    mu: float = 0.5


@dataclass
class SweepCell:
    variant: str
    data_size: int
    seed: int
    eval_report: EvalReport | None = None
    train_report: TrainReport | None = None
    calib_report: CalibrationReport | None = None
    error: str | None = None


def _run_cell(samples_by_id, dcfg: DatasetConfig, sweep: SweepConfig,
              variant: str, subset_ids, test, seed: int) -> SweepCell:
    size = len(subset_ids)
    cell = SweepCell(variant=variant, data_size=size, seed=seed)
    try:
        subset = [samples_by_id[i] for i in subset_ids]
        # fixed-size inner split of the subset for validation during training
        n_val = max(1, int(0.2 * size))
        inner = SplitIndex(train_ids=frozenset(subset_ids[:-n_val]),
                           val_ids=frozenset(subset_ids[-n_val:]),
                           test_ids=frozenset())
        params = None
        if variant in ("physics", "pinn", "perl"):
            calib_cfg = CalibrationConfig(model=sweep.physics_model,
                                          sample_size=size, repetitions=1,
                                          seed=seed)
            cell.calib_report = monte_carlo_calibrate(subset, calib_cfg, dcfg.delta)
            params = make_params(sweep.physics_model,
                                 cell.calib_report.per_repetition[0]["params"])
        net = None
        if variant != "physics":
            t_fwd = subset[0].t_fwd
            nconf = NetConfig(cell=sweep.cell, units1=sweep.units1,
                              units2=sweep.units2, dense_units=sweep.dense_units,
                              output_dim=t_fwd,
                              input_dim=3 * subset[0].k_vehicles,
                              dropout=sweep.dropout,
                              output_activation=sweep.output_activation,
                              seed=seed)
            tconf = TrainConfig(variant=variant, seed=seed,
                                max_epochs=sweep.max_epochs,
                                batch_size=sweep.batch_size,
                                patience=sweep.patience, lr=sweep.lr, mu=sweep.mu)
            if variant == "nn":
                net, cell.train_report = train_nn(subset, inner, tconf, nconf, dcfg.delta)
            elif variant == "pinn":
                net, cell.train_report = train_pinn(subset, inner, tconf, nconf, params, dcfg.delta)
            else:
                net, cell.train_report = train_perl(subset, inner, tconf, nconf, params, dcfg.delta)
        records = predict_many(variant, test, delta=dcfg.delta, params=params, net=net)
        mse_a, mse_v = mse_metrics(records, test, dcfg.delta)
        per_sample = [float(np.mean((s.ego_future_accel - r.predicted_accel) ** 2))
                      for r, s in zip(records, test)]
        cell.eval_report = EvalReport(
            variant=variant, data_size=size, seed=seed,
            mse_a_test=mse_a, mse_v_test=mse_v,
            per_sample_mse_a=per_sample,
            collision_count=sum(r.collision_in_rollout for r in records),
        )
        if cell.train_report is not None:
            cell.train_report.test_metrics = {"mse_a_test": mse_a, "mse_v_test": mse_v}
    except Exception:
        cell.error = traceback.format_exc()
    return cell


def run_sweep(samples: list[TrajectorySample], dcfg: DatasetConfig,
              sweep: SweepConfig, jobs: int = 1) -> list[SweepCell]:
    """Run the (data_size x variant x seed) grid; cells never abort the
    sweep, failures are recorded on the cell."""
    split = split_dataset([s.sample_id for s in samples], dcfg)
    samples_by_id = {s.sample_id: s for s in samples}
    train_ids_sorted = sorted(split.train_ids)
    if max(sweep.data_sizes) > len(train_ids_sorted):
        raise ConfigError(
            f"largest data size {max(sweep.data_sizes)} exceeds the "
            f"{len(train_ids_sorted)}-sample train split")
    test = [samples_by_id[i] for i in sorted(split.test_ids)]

    tasks = []
    for seed in sweep.seeds:
        order = np.random.default_rng(seed).permutation(len(train_ids_sorted))
        shuffled = [train_ids_sorted[i] for i in order]
        for size in sweep.data_sizes:
            subset_ids = shuffled[:size]
            for variant in sweep.variants:
                tasks.append((variant, size, seed, subset_ids))

    def run(task):
        variant, size, seed, subset_ids = task
        return _run_cell(samples_by_id, dcfg, sweep, variant, subset_ids, test, seed)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(run, tasks))
    else:
        cells = [run(t) for t in tasks]
    cells.sort(key=lambda c: (c.data_size, c.variant, c.seed))
    return cells


def write_sweep_outputs(cells: list[SweepCell], outdir) -> list[str]:
    """Write per-cell reports plus the aggregate table; returns paths."""
    paths = []
    agg = []
    for c in cells:
        cell_dir = os.path.join(outdir, "sweep", c.variant, str(c.data_size), str(c.seed))
        os.makedirs(cell_dir, exist_ok=True)
        report_path = os.path.join(cell_dir, "report.json")
        obj = {
            "variant": c.variant, "data_size": c.data_size, "seed": c.seed,
            "error": c.error,
            "eval": c.eval_report.to_dict() if c.eval_report else None,
            "train": c.train_report.to_dict() if c.train_report else None,
            "calibration": c.calib_report.to_dict() if c.calib_report else None,
        }
        serialize.write_json(report_path, obj)
        paths.append(report_path)
        if c.eval_report:
            agg.append({"variant": c.variant, "data_size": c.data_size,
                        "seed": c.seed, "mse_a_test": c.eval_report.mse_a_test,
                        "mse_v_test": c.eval_report.mse_v_test})
    agg_json = os.path.join(outdir, "aggregate.json")
    serialize.write_json(agg_json, agg)
    agg_csv = os.path.join(outdir, "aggregate.csv")
    with open(agg_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "data_size", "seed", "mse_a_test", "mse_v_test"])
        for row in agg:
            writer.writerow([row["variant"], row["data_size"], row["seed"],
                             format(row["mse_a_test"], ".17g"),
                             format(row["mse_v_test"], ".17g")])
    paths.extend([agg_json, agg_csv])
    return paths


def emit_plot_data(cells: list[SweepCell], outdir) -> list[str]:
    """Long-format summary CSV plus per-run convergence CSV."""
    ok = [c for c in cells if c.eval_report is not None]
    if not ok:
        raise DataError("no successful sweep cells to emit")
    os.makedirs(outdir, exist_ok=True)
    summary_path = os.path.join(outdir, "summary_long.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "data_size", "seed", "metric", "value"])
        for c in ok:
            for metric, value in (("mse_a_test", c.eval_report.mse_a_test),
                                  ("mse_v_test", c.eval_report.mse_v_test)):
                writer.writerow([c.variant, c.data_size, c.seed, metric,
                                 format(value, ".17g")])
    conv_path = os.path.join(outdir, "convergence.csv")
    with open(conv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "data_size", "seed", "epoch",
                         "mse_a_val", "mse_v_val"])
        for c in ok:
            if c.train_report is None:
                continue
            for row in c.train_report.per_epoch:
                writer.writerow([c.variant, c.data_size, c.seed, row["epoch"],
                                 format(row["mse_a_val"], ".17g"),
                                 format(row["mse_v_val"], ".17g")])
    return [summary_path, conv_path]
