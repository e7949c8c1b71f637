"""
Hyperparameter sweeps over the neighbour count K or the number of stacked
blocks: one model per value, shared seeds, one CSV row per value.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from ..data.patches import PatchSample
from ..errors import RidnetError
from ..models.canonical_types import SweepAxis
from ..models.config import RunConfig
from ..training.trainer import train
from ..utils.timer import Timer
from .report import METRIC_COLUMNS, evaluate_images

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["axis", "value"] + METRIC_COLUMNS + ["wall_time_s", "error"]

_AXIS_KEYS = {
    SweepAxis.K_NEIGHBORS: ("model", "graph", "k_neighbors"),
    SweepAxis.BLOCK_COUNT: ("model", "blocks"),
}


@dataclass
class SweepRow:
    axis: str
    value: int
    metrics: Dict[str, Optional[float]]
    wall_time_s: float
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


def config_echo(config: RunConfig) -> Dict[str, Any]:
    """Settings that identify a trained model in metric reports."""
    return {
        "k_neighbors": config.model.graph.k_neighbors,
        "blocks": config.model.blocks,
        "seed": config.train.seed,
        "init_seed": config.model.init_seed,
        "phi_seed": config.train.phi_seed,
        "theta_mode": config.model.graph.theta_mode.value,
    }


def with_axis_value(config: RunConfig, axis: SweepAxis, value: int) -> RunConfig:
    """Copy of `config` with the swept setting replaced (validated again)."""
    values = config.model_dump(mode="json")
    *parents, leaf = _AXIS_KEYS[SweepAxis(axis)]
    cursor = values
    for key in parents:
        cursor = cursor[key]
    cursor[leaf] = value
    return RunConfig.model_validate(values)


def _run_one(
    config: RunConfig,
    axis: SweepAxis,
    value: int,
    train_set: Sequence[PatchSample],
    eval_set: Sequence[PatchSample],
    out_dir: Path,
) -> Dict[str, Optional[float]]:
    run_config = with_axis_value(config, axis, value)
    result = train(run_config, train_set, out_dir / f"{axis.value}_{value}")
    items = [
        (f"sample{i:04d}", "denoised", result.generator.denoise(s.low_stack), s.target)
        for i, s in enumerate(eval_set)
    ]
    report = evaluate_images(items, config_echo(run_config), threads=run_config.train.threads)
    summary = report.aggregate()
    return {column: summary[column] for column in METRIC_COLUMNS}


def sweep(
    axis: SweepAxis,
    values: Sequence[int],
    config: RunConfig,
    train_set: Sequence[PatchSample],
    eval_set: Sequence[PatchSample],
    out_dir: Path,
) -> List[SweepRow]:
    """
    Train and score one model per value and write `sweep_<axis>.csv`.

    A value whose run fails keeps its row, with the error message and
    empty metrics, and the sweep carries on.
    """
    axis = SweepAxis(axis)
    if not values:
        raise ValueError("sweep needs at least one value")
    if not eval_set:
        raise ValueError("sweep needs a non-empty evaluation set")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: List[SweepRow] = []
    for value in values:
        error = ""
        metrics: Dict[str, Optional[float]] = {column: None for column in METRIC_COLUMNS}
        with Timer() as timer:
            try:
                metrics = _run_one(config, axis, int(value), train_set, eval_set, out_dir)
            except (RidnetError, ValueError, FloatingPointError) as e:
                error = f"{type(e).__name__}: {e}".replace("\n", " ")
                logger.warning("sweep %s=%s failed: %s", axis.value, value, error)
        rows.append(SweepRow(axis=axis.value, value=int(value), metrics=metrics, wall_time_s=timer.elapsed, error=error))
        logger.info("sweep %s=%s done in %.1fs", axis.value, value, timer.elapsed)
    write_sweep_csv(rows, out_dir / f"sweep_{axis.value}.csv")
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            cells = ["" if row.metrics[c] is None else repr(float(row.metrics[c])) for c in METRIC_COLUMNS]
            writer.writerow([row.axis, row.value] + cells + [f"{row.wall_time_s:.3f}", row.error])
    return path


def finite_metrics(rows: Sequence[SweepRow]) -> bool:
    """True when every successful row carries finite, non-negative losses."""
    for row in rows:
        if row.failed:
            continue
        for column in METRIC_COLUMNS:
            value = row.metrics[column]
            if value is None or column == "ssim":
                continue
            if not math.isfinite(value) or (column != "psnr_db" and value < 0):
                return False
    return True
