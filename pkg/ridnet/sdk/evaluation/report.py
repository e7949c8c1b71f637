"""
Per-image metric rows with an aggregate, serialized as CSV and JSON.
"""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .metrics import psnr, radiomics_loss, ssim

logger = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "psnr_db",
    "ssim",
    "glcm_contrast_loss",
    "glcm_correlation_loss",
    "glcm_dissimilarity_loss",
]


@dataclass
class ImageMetrics:
    name: str
    source: str
    psnr_db: float
    ssim: float
    glcm_contrast_loss: float
    glcm_correlation_loss: Optional[float]
    glcm_dissimilarity_loss: float

    @property
    def correlation_degenerate(self) -> bool:
        return self.glcm_correlation_loss is None


def image_metrics(name: str, source: str, image: np.ndarray, reference: np.ndarray) -> ImageMetrics:
    """Score one normalized image against its normal-dose reference."""
    losses = radiomics_loss(image, reference)
    return ImageMetrics(
        name=name,
        source=source,
        psnr_db=psnr(image, reference),
        ssim=ssim(image, reference),
        glcm_contrast_loss=losses.contrast,
        glcm_correlation_loss=losses.correlation,
        glcm_dissimilarity_loss=losses.dissimilarity,
    )


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


@dataclass
class MetricReport:
    """
    Metric rows plus the configuration they were produced under (K, block
    count, seeds, theta mode).
    """

    rows: List[ImageMetrics] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    def sources(self) -> List[str]:
        return sorted({row.source for row in self.rows})

    def aggregate(self, source: Optional[str] = None) -> Dict[str, Any]:
        """Column means over rows of `source` (all rows when None); degenerate correlations are skipped and counted."""
        rows = [r for r in self.rows if source is None or r.source == source]
        summary: Dict[str, Any] = {column: _mean([getattr(r, column) for r in rows]) for column in METRIC_COLUMNS}
        summary["images"] = len(rows)
        summary["correlation_degenerate"] = sum(1 for r in rows if r.correlation_degenerate)
        return summary

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["name", "source"] + METRIC_COLUMNS)
            for row in self.rows:
                writer.writerow([row.name, row.source] + [_cell(getattr(row, c)) for c in METRIC_COLUMNS])
            for source in self.sources():
                summary = self.aggregate(source)
                writer.writerow(["aggregate", source] + [_cell(summary[c]) for c in METRIC_COLUMNS])
        return path

    def write_json(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        document = {
            "config": self.config,
            "aggregate": {source: self.aggregate(source) for source in self.sources()},
            "images": [asdict(row) for row in self.rows],
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2, sort_keys=True)
            f.write("\n")
        return path


def _cell(value: Optional[float]) -> str:
    if value is None:
        return "degenerate"
    return repr(float(value)) if math.isfinite(value) else "nan"


def evaluate_images(
    items: Sequence[Tuple[str, str, np.ndarray, np.ndarray]],
    config: Optional[Dict[str, Any]] = None,
    threads: int = 1,
) -> MetricReport:
    """
    Score (name, source, image, reference) items; rows keep input order
    whatever the thread count.
    """

    def score(item: Tuple[str, str, np.ndarray, np.ndarray]) -> ImageMetrics:
        return image_metrics(*item)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(score, items))
    else:
        rows = [score(item) for item in items]
    logger.debug("scored %d images", len(rows))
    return MetricReport(rows=rows, config=dict(config or {}))
