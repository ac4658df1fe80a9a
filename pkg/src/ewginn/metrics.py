"""Relative-error measures for max-flow regression and median-seed selection."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ErrorPoint",
    "ZeroMaxFlowError",
    "mre_av",
    "mre_phi",
    "median_model",
    "PLANE_COLUMNS",
    "write_error_plane",
]

log = logging.getLogger(__name__)


class ZeroMaxFlowError(ValueError):
    """A target row has zero total flow, so relative errors are undefined."""


def _prepare(preds, targets, drop_zero: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    preds = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if preds.shape != targets.shape:
        raise ValueError(f"shape mismatch {preds.shape} vs {targets.shape}")
    phi = np.abs(targets).sum(axis=1)
    zero = phi <= 0.0
    if np.any(zero):
        if not drop_zero:
            raise ZeroMaxFlowError(f"{int(zero.sum())} sample(s) with zero max-flow")
        log.warning("dropping %d zero max-flow sample(s)", int(zero.sum()))
        keep = ~zero
        if not np.any(keep):
            raise ZeroMaxFlowError("every sample has zero max-flow")
        preds, targets, phi = preds[keep], targets[keep], phi[keep]
    return preds, targets, phi


def mre_av(preds, targets, *, drop_zero: bool = False) -> float:
    """Per-flow absolute errors relative to the true max-flow, averaged over
    samples and sink-incoming edges."""
    preds, targets, phi = _prepare(preds, targets, drop_zero)
    rel = np.abs(targets - preds) / phi[:, None]
    return float(rel.mean(axis=0).mean())


def mre_phi(preds, targets, *, drop_zero: bool = False) -> float:
    """Mean relative error of the predicted total flow, the L1 norm of each
    predicted row."""
    preds, targets, phi = _prepare(preds, targets, drop_zero)
    return float(np.mean(np.abs(phi - np.abs(preds).sum(axis=1)) / phi))


@dataclass(frozen=True)
class ErrorPoint:
    mre_av: float
    mre_phi: float
    config_id: str = ""
    seed: int = 0
    n_params: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        for name in ("mre_av", "mre_phi"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")

    @property
    def distance(self) -> float:
        return math.hypot(self.mre_av, self.mre_phi)

    def to_dict(self) -> dict:
        return asdict(self)


def median_model(points: list[ErrorPoint]) -> ErrorPoint:
    """Point whose distance from the origin of the error plane is the median.

    Equal distances are ordered by seed, lowest first.
    """
    if not points:
        raise ValueError("no points")
    if len(points) % 2 == 0:
        raise ValueError(f"median needs an odd number of points, got {len(points)}")
    ranked = sorted(points, key=lambda p: (p.distance, p.seed))
    return ranked[len(ranked) // 2]


PLANE_COLUMNS = (
    "config_id",
    "layer_kind",
    "seed",
    "activation",
    "H",
    "F",
    "pool",
    "n_params",
    "mre_av",
    "mre_phi",
    "is_median",
)


def write_error_plane(rows: list[dict], path: str | Path) -> None:
    """CSV with one row per trained model; ``rows`` carry ``PLANE_COLUMNS`` keys."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=PLANE_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({**row, "mre_av": repr(row["mre_av"]), "mre_phi": repr(row["mre_phi"])})
