"""Configuration grid, per-run training/evaluation and the results manifest.

Output layout of :func:`run_experiment`::

    out_dir/
      manifest.json
      runs/<run_id>/checkpoint.json
      runs/<run_id>/history.jsonl
      runs/<run_id>/result.json

A run whose ``result.json`` carries the same content key is not retrained.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .flownet import Dataset, load_dataset
from .metrics import ErrorPoint, median_model, mre_av, mre_phi, write_error_plane
from .model import ModelConfig, Network, load_checkpoint, network_for_graph, save_checkpoint
from .train import TrainConfig, TrainingDiverged, mse_loss, split_indices, train

__all__ = [
    "GridSpec",
    "RunSpec",
    "expand_grid",
    "run_one",
    "run_experiment",
    "evaluate",
    "export_plane",
]

log = logging.getLogger(__name__)

DEPTHS = {"ba": (3, 5, 7, 9), "er": (4, 9, 14, 19)}


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _digest(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()


@dataclass(frozen=True)
class GridSpec:
    layer_kinds: tuple[str, ...] = ("gi", "ewgi")
    activations: tuple[str, ...] = ("elu", "swish", "softplus")
    depths: tuple[int, ...] = DEPTHS["ba"]
    features: tuple[int, ...] = (1, 5, 10)
    pools: tuple[str, ...] = ("reduce_max", "reduce_mean")
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self) -> None:
        for name in ("layer_kinds", "activations", "depths", "features", "seeds"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"grid field {name!r} is empty")
            if len(set(value)) != len(value):
                raise ValueError(f"grid field {name!r} has duplicates")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "pools", tuple(self.pools))
        if any(f > 1 for f in self.features) and not self.pools:
            raise ValueError("features > 1 need at least one pool")

    @classmethod
    def for_style(cls, style: str, **overrides) -> GridSpec:
        return cls(depths=DEPTHS[style], **overrides)

    @classmethod
    def from_dict(cls, data: dict) -> GridSpec:
        data = dict(data)
        style = data.pop("style", None)
        if style is not None and "depths" not in data:
            data["depths"] = DEPTHS[style]
        return cls(**{k: tuple(v) for k, v in data.items()})

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}

    def configs_per_kind(self) -> int:
        heads = sum(1 if f == 1 else len(self.pools) for f in self.features)
        return len(self.activations) * len(self.depths) * heads


@dataclass(frozen=True)
class RunSpec:
    model: ModelConfig
    seed: int

    @property
    def run_id(self) -> str:
        return f"{self.model.config_id}-s{self.seed}"


def expand_grid(spec: GridSpec) -> list[RunSpec]:
    """Every (model config, seed) pair, in nested order kind, activation,
    depth, (features, pool), seed."""
    runs = []
    for kind in spec.layer_kinds:
        for act in spec.activations:
            for depth in spec.depths:
                for F in spec.features:
                    for pool in ("none",) if F == 1 else spec.pools:
                        for seed in spec.seeds:
                            cfg = ModelConfig(kind, depth, F, act, pool, seed)
                            runs.append(RunSpec(cfg, seed))
    return runs


def _rows(data: Dataset, n_train: int, n_test: int) -> tuple[np.ndarray, np.ndarray]:
    if n_train < 2 or n_test < 1:
        raise ValueError("need n_train >= 2 and n_test >= 1")
    if len(data) < n_train + n_test:
        raise ValueError(f"dataset has {len(data)} rows, need {n_train + n_test}")
    return np.arange(n_train), np.arange(n_train, n_train + n_test)


def _error_point(net: Network, data: Dataset, rows, config_id: str = "", seed: int = 0) -> ErrorPoint:
    pred = net.predict(data.capacities[rows])
    target = data.flows[rows]
    return ErrorPoint(mre_av(pred, target), mre_phi(pred, target), config_id, seed, net.n_params)


def run_one(
    run: RunSpec,
    data: Dataset,
    train_cfg: TrainConfig,
    run_dir: str | Path,
    n_train: int = 500,
    n_test: int = 3000,
    dataset_hash: str | None = None,
) -> dict:
    """Train and evaluate one model; write its artifacts into ``run_dir``.

    Returns the result record. A training divergence is recorded with
    ``status == "failed"`` instead of raised.
    """
    run_dir = Path(run_dir)
    dataset_hash = dataset_hash or data.content_hash()
    cfg = replace(train_cfg, seed=run.seed)
    key = _digest(
        {
            "version": __version__,
            "dataset": dataset_hash,
            "model": run.model.to_dict(),
            "train": cfg.to_dict(),
            "n_train": n_train,
            "n_test": n_test,
        }
    )
    result_path = run_dir / "result.json"
    if result_path.exists():
        previous = json.loads(result_path.read_text())
        if previous.get("key") == key:
            log.info("skipping completed run %s", run.run_id)
            return previous

    pool_rows, test_rows = _rows(data, n_train, n_test)
    tr, va = split_indices(n_train, cfg.val_fraction, run.seed)
    tr, va = pool_rows[tr], pool_rows[va]
    lg = data.network.line_graph
    net = network_for_graph(run.model, lg, data.sink_incoming)
    record = {
        "run_id": run.run_id,
        "key": key,
        "config_id": run.model.config_id,
        "model": run.model.to_dict(),
        "seed": run.seed,
        "n_params": net.n_params,
        "provenance": {"dataset_hash": dataset_hash, "code_version": __version__},
    }
    run_dir.mkdir(parents=True, exist_ok=True)
    try:
        history = train(
            net, data.capacities[tr], data.flows[tr], data.capacities[va], data.flows[va], cfg
        )
    except TrainingDiverged as exc:
        log.warning("run %s diverged: %s", run.run_id, exc)
        record.update(status="failed", error=str(exc), failed_epoch=exc.epoch)
        result_path.write_text(json.dumps(record, sort_keys=True, indent=1))
        return record

    point = _error_point(net, data, test_rows, run.model.config_id, run.seed)
    final_vl = mse_loss(net.predict(data.capacities[va]), data.flows[va])[0]
    save_checkpoint(
        net,
        run_dir / "checkpoint.json",
        extra={"model_config": run.model.to_dict(), "train_config": cfg.to_dict()},
    )
    history.save(run_dir / "history.jsonl")
    record.update(
        status="ok",
        mre_av=point.mre_av,
        mre_phi=point.mre_phi,
        epochs=history.epochs,
        best_epoch=history.best_epoch,
        stop_reason=history.stop_reason,
        val_loss_first=history.val_loss[0] if history.val_loss else None,
        val_loss_best=history.best_val_loss if history.best_epoch else None,
        val_loss_final=final_vl,
        test_rows=[int(test_rows[0]), int(test_rows[-1]) + 1],
    )
    result_path.write_text(json.dumps(record, sort_keys=True, indent=1))
    return record


def _run_task(args) -> dict:
    return run_one(*args)


def mark_medians(records: list[dict]) -> None:
    """Set ``is_median`` on every record; one per config with an odd count
    of successful runs."""
    groups: dict[str, list[dict]] = defaultdict(list)
    for rec in records:
        rec["is_median"] = False
        if rec.get("status") == "ok":
            groups[rec["config_id"]].append(rec)
    for config_id, group in groups.items():
        if len(group) % 2 == 0:
            log.warning("config %s has %d successful runs; no median", config_id, len(group))
            continue
        points = [ErrorPoint(r["mre_av"], r["mre_phi"], config_id, r["seed"]) for r in group]
        chosen = median_model(points)
        for rec in group:
            if rec["seed"] == chosen.seed:
                rec["is_median"] = True


def run_experiment(
    dataset: Dataset | str | Path,
    spec: GridSpec,
    train_cfg: TrainConfig,
    out_dir: str | Path,
    *,
    n_train: int = 500,
    n_test: int = 3000,
    workers: int = 1,
) -> dict:
    """Train every grid run (skipping completed ones) and write ``manifest.json``."""
    data = dataset if isinstance(dataset, Dataset) else load_dataset(dataset)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _rows(data, n_train, n_test)
    dataset_hash = data.content_hash()
    runs = expand_grid(spec)
    tasks = [
        (run, data, train_cfg, out_dir / "runs" / run.run_id, n_train, n_test, dataset_hash)
        for run in runs
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_task, tasks))
    else:
        records = [_run_task(t) for t in tasks]
    mark_medians(records)
    manifest = {
        "code_version": __version__,
        "dataset_hash": dataset_hash,
        "grid": spec.to_dict(),
        "train_config": train_cfg.to_dict(),
        "n_train": n_train,
        "n_test": n_test,
        "runs": records,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest


def evaluate(checkpoint: str | Path, dataset: Dataset, rows=None) -> ErrorPoint:
    """Error point of a stored checkpoint on ``rows`` of ``dataset`` (all rows if None)."""
    net = load_checkpoint(checkpoint, dataset.network.line_graph)
    if rows is None:
        rows = np.arange(len(dataset))
    meta = json.loads(Path(checkpoint).read_text())
    cfg = meta.get("model_config", {})
    config_id = ModelConfig(**cfg).config_id if cfg else ""
    return _error_point(net, dataset, rows, config_id, int(cfg.get("seed", 0)))


def plane_rows(manifest: dict) -> list[dict]:
    rows = []
    for rec in manifest["runs"]:
        if rec.get("status") != "ok":
            continue
        model = rec["model"]
        rows.append(
            {
                "config_id": rec["config_id"],
                "layer_kind": model["layer_kind"],
                "seed": rec["seed"],
                "activation": model["activation"],
                "H": model["depth"],
                "F": model["features"],
                "pool": model["pool"],
                "n_params": rec["n_params"],
                "mre_av": rec["mre_av"],
                "mre_phi": rec["mre_phi"],
                "is_median": int(rec["is_median"]),
            }
        )
    return rows


def export_plane(manifest_path: str | Path, out_csv: str | Path) -> int:
    manifest = json.loads(Path(manifest_path).read_text())
    rows = plane_rows(manifest)
    write_error_plane(rows, out_csv)
    return len(rows)
