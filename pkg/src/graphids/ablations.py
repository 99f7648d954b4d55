"""Baselines and ablation sweeps built on the shared training and scoring path.

``run_t_mae`` drops the graph encoder, ``run_simple_ae`` swaps the Transformer
for an MLP, and ``run_ablation_grid`` trains one model per :class:`AblationSpec`
and collects the results into a table. A failing entry (diverged loss, bad
override, degenerate scores) is recorded with its error and the grid moves on.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from graphids.config import TrainConfig
from graphids.detection import EvalReport, evaluate
from graphids.ingest import DatasetSplit
from graphids.training import train

log = logging.getLogger(__name__)

# keys that only matter when there is a graph encoder
GRAPH_KEYS = frozenset({"edim_out", "nhops", "fanout", "agg_type", "gnn_dropout", "incidence",
                        "edge_features_in_embedding", "gnn_weight_decay", "gnn_batch_size"})

# the no-graph baseline learns faster with a larger step
T_MAE_LEARNING_RATE = 1e-3

MASK_RATIOS = (0.0, 0.15, 0.3, 0.5, 0.7)
HOPS = (1, 2, 3)

GRID_COLUMNS = ("name", "variant", "overrides", "fingerprint", "pr_auc", "macro_f1",
                "val_pr_auc", "best_epoch", "runtime_s", "status", "error")


@dataclass(frozen=True)
class AblationSpec:
    variant: str = "graphids"
    overrides: dict = field(default_factory=dict)
    name: str = ""

    def label(self) -> str:
        if self.name:
            return self.name
        parts = [f"{k}={v}" for k, v in sorted(self.overrides.items())]
        return self.variant + (":" + ",".join(parts) if parts else "")

    def apply(self, base: TrainConfig) -> TrainConfig:
        over = dict(self.overrides)
        if self.variant == "t_mae":
            # graph parameters cannot change a model that has no graph
            over = {k: v for k, v in over.items() if k not in GRAPH_KEYS}
        return base.override(variant=self.variant, **over)


@dataclass
class GridRow:
    spec: AblationSpec
    fingerprint: str = ""
    report: EvalReport | None = None
    best_epoch: int = 0
    runtime_s: float = 0.0
    error: str = ""

    @property
    def status(self) -> str:
        return "ok" if self.report is not None else "failed"

    def as_record(self) -> dict:
        r = self.report
        return {
            "name": self.spec.label(), "variant": self.spec.variant,
            "overrides": ";".join(f"{k}={v}" for k, v in sorted(self.spec.overrides.items())),
            "fingerprint": self.fingerprint,
            "pr_auc": "" if r is None else f"{r.pr_auc:.6f}",
            "macro_f1": "" if r is None else f"{r.macro_f1:.6f}",
            "val_pr_auc": "" if r is None else f"{r.val_pr_auc:.6f}",
            "best_epoch": self.best_epoch, "runtime_s": f"{self.runtime_s:.1f}",
            "status": self.status, "error": self.error,
        }


def _fit_and_evaluate(config: TrainConfig, split: DatasetSplit):
    result = train(config, split)
    return result, evaluate(result.checkpoint, split)


def t_mae_config(config: TrainConfig, learning_rate: float | None = T_MAE_LEARNING_RATE) -> TrainConfig:
    """The no-graph variant of ``config``; pass ``learning_rate=None`` to keep the original step."""
    over = {"variant": "t_mae"}
    if learning_rate is not None:
        over["learning_rate"] = learning_rate
    return config.override(**over)


def run_t_mae(config: TrainConfig, split: DatasetSplit,
              learning_rate: float | None = T_MAE_LEARNING_RATE) -> EvalReport:
    """Masked Transformer on the raw scaled features, otherwise identical to GraphIDS."""
    return _fit_and_evaluate(t_mae_config(config, learning_rate), split)[1]


def run_simple_ae(config: TrainConfig, split: DatasetSplit) -> EvalReport:
    return _fit_and_evaluate(config.override(variant="simple_ae"), split)[1]


def _run_entry(spec: AblationSpec, split: DatasetSplit, base: TrainConfig) -> GridRow:
    row = GridRow(spec)
    t0 = time.perf_counter()
    try:
        config = spec.apply(base)
        row.fingerprint = config.fingerprint()
        result, row.report = _fit_and_evaluate(config, split)
        row.best_epoch = result.best_epoch
    except Exception as exc:  # one bad entry must not sink the grid
        row.error = f"{type(exc).__name__}: {exc}"
        log.warning("ablation %s failed: %s", spec.label(), row.error)
    row.runtime_s = time.perf_counter() - t0
    return row


def run_ablation_grid(specs, split: DatasetSplit, base: TrainConfig | None = None,
                      progress=None, workers: int = 1) -> list[GridRow]:
    """One trained-and-evaluated row per spec, in spec order.

    With ``workers > 1`` entries run in separate processes; they share nothing,
    so the rows are identical to a sequential run.
    """
    base = base or TrainConfig()
    specs = list(specs)
    if workers <= 1 or len(specs) <= 1:
        rows = []
        for spec in specs:
            rows.append(_run_entry(spec, split, base))
            if progress:
                progress(rows[-1])
        return rows
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_entry, spec, split, base) for spec in specs]
        rows = []
        for fut in futures:
            rows.append(fut.result())
            if progress:
                progress(rows[-1])
    return rows


def mask_ratio_grid(ratios=MASK_RATIOS) -> list[AblationSpec]:
    return [AblationSpec("graphids", {"mask_ratio": r}) for r in ratios]


def hop_grid(hops=HOPS) -> list[AblationSpec]:
    return [AblationSpec("graphids", {"nhops": h}) for h in hops]


def positional_grid() -> list[AblationSpec]:
    return [AblationSpec("graphids", {"pos_encoding": k}) for k in ("none", "sinusoidal", "learnable")]


def baseline_grid() -> list[AblationSpec]:
    return [AblationSpec("graphids"),
            AblationSpec("t_mae", {"learning_rate": T_MAE_LEARNING_RATE}),
            AblationSpec("simple_ae")]


def write_grid_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=GRID_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(row.as_record())


def parse_grid(data) -> list[AblationSpec]:
    """Specs from a parsed YAML/JSON grid file.

    Accepts either a list of ``{variant, overrides, name}`` entries, or a
    mapping ``{variant: ..., sweep: {key: [values]}}`` that expands to one
    entry per value. A bare preset name (``mask_ratio``, ``hops``,
    ``positional``, ``baselines``) is also accepted.
    """
    presets = {"mask_ratio": mask_ratio_grid, "hops": hop_grid,
               "positional": positional_grid, "baselines": baseline_grid}
    if isinstance(data, str):
        if data not in presets:
            raise ValueError(f"unknown grid preset {data!r}; choose from {sorted(presets)}")
        return presets[data]()
    if isinstance(data, dict):
        if "entries" in data:
            data = data["entries"]
        else:
            variant = data.get("variant", "graphids")
            fixed = dict(data.get("overrides") or {})
            specs = []
            for key, values in (data.get("sweep") or {}).items():
                specs += [AblationSpec(variant, {**fixed, key: v}) for v in values]
            return specs
    if data is None:
        return []
    if not isinstance(data, list):
        raise ValueError("grid must be a list of entries, a sweep mapping, or a preset name")
    specs = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise ValueError(f"grid entry {i} is not a mapping")
        unknown = set(entry) - {"variant", "overrides", "name"}
        if unknown:
            raise ValueError(f"grid entry {i}: unknown keys {sorted(unknown)}")
        specs.append(AblationSpec(entry.get("variant", "graphids"),
                                  dict(entry.get("overrides") or {}), entry.get("name", "")))
    return specs
