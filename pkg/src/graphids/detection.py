"""Scoring flows with a trained checkpoint and turning scores into a report."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from graphids.ingest import DatasetSplit, FlowTable
from graphids.metrics import confusion, macro_f1, pr_auc, pr_curve, select_threshold
from graphids.pipeline import prepare_data, score_data
from graphids.training import Checkpoint

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass
class ScoredFlows:
    scores: np.ndarray
    labels: np.ndarray
    attack_types: np.ndarray

    def __len__(self) -> int:
        return len(self.scores)


def score_flows(checkpoint: Checkpoint, flows: FlowTable, model=None) -> ScoredFlows:
    """Anomaly scores for already-scaled flows, in input order."""
    if flows.n_features != checkpoint.n_features:
        raise ValueError(f"flows have {flows.n_features} features, "
                         f"checkpoint expects {checkpoint.n_features}")
    model = model or checkpoint.build_model()
    scores = score_data(model, prepare_data(flows, checkpoint.config), checkpoint.config)
    return ScoredFlows(scores, flows.labels.copy(), flows.attack_types.copy())


def score_summary(scored: ScoredFlows) -> dict[str, dict]:
    """Score quantiles per attack type (benign flows under ``"benign"``)."""
    names = np.where(scored.labels == 0, "benign", scored.attack_types).astype(str)
    out = {}
    for name in sorted(set(names.tolist())):
        s = scored.scores[names == name]
        out[name] = {"count": int(len(s)),
                     **{f"q{int(q * 100):02d}": float(np.quantile(s, q)) for q in QUANTILES}}
    return out


@dataclass
class EvalReport:
    pr_auc: float
    macro_f1: float
    threshold: float
    val_pr_auc: float
    val_macro_f1: float
    confusion: dict
    pr_recall: list = field(repr=False, default_factory=list)
    pr_precision: list = field(repr=False, default_factory=list)
    per_type: dict = field(repr=False, default_factory=dict)
    n_test: int = 0
    anomaly_ratio: float = 0.0
    fingerprint: str = ""
    variant: str = "graphids"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def write_pr_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["recall", "precision"])
            w.writerows(zip(self.pr_recall, self.pr_precision))

    def summary(self) -> str:
        return (f"pr_auc={self.pr_auc:.4f} macro_f1={self.macro_f1:.4f} "
                f"threshold={self.threshold:.6g} val_pr_auc={self.val_pr_auc:.4f}")


def report_from_scores(val: ScoredFlows, test: ScoredFlows, fingerprint: str = "",
                       variant: str = "graphids") -> EvalReport:
    """Pick the threshold on validation scores and apply it unchanged to the test scores."""
    try:
        threshold = select_threshold(val.scores, val.labels)
        val_auc = pr_auc(val.scores, val.labels)
    except ValueError as exc:
        raise ValueError(f"validation split: {exc}") from exc
    val_f1 = macro_f1(val.scores > threshold, val.labels)
    try:
        auc = pr_auc(test.scores, test.labels)
        recall, precision, _ = pr_curve(test.scores, test.labels)
    except ValueError as exc:
        raise ValueError(f"test split: {exc}") from exc
    pred = test.scores > threshold
    return EvalReport(
        pr_auc=auc, macro_f1=macro_f1(pred, test.labels), threshold=threshold,
        val_pr_auc=val_auc, val_macro_f1=val_f1, confusion=confusion(pred, test.labels),
        pr_recall=recall.tolist(), pr_precision=precision.tolist(),
        per_type=score_summary(test), n_test=len(test),
        anomaly_ratio=float(np.mean(test.labels != 0)), fingerprint=fingerprint, variant=variant)


def evaluate(checkpoint: Checkpoint, split: DatasetSplit) -> EvalReport:
    model = checkpoint.build_model()
    val = score_flows(checkpoint, split.val, model)
    test = score_flows(checkpoint, split.test, model)
    return report_from_scores(val, test, checkpoint.fingerprint, checkpoint.config.variant)
