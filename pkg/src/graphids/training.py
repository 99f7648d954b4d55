"""End-to-end training with per-component weight decay and early stopping."""

from __future__ import annotations

import copy
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from graphids.config import TrainConfig
from graphids.ingest import DatasetSplit, FeatureScaler
from graphids.mae import anomaly_scores, assemble_windows, sample_attention_mask
from graphids.metrics import pr_auc
from graphids.model import GraphIDS
from graphids.pipeline import FlowData, embed_targets, epoch_batches, prepare_data, score_data

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "graphids-checkpoint/1"


class TrainingDiverged(RuntimeError):
    """The loss became NaN or infinite."""


class CheckpointError(RuntimeError):
    pass


class EarlyStopping:
    """Track the best validation score; signal a stop ``patience`` epochs after it."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.improved = False

    def update(self, epoch: int, value: float) -> bool:
        self.improved = value > self.best
        if self.improved:
            self.best, self.best_epoch = value, epoch
        return epoch - self.best_epoch >= self.patience


@dataclass
class Checkpoint:
    config: TrainConfig
    n_features: int
    model_state: dict
    epoch: int
    val_pr_auc: float
    feature_names: list[str] = field(default_factory=list)
    scaler: dict | None = None
    optimizer_state: dict | None = None
    history: list[dict] = field(default_factory=list)
    torch_rng: torch.Tensor | None = None

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint()

    def build_model(self) -> GraphIDS:
        model = GraphIDS(self.config, self.n_features)
        model.load_state_dict(self.model_state)
        model.eval()
        return model

    def feature_scaler(self) -> FeatureScaler | None:
        return None if self.scaler is None else FeatureScaler.from_dict(self.scaler)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[dict]
    initial_loss: float
    best_epoch: int
    stopped_epoch: int


def _masked_loss(model: GraphIDS, h: torch.Tensor, config: TrainConfig,
                 mask_rng: np.random.Generator) -> tuple[torch.Tensor, int]:
    total = h.new_zeros(())
    n_valid = 0
    for wb in assemble_windows(h, config.window_size, config.ae_batch_size):
        if config.mask_ratio > 0:
            wb.masked = sample_attention_mask(wb.valid, config.mask_ratio, mask_rng)
        rec = model.reconstruct(wb)
        total = total + anomaly_scores(rec.h, rec.h_hat)[wb.valid].sum()
        n_valid += wb.n_valid
    return total / n_valid, n_valid


def _val_metric(model, data: FlowData | None, config, train_loss) -> float:
    if data is None or data.table.labels.min() == data.table.labels.max():
        return -train_loss
    return pr_auc(score_data(model, data, config), data.table.labels)


def train(config: TrainConfig, split: DatasetSplit, progress=None) -> TrainResult:
    """Optimise the encoder and autoencoder jointly on benign training flows.

    After every epoch the validation split is scored without masking and its
    PR-AUC drives early stopping; the best epoch's state is returned.
    ``progress`` is called with each epoch's history row.
    """
    if np.any(split.train.labels != 0):
        raise ValueError("training split must be benign-only")
    torch.manual_seed(config.seed)
    model = GraphIDS(config, split.n_features)
    opt = torch.optim.AdamW(model.param_groups(config.gnn_weight_decay, config.ae_weight_decay),
                            lr=config.learning_rate)
    train_data = prepare_data(split.train, config)
    val_data = prepare_data(split.val, config) if len(split.val) else None
    stopper = EarlyStopping(config.patience)
    history: list[dict] = []
    best = None
    initial_loss = math.nan
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        batches, rng = epoch_batches(train_data, config, epoch)
        mask_rng = np.random.default_rng([config.seed, epoch, 1])
        loss_sum, n_sum = 0.0, 0
        for step, ids in enumerate(batches):
            h = embed_targets(model, train_data, config, ids, rng)
            loss, n_valid = _masked_loss(model, h, config, mask_rng)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss.item()} at epoch {epoch}, step {step} "
                    f"(mask_ratio={config.mask_ratio}, lr={config.learning_rate}); "
                    "consider a lower mask ratio or grad_clip")
            if math.isnan(initial_loss):
                initial_loss = loss.item()
            opt.zero_grad()
            loss.backward()
            if config.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            opt.step()
            loss_sum += loss.item() * n_valid
            n_sum += n_valid
        train_loss = loss_sum / n_sum
        val_metric = _val_metric(model, val_data, config, train_loss)
        stop = stopper.update(epoch, val_metric)
        row = {"epoch": epoch, "train_loss": train_loss, "val_pr_auc": val_metric}
        history.append(row)
        log.info("epoch %d train_loss=%.6g val_pr_auc=%.4f", epoch, train_loss, val_metric)
        if progress:
            progress(row)
        if stopper.improved:
            best = (epoch, val_metric, copy.deepcopy(model.state_dict()),
                    copy.deepcopy(opt.state_dict()), torch.get_rng_state())
        if stop:
            break
    b_epoch, b_val, b_state, b_opt, b_rng = best
    ckpt = Checkpoint(config, split.n_features, b_state, b_epoch, b_val,
                      list(split.train.feature_names), split.scaler.to_dict(), b_opt,
                      list(history), b_rng)
    return TrainResult(ckpt, history, initial_loss, b_epoch, epoch)


# --- checkpoints -------------------------------------------------------------

def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "format": CHECKPOINT_FORMAT,
        "config": ckpt.config.to_dict(),
        "fingerprint": ckpt.fingerprint,
        "n_features": ckpt.n_features,
        "feature_names": list(ckpt.feature_names),
        "scaler": ckpt.scaler,
        "model_state": ckpt.model_state,
        "optimizer_state": ckpt.optimizer_state,
        "epoch": ckpt.epoch,
        "val_pr_auc": ckpt.val_pr_auc,
        "history": ckpt.history,
        "torch_rng": ckpt.torch_rng,
    }, path)


def load_checkpoint(path, expected_config: TrainConfig | None = None,
                    expected_feature_dim: int | None = None, force: bool = False) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`.

    A config fingerprint that differs from ``expected_config`` is an error
    unless ``force`` is set, in which case it is only a warning.
    """
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if not isinstance(blob, dict) or blob.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    try:
        config = TrainConfig.from_dict(blob["config"])
        ckpt = Checkpoint(config, int(blob["n_features"]), blob["model_state"], int(blob["epoch"]),
                          float(blob["val_pr_auc"]), list(blob["feature_names"]), blob["scaler"],
                          blob["optimizer_state"], list(blob["history"]), blob["torch_rng"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from exc
    if config.fingerprint() != blob.get("fingerprint"):
        raise CheckpointError(f"{path}: stored fingerprint does not match stored config")
    if expected_feature_dim is not None and expected_feature_dim != ckpt.n_features:
        raise CheckpointError(f"{path}: checkpoint expects {ckpt.n_features} features, "
                              f"data has {expected_feature_dim}")
    if expected_config is not None and expected_config.fingerprint() != ckpt.fingerprint:
        msg = (f"{path}: config fingerprint {ckpt.fingerprint} differs from expected "
               f"{expected_config.fingerprint()}")
        if not force:
            raise CheckpointError(msg + " (use force to load anyway)")
        warnings.warn(msg, stacklevel=2)
    return ckpt
