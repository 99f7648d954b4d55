"""Shared data path for training and scoring: graph, edge batches, window batches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from graphids.config import TrainConfig
from graphids.graph import FlowGraph, build_graph, sample_edge_batch, target_batches
from graphids.ingest import FlowTable
from graphids.mae import assemble_windows
from graphids.model import GraphIDS

# fixed stream id for the neighbour sampler at inference time
_EVAL_STREAM = 2**31 - 1


@dataclass
class FlowData:
    table: FlowTable
    graph: FlowGraph | None
    features: torch.Tensor

    def __len__(self) -> int:
        return len(self.table)


def prepare_data(table: FlowTable, config: TrainConfig, dtype=torch.float32) -> FlowData:
    """Tensorise scaled features; build the flow graph unless the variant ignores it."""
    graph = None if config.variant == "t_mae" else build_graph(table, incidence=config.incidence)
    return FlowData(table, graph, torch.tensor(table.features, dtype=dtype))


def embed_targets(model: GraphIDS, data: FlowData, config: TrainConfig, targets,
                  rng: np.random.Generator) -> torch.Tensor:
    if not model.uses_graph:
        return model.embed(data.features, target_edges=targets)
    batch = sample_edge_batch(data.graph, targets, config.nhops, config.fanout, rng)
    return model.embed(data.features, batch)


def epoch_batches(data: FlowData, config: TrainConfig, epoch: int):
    """Shuffled target-edge id batches for one epoch plus the generator used to sample them."""
    rng = np.random.default_rng([config.seed, epoch])
    return target_batches(len(data), config.gnn_batch_size, True, rng), rng


def score_data(model: GraphIDS, data: FlowData, config: TrainConfig) -> np.ndarray:
    """Eval-mode anomaly score for every flow, in table order (no attention masking)."""
    was_training = model.training
    model.eval()
    rng = np.random.default_rng([config.seed, _EVAL_STREAM])
    out = []
    try:
        with torch.no_grad():
            for ids in target_batches(len(data), config.gnn_batch_size, shuffle=False):
                h = embed_targets(model, data, config, ids, rng)
                for wb in assemble_windows(h, config.window_size, config.ae_batch_size):
                    out.append(model.reconstruct(wb).valid_scores.double().numpy())
    finally:
        model.train(was_training)
    return np.concatenate(out) if out else np.empty(0)
