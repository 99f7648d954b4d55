"""Model assembly: edge encoder + reconstruction head, per variant.

``graphids``   E-GraphSAGE embeddings reconstructed by the masked Transformer.
``t_mae``      the masked Transformer on raw scaled flow features (no graph).
``simple_ae``  E-GraphSAGE embeddings reconstructed by a small MLP autoencoder.
"""

from __future__ import annotations

import torch
from torch import nn

from graphids.config import TrainConfig
from graphids.gnn import EGraphSAGE
from graphids.graph import EdgeBatch
from graphids.mae import MaskedAutoencoder, Reconstruction, WindowBatch, make_reconstruction


class SimpleAE(nn.Module):
    """Two-layer ReLU MLP encoder and decoder; attention masks are ignored."""

    def __init__(self, in_dim: int, hidden: int, bottleneck: int):
        super().__init__()
        if bottleneck < 1 or hidden < 1:
            raise ValueError(f"SimpleAE needs positive widths, got hidden={hidden}, "
                             f"bottleneck={bottleneck}")
        self.in_dim = in_dim
        self.encoder = nn.Sequential(nn.Linear(in_dim, hidden), nn.ReLU(), nn.Linear(hidden, bottleneck))
        self.decoder = nn.Sequential(nn.Linear(bottleneck, hidden), nn.ReLU(), nn.Linear(hidden, in_dim))

    def forward(self, wb: WindowBatch) -> Reconstruction:
        h = wb.embeddings
        if h.shape[-1] != self.in_dim:
            raise ValueError(f"embedding dim {h.shape[-1]} does not match model input {self.in_dim}")
        return make_reconstruction(h, self.decoder(self.encoder(h)), wb.valid)


class GraphIDS(nn.Module):
    def __init__(self, config: TrainConfig, n_features: int):
        super().__init__()
        self.variant = config.variant
        self.n_features = n_features
        if config.variant == "t_mae":
            self.encoder = None
            d = n_features
        else:
            self.encoder = EGraphSAGE(
                n_features, config.edim_out, hops=config.nhops, dropout=config.gnn_dropout,
                include_edge_features=config.edge_features_in_embedding)
            d = config.edim_out
        if config.variant == "simple_ae":
            hidden = config.simple_ae_hidden or d
            bottleneck = d // 2 if config.simple_ae_bottleneck < 0 else config.simple_ae_bottleneck
            self.autoencoder = SimpleAE(d, hidden, bottleneck)
        else:
            self.autoencoder = MaskedAutoencoder(
                d, config.embed_dim, config.num_layers, config.num_heads or None, config.ff_mult,
                config.ae_dropout, config.mask_mode, config.pos_encoding,
                max_len=config.ae_sequence, scope=config.attention_scope)
        self.embed_dim_out = d

    @property
    def uses_graph(self) -> bool:
        return self.encoder is not None

    def embed(self, edge_features: torch.Tensor, batch: EdgeBatch | None = None,
              target_edges=None) -> torch.Tensor:
        if self.encoder is None:
            ids = batch.target_edges if batch is not None else target_edges
            return edge_features[torch.as_tensor(ids)]
        return self.encoder(batch, edge_features)

    def reconstruct(self, wb: WindowBatch) -> Reconstruction:
        return self.autoencoder(wb)

    def param_groups(self, gnn_weight_decay: float, ae_weight_decay: float) -> list[dict]:
        groups = []
        if self.encoder is not None:
            groups.append({"params": list(self.encoder.parameters()),
                           "weight_decay": gnn_weight_decay, "name": "gnn"})
        groups.append({"params": list(self.autoencoder.parameters()),
                       "weight_decay": ae_weight_decay, "name": "ae"})
        return groups
