"""E-GraphSAGE edge encoder.

Layer ``k`` updates every node state from the mean of
``concat(state_neighbour, edge_features)`` over its sampled incident edges::

    m_v   = mean_{(u,v) sampled} [h_u || e_uv]        (zero if v has none)
    h_v' = act(W_k [h_v || m_v])

Node states start as all-ones vectors. A flow's embedding is a linear map of
the concatenated final states of its two endpoints.
"""

from __future__ import annotations

import torch
from torch import nn

from graphids.graph import EdgeBatch

_ACTIVATIONS = {"relu": nn.ReLU, "gelu": nn.GELU, "tanh": nn.Tanh, "identity": nn.Identity}


def init_node_states(n_nodes: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    return torch.ones(n_nodes, dim, dtype=dtype)


class EGraphSAGE(nn.Module):
    def __init__(self, edge_dim: int, out_dim: int, hops: int = 1, node_dim: int | None = None,
                 hidden_dim: int | None = None, dropout: float = 0.0, activation: str = "relu",
                 include_edge_features: bool = False):
        super().__init__()
        if hops < 1:
            raise ValueError("hops must be >= 1")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        self.edge_dim = edge_dim
        self.node_dim = node_dim or edge_dim
        self.hidden_dim = hidden_dim or out_dim
        self.out_dim = out_dim
        self.include_edge_features = include_edge_features
        dims = [self.node_dim] + [self.hidden_dim] * hops
        self.layers = nn.ModuleList(
            nn.Linear(2 * dims[k] + edge_dim, dims[k + 1]) for k in range(hops))
        self.act = _ACTIVATIONS[activation]()
        self.dropout = nn.Dropout(dropout)
        proj_in = 2 * self.hidden_dim + (edge_dim if include_edge_features else 0)
        self.edge_proj = nn.Linear(proj_in, out_dim)

    @property
    def hops(self) -> int:
        return len(self.layers)

    def node_states(self, batch: EdgeBatch, edge_features: torch.Tensor) -> torch.Tensor:
        owner = torch.from_numpy(batch.inc_owner)
        other = torch.from_numpy(batch.inc_other)
        e = edge_features[torch.from_numpy(batch.inc_edge)]
        if not torch.isfinite(e).all():
            raise ValueError("non-finite edge features reached the GNN")
        count = torch.bincount(owner, minlength=batch.n_nodes).clamp(min=1).to(e.dtype)
        h = init_node_states(batch.n_nodes, self.node_dim, dtype=e.dtype)
        for layer in self.layers:
            msg = torch.cat([h[other], e], dim=1)
            agg = torch.zeros(batch.n_nodes, msg.shape[1], dtype=e.dtype).index_add_(0, owner, msg)
            agg = agg / count[:, None]
            h = self.dropout(self.act(layer(torch.cat([h, agg], dim=1))))
        return h

    def forward(self, batch: EdgeBatch, edge_features: torch.Tensor) -> torch.Tensor:
        """Embeddings for ``batch.target_edges`` (rows in target order).

        ``edge_features`` is the full per-edge feature matrix of the graph the
        batch was sampled from.
        """
        h = self.node_states(batch, edge_features)
        parts = [h[torch.from_numpy(batch.target_src)], h[torch.from_numpy(batch.target_dst)]]
        if self.include_edge_features:
            parts.append(edge_features[torch.from_numpy(batch.target_edges)])
        return self.edge_proj(torch.cat(parts, dim=1))


def gnn_backward(encoder: nn.Module, embeddings: torch.Tensor,
                 upstream: torch.Tensor) -> dict[str, torch.Tensor]:
    """Parameter gradients of ``<embeddings, upstream>`` for a recorded forward pass."""
    if embeddings.grad_fn is None:
        raise RuntimeError("no recorded forward pass: call the encoder with gradients enabled first")
    names, params = zip(*[(n, p) for n, p in encoder.named_parameters() if p.requires_grad])
    grads = torch.autograd.grad(embeddings, params, grad_outputs=upstream,
                                retain_graph=True, allow_unused=True)
    return {n: (torch.zeros_like(p) if g is None else g) for n, p, g in zip(names, params, grads)}
