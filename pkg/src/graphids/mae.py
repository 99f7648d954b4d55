"""Transformer masked autoencoder over batches of flow embeddings.

Embeddings are packed into batches of ``windows * window_size`` positions and
treated as one sequence (or one sequence per window with
``scope="window"``). No positional information is used unless explicitly
requested, so the model is equivariant to reordering the flows of a batch.

Training applies a random symmetric attention mask: a masked position stops
serving as a key for the others and stops attending to the others. Every
query keeps its own key, so no softmax row is ever empty. Padding is never a
key for anyone but itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

MASK_MODES = ("masked_to_all", "masked_pairs")
PE_KINDS = ("none", "sinusoidal", "learnable")


@dataclass
class WindowBatch:
    embeddings: torch.Tensor       # (n, d)
    valid: torch.Tensor            # (n,) bool, False on padding
    windows: int
    window_size: int
    masked: torch.Tensor | None = None   # (n,) bool; None in eval

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())


@dataclass
class Reconstruction:
    h: torch.Tensor
    h_hat: torch.Tensor
    scores: torch.Tensor           # NaN at padded positions
    valid: torch.Tensor

    @property
    def valid_scores(self) -> torch.Tensor:
        return self.scores[self.valid]


def assemble_windows(embeddings: torch.Tensor, window_size: int = 512,
                     windows: int = 64) -> list[WindowBatch]:
    """Pack rows in order into batches of ``windows * window_size``; zero-pad the last."""
    if window_size < 1 or windows < 1:
        raise ValueError("window_size and windows must be >= 1")
    n = window_size * windows
    out = []
    for start in range(0, embeddings.shape[0], n):
        chunk = embeddings[start:start + n]
        m = chunk.shape[0]
        valid = torch.zeros(n, dtype=torch.bool)
        valid[:m] = True
        if m < n:
            pad = torch.zeros(n - m, chunk.shape[1], dtype=chunk.dtype)
            chunk = torch.cat([chunk, pad], dim=0)
        out.append(WindowBatch(chunk, valid, windows, window_size))
    return out


def sample_attention_mask(valid, mask_ratio: float, seed=None) -> torch.Tensor:
    """Choose ``floor(mask_ratio * n_valid)`` distinct valid positions uniformly."""
    if not 0.0 <= mask_ratio < 1.0:
        raise ValueError(f"mask_ratio must lie in [0, 1), got {mask_ratio}")
    valid = torch.as_tensor(valid, dtype=torch.bool)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = np.flatnonzero(valid.numpy())
    k = int(math.floor(mask_ratio * len(idx)))
    mask = torch.zeros(len(valid), dtype=torch.bool)
    if k:
        mask[torch.from_numpy(rng.choice(idx, size=k, replace=False))] = True
    return mask


def attention_masks(valid: torch.Tensor, masked: torch.Tensor | None,
                    mode: str = "masked_to_all") -> tuple[torch.Tensor, torch.Tensor]:
    """Boolean ``allowed[query, key]`` matrices for self- and cross-attention.

    Works on (..., L) inputs. In cross-attention the queries themselves are
    never masked; only masked encoder outputs are hidden (except a query's own).
    """
    if mode not in MASK_MODES:
        raise ValueError(f"mask mode must be one of {MASK_MODES}")
    L = valid.shape[-1]
    eye = torch.eye(L, dtype=torch.bool)
    if masked is None:
        masked = torch.zeros_like(valid)
    masked = masked & valid
    k_valid = valid[..., None, :]
    q_m, k_m = masked[..., :, None], masked[..., None, :]
    if mode == "masked_to_all":
        blocked = q_m | k_m
        cross_blocked = k_m.expand(blocked.shape)
    else:
        blocked = q_m & k_m
        cross_blocked = blocked
    self_allowed = (k_valid & ~blocked) | eye
    cross_allowed = (k_valid & ~cross_blocked) | eye
    return self_allowed, cross_allowed


def positional_encoding(kind: str, length: int, dim: int) -> torch.Tensor:
    """Fixed encodings: zeros for ``none``; sin/cos at even/odd dims for ``sinusoidal``."""
    if kind == "none":
        return torch.zeros(length, dim)
    if kind != "sinusoidal":
        raise ValueError(f"no fixed encoding for kind {kind!r}")
    if dim % 2:
        raise ValueError("sinusoidal positional encoding needs an even dimension")
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    rate = torch.pow(10000.0, torch.arange(0, dim, 2, dtype=torch.float64) / dim)
    pe = torch.zeros(length, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos / rate)
    pe[:, 1::2] = torch.cos(pos / rate)
    return pe.float()


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout: float = 0.0):
        super().__init__()
        if d_model % n_heads:
            raise ValueError(f"{n_heads} heads do not divide d_model={d_model}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)
        self.last_weights: torch.Tensor | None = None

    def _split(self, x):
        B, L, _ = x.shape
        return x.view(B, L, self.n_heads, self.d_head).transpose(1, 2)

    def forward(self, query, key_value, allowed):
        B, L, D = query.shape
        q, k, v = self._split(self.q(query)), self._split(self.k(key_value)), self._split(self.v(key_value))
        logits = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        logits = logits.masked_fill(~allowed[:, None, :, :], float("-inf"))
        weights = torch.softmax(logits, dim=-1)
        self.last_weights = weights.detach()
        ctx = self.dropout(weights) @ v
        return self.out(ctx.transpose(1, 2).reshape(B, L, D))


class _FeedForward(nn.Sequential):
    def __init__(self, d_model: int, d_ff: int):
        super().__init__(nn.Linear(d_model, d_ff), nn.ReLU(), nn.Linear(d_ff, d_model))


class EncoderBlock(nn.Module):
    def __init__(self, d_model, n_heads, d_ff, dropout):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, n_heads, dropout)
        self.ff = _FeedForward(d_model, d_ff)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, allowed):
        x = self.norm1(x + self.drop(self.attn(x, x, allowed)))
        return self.norm2(x + self.drop(self.ff(x)))


class DecoderBlock(nn.Module):
    def __init__(self, d_model, n_heads, d_ff, dropout):
        super().__init__()
        self.self_attn = MultiHeadAttention(d_model, n_heads, dropout)
        self.cross_attn = MultiHeadAttention(d_model, n_heads, dropout)
        self.ff = _FeedForward(d_model, d_ff)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.norm3 = nn.LayerNorm(d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, memory, self_allowed, cross_allowed):
        x = self.norm1(x + self.drop(self.self_attn(x, x, self_allowed)))
        x = self.norm2(x + self.drop(self.cross_attn(x, memory, cross_allowed)))
        return self.norm3(x + self.drop(self.ff(x)))


def default_heads(d_model: int) -> int:
    heads = max(1, d_model // 16)
    while d_model % heads:
        heads -= 1
    return heads


class MaskedAutoencoder(nn.Module):
    def __init__(self, in_dim: int, d_model: int = 32, num_layers: int = 1,
                 n_heads: int | None = None, ff_mult: int = 4, dropout: float = 0.0,
                 mask_mode: str = "masked_to_all", pos_encoding: str = "none",
                 max_len: int = 32_768, scope: str = "batch"):
        super().__init__()
        if pos_encoding not in PE_KINDS:
            raise ValueError(f"pos_encoding must be one of {PE_KINDS}")
        if scope not in ("batch", "window"):
            raise ValueError("scope must be 'batch' or 'window'")
        if mask_mode not in MASK_MODES:
            raise ValueError(f"mask mode must be one of {MASK_MODES}")
        n_heads = n_heads or default_heads(d_model)
        self.in_dim = in_dim
        self.mask_mode = mask_mode
        self.scope = scope
        self.pos_kind = pos_encoding
        self.in_proj = nn.Linear(in_dim, d_model)
        self.encoder = nn.ModuleList(
            EncoderBlock(d_model, n_heads, ff_mult * d_model, dropout) for _ in range(num_layers))
        self.decoder = nn.ModuleList(
            DecoderBlock(d_model, n_heads, ff_mult * d_model, dropout) for _ in range(num_layers))
        self.out_proj = nn.Linear(d_model, in_dim)
        if pos_encoding == "learnable":
            self.pos = nn.Parameter(torch.zeros(max_len, d_model))
            nn.init.normal_(self.pos, std=0.02)
        elif pos_encoding == "sinusoidal":
            self.register_buffer("pos", positional_encoding("sinusoidal", max_len, d_model),
                                 persistent=False)
        else:
            self.pos = None

    def _sequences(self, x: torch.Tensor, wb: WindowBatch):
        """Reshape (n, ...) into (B, L, ...) according to the attention scope."""
        if self.scope == "window":
            return x.reshape(wb.windows, wb.window_size, *x.shape[1:])
        return x.reshape(1, wb.n, *x.shape[1:])

    def forward(self, wb: WindowBatch) -> Reconstruction:
        h = wb.embeddings
        if h.shape[-1] != self.in_dim:
            raise ValueError(f"embedding dim {h.shape[-1]} does not match model input {self.in_dim}")
        masked = wb.masked if self.training else None
        x = self._sequences(self.in_proj(h), wb)
        if self.pos is not None:
            L = x.shape[1]
            if L > self.pos.shape[0]:
                raise ValueError(f"sequence of {L} exceeds positional table of {self.pos.shape[0]}")
            x = x + self.pos[:L].to(x.dtype)
        valid = self._sequences(wb.valid, wb)
        m = None if masked is None else self._sequences(masked, wb)
        self_allowed, cross_allowed = attention_masks(valid, m, self.mask_mode)
        memory = x
        for block in self.encoder:
            memory = block(memory, self_allowed)
        y = x
        for block in self.decoder:
            y = block(y, memory, self_allowed, cross_allowed)
        h_hat = self.out_proj(y).reshape(wb.n, -1)
        return make_reconstruction(h, h_hat, wb.valid)


def anomaly_scores(h: torch.Tensor, h_hat: torch.Tensor) -> torch.Tensor:
    """Squared L2 reconstruction error per row."""
    return ((h - h_hat) ** 2).sum(dim=-1)


def make_reconstruction(h, h_hat, valid) -> Reconstruction:
    s = anomaly_scores(h, h_hat)
    scores = torch.where(valid, s, torch.full_like(s, float("nan")))
    return Reconstruction(h, h_hat, scores, valid)


def mae_loss(recon: Reconstruction, valid: torch.Tensor | None = None) -> torch.Tensor:
    """Mean of the valid positions' scores."""
    valid = recon.valid if valid is None else valid
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("loss undefined: batch has no valid positions")
    return anomaly_scores(recon.h, recon.h_hat)[valid].sum() / n_valid
