import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from graphids.mae import (MaskedAutoencoder, WindowBatch, anomaly_scores, assemble_windows,
                          attention_masks, default_heads, mae_loss, make_reconstruction,
                          positional_encoding, sample_attention_mask)


def batch(n_valid, d=8, window_size=16, windows=2, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return assemble_windows(torch.randn(n_valid, d, generator=g, dtype=dtype),
                            window_size, windows)[0]


def model(d=8, d_model=16, **kw):
    torch.manual_seed(0)
    return MaskedAutoencoder(d, d_model, **kw)


def test_packing_arithmetic():
    (wb,) = assemble_windows(torch.zeros(1024, 3), 512, 64)
    assert wb.n == 32_768 and wb.n_valid == 1024 and int((~wb.valid).sum()) == 31_744
    (full,) = assemble_windows(torch.zeros(32_768, 3), 512, 64)
    assert bool(full.valid.all())
    assert assemble_windows(torch.zeros(0, 3), 512, 64) == []
    parts = assemble_windows(torch.arange(10.0)[:, None], 2, 2)
    assert [p.n_valid for p in parts] == [4, 4, 2]
    assert parts[1].embeddings[:, 0].tolist() == [4, 5, 6, 7]


def test_mask_cardinality_and_support():
    valid = torch.zeros(600, dtype=torch.bool)
    valid[:512] = True
    m = sample_attention_mask(valid, 0.15, seed=4)
    assert int(m.sum()) == 76 == math.floor(0.15 * 512)
    assert not bool((m & ~valid).any())
    assert int(sample_attention_mask(valid, 0.0, seed=4).sum()) == 0
    assert torch.equal(m, sample_attention_mask(valid, 0.15, seed=4))
    with pytest.raises(ValueError):
        sample_attention_mask(valid, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 10), st.sampled_from([0.0, 0.15, 0.3, 0.5, 0.7]),
       st.sampled_from(["masked_to_all", "masked_pairs"]), st.integers(0, 999))
def test_attention_mask_contract(n_valid, n_pad, ratio, mode, seed):
    valid = torch.cat([torch.ones(n_valid, dtype=torch.bool), torch.zeros(n_pad, dtype=torch.bool)])
    masked = sample_attention_mask(valid, ratio, seed)
    allowed, cross = attention_masks(valid, masked, mode)
    eye = torch.eye(len(valid), dtype=torch.bool)
    assert bool(allowed.diagonal().all()) and bool(cross.diagonal().all())
    vv = allowed[valid][:, valid]
    assert torch.equal(vv, vv.T)
    pad_keys = ~valid[None, :] & ~eye
    assert not bool((allowed & pad_keys).any()) and not bool((cross & pad_keys).any())
    for i in np.flatnonzero(masked.numpy()):
        for j in np.flatnonzero(valid.numpy()):
            if i == j:
                continue
            if mode == "masked_to_all" or masked[j]:
                assert not allowed[i, j] and not allowed[j, i]
            if mode == "masked_to_all":
                assert not cross[j, i]  # masked encoder outputs are hidden from other queries
                assert cross[i, j] == bool(not masked[j])  # masked queries still read context


def test_score_examples():
    h = torch.tensor([[1.0, 2.0]])
    assert anomaly_scores(h, torch.zeros(1, 2)).item() == 5.0
    rec = make_reconstruction(h, h.clone(), torch.tensor([True]))
    assert rec.scores.item() == 0.0


def test_loss_examples():
    h = torch.tensor([[1.0], [math.sqrt(3.0)], [0.0]])
    h_hat = torch.tensor([[0.0], [0.0], [1e6]])
    valid = torch.tensor([True, True, False])
    rec = make_reconstruction(h, h_hat, valid)
    assert mae_loss(rec).item() == pytest.approx(2.0)
    assert bool(torch.isnan(rec.scores[2]))
    zero = make_reconstruction(h, h.clone(), valid)
    assert mae_loss(zero).item() == 0.0
    with pytest.raises(ValueError):
        mae_loss(rec, torch.zeros(3, dtype=torch.bool))


def test_positional_encodings():
    pe = positional_encoding("sinusoidal", 3, 6)
    assert torch.equal(pe[0, 0::2], torch.zeros(3)) and torch.equal(pe[0, 1::2], torch.ones(3))
    assert positional_encoding("sinusoidal", 2, 4)[1, 0].item() == pytest.approx(0.8415, abs=1e-4)
    with pytest.raises(ValueError):
        positional_encoding("sinusoidal", 2, 5)
    assert torch.count_nonzero(positional_encoding("none", 4, 4)) == 0
    plain = model()
    assert plain.pos is None
    assert not any("pos" in n for n, _ in plain.named_parameters())
    learn = model(pos_encoding="learnable", max_len=32)
    assert learn.pos.shape == (32, 16) and learn.pos.requires_grad


def test_default_heads_and_depth():
    assert (default_heads(8), default_heads(32), default_heads(48)) == (1, 2, 3)
    m = model(num_layers=3)
    assert len(m.encoder) == len(m.decoder) == 3


def test_shape_mismatch():
    with pytest.raises(ValueError):
        model(d=5)(batch(10))


def test_eval_is_deterministic_and_mask_free():
    m = model().eval()
    wb = batch(20)
    a = m(wb)
    wb.masked = sample_attention_mask(wb.valid, 0.5, seed=1)
    b = m(wb)
    assert torch.equal(a.h_hat, b.h_hat) and torch.equal(m(wb).h_hat, b.h_hat)
    m.train()
    c = m(wb)
    assert not torch.allclose(c.h_hat, a.h_hat)


def test_attention_rows_normalised():
    m = model().train()
    wb = batch(25)
    wb.masked = sample_attention_mask(wb.valid, 0.3, seed=2)
    m(wb)
    allowed, _ = attention_masks(wb.valid[None], wb.masked[None], "masked_to_all")
    w = m.encoder[0].attn.last_weights[0]  # (heads, L, L)
    assert torch.allclose(w.sum(-1), torch.ones_like(w.sum(-1)), atol=1e-6)
    assert torch.count_nonzero(w[:, ~allowed[0]]) == 0


@pytest.mark.parametrize("scope", ["batch", "window"])
def test_permutation_equivariance(scope):
    m = model(scope=scope).eval()
    wb = batch(24, window_size=16, windows=2)
    base = m(wb)
    if scope == "window":  # permute inside the first window only
        perm = torch.cat([torch.randperm(16, generator=torch.Generator().manual_seed(1)),
                          torch.arange(16, 32)])
    else:
        perm = torch.cat([torch.randperm(24, generator=torch.Generator().manual_seed(1)),
                          torch.arange(24, 32)])
    permuted = WindowBatch(wb.embeddings[perm], wb.valid[perm], 2, 16)
    out = m(permuted)
    ref = base.h_hat[perm]
    rel = (out.h_hat - ref).abs().max() / ref.abs().max()
    assert rel.item() <= 1e-5
    vs = base.scores[perm][wb.valid[perm]]
    assert torch.allclose(out.valid_scores, vs, rtol=1e-5, atol=1e-7)


def test_padding_does_not_leak():
    m = model().eval()
    wb = batch(10)
    other = WindowBatch(wb.embeddings.clone(), wb.valid, wb.windows, wb.window_size)
    other.embeddings[~wb.valid] = 50.0
    assert torch.allclose(m(wb).valid_scores, m(other).valid_scores, atol=1e-6)


def test_loss_gradients_match_finite_differences():
    torch.manual_seed(3)
    m = MaskedAutoencoder(8, 4, num_layers=1).double().train()
    wb = batch(20, d=8, window_size=8, windows=3, dtype=torch.float64)
    wb.masked = sample_attention_mask(wb.valid, 0.15, seed=5)
    loss = mae_loss(m(wb))
    params = dict(m.named_parameters())
    grads = dict(zip(params, torch.autograd.grad(loss, list(params.values()))))
    step = 1e-5
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                fp = mae_loss(m(wb)).item()
                flat[i] = orig - step
                fm = mae_loss(m(wb)).item()
                flat[i] = orig
                num = (fp - fm) / (2 * step)
                ana = grads[name].view(-1)[i].item()
                assert abs(ana - num) <= 1e-4 * max(abs(ana), abs(num), 1e-6), (name, i, ana, num)
