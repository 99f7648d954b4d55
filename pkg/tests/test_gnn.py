import numpy as np
import pytest
import torch

from graphids.gnn import EGraphSAGE, gnn_backward, init_node_states
from graphids.graph import build_graph, sample_edge_batch

from test_graph import random_pairs


def setup(pairs, dim=3, seed=0, dtype=torch.float64):
    rng = np.random.default_rng(seed)
    feats = rng.random((len(pairs), dim))
    g = build_graph(feats, src=np.array([a for a, _ in pairs], dtype=object),
                    dst=np.array([b for _, b in pairs], dtype=object))
    return g, torch.tensor(feats, dtype=dtype)


def full_batch(g, hops=1):
    return sample_edge_batch(g, np.arange(g.n_edges), hops, fanout=max(1, int(g.degree.max())),
                             seed=0)


def test_init_states():
    assert torch.equal(init_node_states(3, 4), torch.ones(3, 4))
    assert init_node_states(0, 4).shape == (0, 4)


def test_zero_weights_give_zero_embeddings():
    g, x = setup(random_pairs(6, 12, 0))
    enc = EGraphSAGE(3, 5).double()
    for p in enc.parameters():
        torch.nn.init.zeros_(p)
    assert torch.count_nonzero(enc(full_batch(g), x)) == 0


def test_single_edge_hand_evaluation():
    # scalar reference: one edge u->v, 1-d states and features, identity hidden size 1
    enc = EGraphSAGE(1, 1, hops=1, node_dim=1, hidden_dim=1).double()
    a, b, c, bias = 0.7, -0.4, 1.5, 0.1
    p, q, pb = 2.0, -3.0, 0.25
    with torch.no_grad():
        enc.layers[0].weight.copy_(torch.tensor([[a, b, c]], dtype=torch.float64))
        enc.layers[0].bias.fill_(bias)
        enc.edge_proj.weight.copy_(torch.tensor([[p, q]], dtype=torch.float64))
        enc.edge_proj.bias.fill_(pb)
    e = 0.6
    g = build_graph(np.array([[e]]), src=np.array(["u"], dtype=object),
                    dst=np.array(["v"], dtype=object))
    out = enc(sample_edge_batch(g, [0]), torch.tensor([[e]], dtype=torch.float64))

    def relu(z):
        return z if z > 0 else 0.0
    h_u = relu(a * 1.0 + b * 1.0 + c * e + bias)  # own state, neighbour state, edge feature
    h_v = relu(a * 1.0 + b * 1.0 + c * e + bias)
    assert out.item() == pytest.approx(p * h_u + q * h_v + pb, abs=1e-12)


def test_isolated_node_message_is_zero():
    enc = EGraphSAGE(2, 3, hops=2).double()
    g, x = setup([("A", "B")], dim=2)
    b = sample_edge_batch(g, [0], hops=2)
    # at hop 2, nodes reached in hop 1 are boundary nodes with no sampled edges
    assert torch.isfinite(enc(b, x)).all()


def test_nonfinite_features_rejected():
    g, x = setup(random_pairs(4, 5, 1))
    x[0, 0] = float("nan")
    with pytest.raises(ValueError):
        EGraphSAGE(3, 4).double()(full_batch(g), x)


def test_permutation_equivariance():
    pairs = random_pairs(9, 40, 2)
    g, x = setup(pairs)
    enc = EGraphSAGE(3, 6).double().eval()
    base = enc(full_batch(g), x)
    perm = np.random.default_rng(3).permutation(len(pairs))
    g2, _ = setup([pairs[i] for i in perm])
    out = enc(full_batch(g2), x[torch.from_numpy(perm)])
    assert torch.allclose(out, base[torch.from_numpy(perm)], rtol=1e-12, atol=1e-12)


def test_duplicated_edges_leave_mean_unchanged():
    pairs = random_pairs(7, 20, 5)
    g, x = setup(pairs)
    enc = EGraphSAGE(3, 4).double().eval()
    base = enc(full_batch(g), x)
    g2, _ = setup(pairs + pairs)
    out = enc(full_batch(g2), torch.cat([x, x]))
    assert torch.allclose(out[:20], base, atol=1e-12) and torch.allclose(out[20:], base, atol=1e-12)


def test_one_hop_locality_is_bit_exact():
    g, x = setup(random_pairs(20, 80, 7))
    enc = EGraphSAGE(3, 4).double().eval()
    b = sample_edge_batch(g, [5], hops=1, fanout=1000)
    u, v = g.src[5], g.dst[5]
    far = [e for e in range(80) if not {g.src[e], g.dst[e]} & {u, v}]
    x2 = x.clone()
    x2[far] = 123.0
    assert torch.equal(enc(b, x), enc(b, x2))


def test_fanout_identity_matches_full_neighbourhood():
    g, x = setup(random_pairs(10, 50, 8))
    enc = EGraphSAGE(3, 4, hops=2).double().eval()
    b1 = sample_edge_batch(g, np.arange(50), 2, fanout=int(g.degree.max()), seed=1)
    b2 = sample_edge_batch(g, np.arange(50), 2, fanout=32_768, seed=99)
    assert torch.allclose(enc(b1, x), enc(b2, x), atol=1e-12)


def test_dropout_only_in_training():
    g, x = setup(random_pairs(8, 30, 9))
    enc = EGraphSAGE(3, 4, dropout=0.5).double()
    b = full_batch(g)
    enc.eval()
    assert torch.equal(enc(b, x), enc(b, x))
    enc.train()
    torch.manual_seed(0)
    a1 = enc(b, x)
    torch.manual_seed(0)
    assert torch.equal(a1, enc(b, x))
    enc.eval()
    assert not torch.equal(a1, enc(b, x))


def test_backward_contracts():
    g, x = setup(random_pairs(5, 5, 10))
    enc = EGraphSAGE(3, 4).double()
    b = full_batch(g)
    with torch.no_grad():
        emb = enc(b, x)
    with pytest.raises(RuntimeError):
        gnn_backward(enc, emb, torch.ones_like(emb))
    emb = enc(b, x)
    zero = gnn_backward(enc, emb, torch.zeros_like(emb))
    assert all(torch.count_nonzero(t) == 0 for t in zero.values())
    g1 = gnn_backward(enc, enc(b, x), torch.ones_like(emb))
    g2 = gnn_backward(enc, enc(b, x), torch.ones_like(emb))
    assert all(torch.equal(g1[k], g2[k]) for k in g1)


@pytest.mark.parametrize("include_edge_features", [False, True])
def test_gradients_match_finite_differences(include_edge_features):
    g, x = setup(random_pairs(4, 5, 11), dim=3)
    torch.manual_seed(1)
    enc = EGraphSAGE(3, 4, hops=2, include_edge_features=include_edge_features).double()
    b = full_batch(g, hops=2)
    upstream = torch.randn(5, 4, dtype=torch.float64)
    grads = gnn_backward(enc, enc(b, x), upstream)
    step = 1e-5
    for name, p in enc.named_parameters():
        flat = p.data.view(-1)
        num = torch.empty_like(flat)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            fp = (enc(b, x) * upstream).sum().item()
            flat[i] = orig - step
            fm = (enc(b, x) * upstream).sum().item()
            flat[i] = orig
            num[i] = (fp - fm) / (2 * step)
        ana = grads[name].view(-1)
        rel = (ana - num).abs() / torch.clamp(torch.maximum(ana.abs(), num.abs()), min=1e-8)
        assert rel.max().item() <= 1e-4, name
