"""Directed host/flow multigraph and fanout-capped neighbourhood sampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from graphids import kernels
from graphids.ingest import FlowTable

INCIDENCE_MODES = ("both", "in", "out")


@dataclass
class FlowGraph:
    """Hosts are nodes (dense ids, first-seen order); flow ``i`` is edge ``i``.

    ``indptr``/``inc_edge``/``inc_other`` form a CSR incidence index: for
    node ``v`` the slice ``indptr[v]:indptr[v+1]`` lists its incident edges and
    the node at the other end of each.
    """

    hosts: list[str]
    src: np.ndarray
    dst: np.ndarray
    features: np.ndarray
    flow_index: np.ndarray
    indptr: np.ndarray
    inc_edge: np.ndarray
    inc_other: np.ndarray
    incidence: str = "both"

    @property
    def n_nodes(self) -> int:
        return len(self.hosts)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def incident(self, node: int) -> np.ndarray:
        return self.inc_edge[self.indptr[node]:self.indptr[node + 1]]

    def subgraph(self, edge_ids) -> "FlowGraph":
        """Keep only ``edge_ids`` (node ids and names are preserved)."""
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        return _assemble(self.hosts, self.src[edge_ids], self.dst[edge_ids],
                         self.features[edge_ids], self.flow_index[edge_ids], self.incidence)


def _assemble(hosts, src, dst, features, flow_index, incidence) -> FlowGraph:
    if incidence not in INCIDENCE_MODES:
        raise ValueError(f"incidence must be one of {INCIDENCE_MODES}, got {incidence!r}")
    n_nodes, n_edges = len(hosts), len(src)
    eids = np.arange(n_edges, dtype=np.int64)
    owner, edge, other = [], [], []
    if incidence in ("both", "in"):
        owner.append(dst), edge.append(eids), other.append(src)
    if incidence in ("both", "out"):
        owner.append(src), edge.append(eids), other.append(dst)
    owner = np.concatenate(owner) if n_edges else np.empty(0, dtype=np.int64)
    edge = np.concatenate(edge) if n_edges else np.empty(0, dtype=np.int64)
    other = np.concatenate(other) if n_edges else np.empty(0, dtype=np.int64)
    order = np.argsort(owner, kind="stable")
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(owner, minlength=n_nodes), out=indptr[1:])
    return FlowGraph(list(hosts), src, dst, features, flow_index, indptr,
                     edge[order].astype(np.int64), other[order].astype(np.int64), incidence)


def build_graph(data, features=None, *, src=None, dst=None, incidence: str = "both") -> FlowGraph:
    """Build the flow graph from a :class:`FlowTable`, or from endpoints plus a feature matrix.

    ``features`` overrides the table's feature matrix (e.g. with scaled values).
    """
    if isinstance(data, FlowTable):
        src_names, dst_names = data.src, data.dst
        feats = data.features if features is None else features
    else:
        if src is None or dst is None:
            raise ValueError("endpoints are required when no FlowTable is given")
        src_names, dst_names, feats = src, dst, data
    feats = np.asarray(feats, dtype=np.float64)
    n = len(src_names)
    feats = feats.reshape(n, -1) if n else feats.reshape(0, feats.shape[-1] if feats.ndim == 2 else 0)

    index: dict[str, int] = {}
    s = np.empty(n, dtype=np.int64)
    d = np.empty(n, dtype=np.int64)
    for i in range(n):
        a, b = src_names[i], dst_names[i]
        if a == "" or b == "":
            raise ValueError(f"flow {i} has an empty endpoint")
        s[i] = index.setdefault(a, len(index))
        d[i] = index.setdefault(b, len(index))
    return _assemble(list(index), s, d, feats, np.arange(n, dtype=np.int64), incidence)


def evict_stale(graph: FlowGraph, timestamps, horizon: float) -> FlowGraph:
    """Drop edges older than ``horizon`` relative to the newest timestamp."""
    ts = np.asarray(timestamps, dtype=np.float64)
    if len(ts) != graph.n_edges:
        raise ValueError("one timestamp per edge is required")
    if graph.n_edges == 0:
        return graph
    return graph.subgraph(np.flatnonzero(ts >= ts.max() - horizon))


def dump_graph(graph: FlowGraph, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>.nodes.csv`` (node_id,host) and ``<prefix>.edges.csv``
    (edge_id,src,dst,flow_index,f0..fN) for inspection."""
    prefix = Path(prefix)
    nodes_path = prefix.with_name(prefix.name + ".nodes.csv")
    edges_path = prefix.with_name(prefix.name + ".edges.csv")
    with open(nodes_path, "w") as fh:
        fh.write("node_id,host\n")
        for i, h in enumerate(graph.hosts):
            fh.write(f"{i},{h}\n")
    cols = np.column_stack([np.arange(graph.n_edges), graph.src, graph.dst, graph.flow_index])
    header = "edge_id,src,dst,flow_index," + ",".join(
        f"f{j}" for j in range(graph.features.shape[1]))
    body = np.column_stack([cols.astype(np.float64), graph.features])
    fmt = ["%d"] * 4 + ["%.17g"] * graph.features.shape[1]
    np.savetxt(edges_path, body, delimiter=",", header=header, comments="", fmt=fmt)
    return nodes_path, edges_path


@dataclass
class EdgeBatch:
    """Target edges plus their sampled neighbourhood, in batch-local node ids.

    ``nodes[k]`` is the global id of local node ``k``. For local node ``k`` the
    slice ``inc_ptr[k]:inc_ptr[k+1]`` of ``inc_edge``/``inc_other`` lists its
    sampled incident edges (global ids) and the local id of the other
    endpoint. Nodes on the outer boundary have no sampled edges.
    """

    target_edges: np.ndarray
    target_src: np.ndarray
    target_dst: np.ndarray
    nodes: np.ndarray
    inc_ptr: np.ndarray
    inc_edge: np.ndarray
    inc_other: np.ndarray
    hops: int
    fanout: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def inc_owner(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_nodes, dtype=np.int64), np.diff(self.inc_ptr))

    @property
    def subgraph_edges(self) -> np.ndarray:
        return np.unique(np.concatenate([self.target_edges, self.inc_edge]))

    def sampled_incident(self, local_node: int) -> np.ndarray:
        return self.inc_edge[self.inc_ptr[local_node]:self.inc_ptr[local_node + 1]]


def sample_edge_batch(graph: FlowGraph, edge_ids, hops: int = 1, fanout: int = 32_768,
                      seed=None) -> EdgeBatch:
    """Expand ``hops`` rounds outward from the endpoints of ``edge_ids``.

    Each newly reached node keeps at most ``fanout`` of its incident edges,
    drawn uniformly without replacement. ``seed`` may be an int or a
    ``numpy.random.Generator``.
    """
    if hops < 1:
        raise ValueError("hops must be >= 1")
    if fanout < 1:
        raise ValueError("fanout must be >= 1")
    targets = np.asarray(edge_ids, dtype=np.int64).ravel()
    if len(targets) and (targets.min() < 0 or targets.max() >= graph.n_edges):
        bad = targets[(targets < 0) | (targets >= graph.n_edges)][0]
        raise IndexError(f"edge id {bad} out of range for a graph with {graph.n_edges} edges")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    local = np.full(graph.n_nodes, -1, dtype=np.int64)
    frontier = np.unique(np.concatenate([graph.src[targets], graph.dst[targets]]))
    local[frontier] = np.arange(len(frontier))
    order = [frontier]
    n_local = len(frontier)
    per_node: dict[int, np.ndarray] = {}
    deg = graph.degree
    for _ in range(hops):
        if len(frontier) == 0:
            break
        n_keys = int(deg[frontier][deg[frontier] > fanout].sum())
        keys = rng.random(n_keys)
        ptr, pos = kernels.sample_segments(graph.indptr, frontier, int(fanout), keys)
        for j, v in enumerate(frontier):
            per_node[int(v)] = pos[ptr[j]:ptr[j + 1]]
        reached = np.unique(graph.inc_other[pos])
        new = reached[local[reached] < 0]
        local[new] = np.arange(n_local, n_local + len(new))
        n_local += len(new)
        order.append(new)
        frontier = new

    nodes = np.concatenate(order)
    counts = np.array([len(per_node.get(int(v), ())) for v in nodes], dtype=np.int64)
    inc_ptr = np.zeros(len(nodes) + 1, dtype=np.int64)
    np.cumsum(counts, out=inc_ptr[1:])
    pos_all = (np.concatenate([per_node[int(v)] for v in nodes if int(v) in per_node])
               if per_node else np.empty(0, dtype=np.int64))
    return EdgeBatch(
        target_edges=targets,
        target_src=local[graph.src[targets]],
        target_dst=local[graph.dst[targets]],
        nodes=nodes,
        inc_ptr=inc_ptr,
        inc_edge=graph.inc_edge[pos_all],
        inc_other=local[graph.inc_other[pos_all]],
        hops=hops,
        fanout=fanout,
    )


def target_batches(n_edges: int, batch_size: int, shuffle: bool = True,
                   rng: np.random.Generator | None = None) -> list[np.ndarray]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    ids = np.arange(n_edges, dtype=np.int64)
    if shuffle:
        ids = (rng or np.random.default_rng()).permutation(ids)
    return [ids[i:i + batch_size] for i in range(0, n_edges, batch_size)]


def batch_iterator(graph: FlowGraph, batch_size: int, shuffle: bool = True, seed: int = 0,
                   epoch: int = 0, hops: int = 1, fanout: int = 32_768) -> Iterator[EdgeBatch]:
    """One epoch of edge mini-batches; each edge is a target exactly once.

    The stream depends only on ``(seed, epoch)``, so any epoch can be replayed.
    """
    rng = np.random.default_rng([seed, epoch])
    for ids in target_batches(graph.n_edges, batch_size, shuffle, rng):
        yield sample_edge_batch(graph, ids, hops, fanout, rng)
