"""Synthetic labelled NetFlow traffic with planted anomalies.

Benign hosts are split into servers and clients. Each server offers one
service; each client talks to a few servers, and its flows to a server follow
that service's byte/packet/duration statistics (a two-component log-normal
mixture with a per-pair jitter), so each pair has a stable profile. Clients
never receive connections in benign traffic.

Planted anomaly kinds:

``feature_outlier``
    flows from dedicated attacker hosts whose byte and packet counts are
    scaled far outside the benign range.
``topology_scan``
    a dedicated scanner host contacting most other hosts. Each scan flow's
    features are an ordinary benign sample (drawn with the benign pair
    weights), so the per-feature marginals match benign traffic exactly and
    only the communication structure gives it away.
``burst``
    many identical copies of one short flow on a single existing benign edge.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from graphids.ingest import FlowTable

KINDS = ("feature_outlier", "topology_scan", "burst")

_FEATURES = (
    "L4_DST_PORT", "PROTOCOL", "IN_BYTES", "IN_PKTS", "OUT_BYTES", "OUT_PKTS",
    "FLOW_DURATION_MILLISECONDS", "TCP_FLAGS", "LONGEST_FLOW_PKT",
    "SHORTEST_FLOW_PKT", "MIN_TTL", "MAX_TTL",
)
_CONTINUOUS = {"IN_BYTES", "IN_PKTS", "OUT_BYTES", "OUT_PKTS",
               "FLOW_DURATION_MILLISECONDS", "LONGEST_FLOW_PKT", "SHORTEST_FLOW_PKT"}
_VOLUME = ("IN_BYTES", "IN_PKTS", "OUT_BYTES", "OUT_PKTS")
_PORTS = (22, 25, 53, 80, 123, 443, 445, 3306, 5432, 8080)


@dataclass
class SynthSpec:
    n_hosts: int = 50
    n_flows: int = 20_000
    anomaly_ratio: float = 0.05
    kinds: tuple[str, ...] = ("feature_outlier", "topology_scan")
    n_features: int = 8
    peers_per_host: int = 3
    n_services: int = 10
    server_fraction: float = 0.3
    attackers_per_kind: int = 2
    min_scan_fan: int = 20
    burst_length: int = 50
    seed: int = 0

    def __post_init__(self):
        self.kinds = tuple(self.kinds)

    def validate(self) -> None:
        if not 0.0 < self.anomaly_ratio < 0.5:
            raise ValueError(f"anomaly_ratio must lie in (0, 0.5), got {self.anomaly_ratio}")
        bad = [k for k in self.kinds if k not in KINDS]
        if bad or not self.kinds:
            raise ValueError(f"unknown or missing anomaly kinds {bad}; choose from {KINDS}")
        if not 3 <= self.n_features <= len(_FEATURES):
            raise ValueError(f"n_features must lie in [3, {len(_FEATURES)}]")
        n_benign_hosts = self.n_hosts - self.n_attackers
        if not 0.0 < self.server_fraction < 1.0:
            raise ValueError("server_fraction must lie in (0, 1)")
        n_servers = self.n_servers
        if n_servers < self.peers_per_host or n_servers >= n_benign_hosts:
            raise ValueError("too few benign hosts for the requested servers and peers_per_host")
        if "topology_scan" in self.kinds and n_benign_hosts < self.min_scan_fan:
            raise ValueError(
                f"topology_scan needs at least {self.min_scan_fan} benign hosts to fan out to, "
                f"only {n_benign_hosts} available")
        if self.n_flows < 1:
            raise ValueError("n_flows must be positive")

    @property
    def n_servers(self) -> int:
        return max(1, int(round(self.server_fraction * (self.n_hosts - self.n_attackers))))

    @property
    def n_attackers(self) -> int:
        dedicated = [k for k in self.kinds if k in ("feature_outlier", "topology_scan")]
        return self.attackers_per_kind * len(dedicated)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kinds"] = list(self.kinds)
        return d


@dataclass
class _Profile:
    mix_w: float
    mu: np.ndarray = field(repr=False)      # (2, n_continuous)
    sigma: float = 0.25
    port: int = 80
    proto: int = 6
    flags: int = 27
    ttl: int = 64


def _kind_counts(n_attack: int, kinds) -> dict[str, int]:
    base, rest = divmod(n_attack, len(kinds))
    return {k: base + (1 if i < rest else 0) for i, k in enumerate(kinds)}


def generate(spec: SynthSpec) -> FlowTable:
    """Draw a labelled flow table; identical specs give identical tables."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    names = list(_FEATURES[:spec.n_features])
    cont = [n for n in _FEATURES if n in _CONTINUOUS]

    octets = rng.permutation(np.arange(2, 2 + spec.n_hosts * 3))[:spec.n_hosts]
    hosts = np.array([f"192.168.{o // 250}.{o % 250 + 1}" for o in octets], dtype=object)
    n_benign_hosts = spec.n_hosts - spec.n_attackers
    benign_hosts = np.arange(n_benign_hosts)
    attacker_pool = list(range(n_benign_hosts, spec.n_hosts))

    services = []
    for _ in range(spec.n_services):
        port = int(rng.choice(_PORTS))
        services.append({
            "mu": rng.uniform(3.0, 9.0, size=len(cont)),
            "port": port, "proto": 17 if port in (53, 123) else 6,
            "flags": int(rng.choice([2, 18, 24, 27, 31])), "ttl": int(rng.choice([32, 64, 128])),
        })

    # the first n_servers benign hosts each offer one service; the rest are clients
    servers = benign_hosts[:spec.n_servers]
    role = rng.integers(spec.n_services, size=len(servers))
    pairs, profiles = [], []
    for u in benign_hosts[spec.n_servers:]:
        for v in rng.choice(servers, size=spec.peers_per_host, replace=False):
            svc = services[role[v]]
            base = svc["mu"] + rng.normal(0.0, 0.3, size=len(cont))
            mu = np.stack([base, base + rng.normal(0.0, 0.6, size=len(cont))])
            profiles.append(_Profile(float(rng.uniform(0.6, 0.9)), mu, 0.25, svc["port"],
                                     svc["proto"], svc["flags"], svc["ttl"]))
            pairs.append((int(u), int(v)))
    pair_w = rng.lognormal(0.0, 0.5, size=len(pairs))
    pair_w /= pair_w.sum()

    def sample(pidx: np.ndarray) -> np.ndarray:
        out = np.zeros((len(pidx), len(_FEATURES)))
        comp = rng.random(len(pidx))
        for j, p in enumerate(pidx):
            prof = profiles[p]
            mu = prof.mu[0] if comp[j] < prof.mix_w else prof.mu[1]
            logv = rng.normal(mu, prof.sigma)
            row = dict(zip(cont, np.round(np.exp(logv))))
            row.update(L4_DST_PORT=prof.port, PROTOCOL=prof.proto, TCP_FLAGS=prof.flags,
                       MIN_TTL=prof.ttl, MAX_TTL=prof.ttl)
            out[j] = [row[n] for n in _FEATURES]
        return out

    n_attack = int(round(spec.anomaly_ratio * spec.n_flows))
    n_benign = spec.n_flows - n_attack
    counts = _kind_counts(n_attack, spec.kinds)

    b_pairs = rng.choice(len(pairs), size=n_benign, p=pair_w)
    src = [np.array([pairs[p][0] for p in b_pairs], dtype=np.int64)]
    dst = [np.array([pairs[p][1] for p in b_pairs], dtype=np.int64)]
    feats = [sample(b_pairs)]
    types = [np.full(n_benign, "", dtype=object)]

    for kind in spec.kinds:
        n = counts[kind]
        if n == 0:
            continue
        if kind in ("feature_outlier", "topology_scan"):
            attackers = [attacker_pool.pop(0) for _ in range(spec.attackers_per_kind)]
            s = np.array([attackers[i % len(attackers)] for i in range(n)], dtype=np.int64)
            # cycle through shuffled victims so each attacker reaches as many hosts as possible
            d = np.concatenate([rng.permutation(benign_hosts)
                                for _ in range(n // n_benign_hosts + 1)])[:n]
            f = sample(rng.choice(len(pairs), size=n, p=pair_w))
            if kind == "feature_outlier":
                for j in range(n):
                    cols = rng.choice(len(_VOLUME), size=rng.integers(1, len(_VOLUME) + 1),
                                      replace=False)
                    for c in cols:
                        f[j, _FEATURES.index(_VOLUME[c])] *= np.exp(rng.uniform(2.5, 4.0))
        else:  # burst
            s_list, d_list, f_list = [], [], []
            left = n
            while left > 0:
                p = int(rng.choice(len(pairs), p=pair_w))
                k = min(spec.burst_length, left)
                row = sample(np.array([p]))[0]
                row[_FEATURES.index("FLOW_DURATION_MILLISECONDS")] = 0.0
                s_list += [pairs[p][0]] * k
                d_list += [pairs[p][1]] * k
                f_list.append(np.repeat(row[None, :], k, axis=0))
                left -= k
            s, d, f = np.array(s_list), np.array(d_list), np.concatenate(f_list)
        src.append(s)
        dst.append(d)
        feats.append(f)
        types.append(np.full(n, kind, dtype=object))

    src_a = np.concatenate(src)
    dst_a = np.concatenate(dst)
    feat_a = np.concatenate(feats)[:, :spec.n_features]
    type_a = np.concatenate(types)
    order = rng.permutation(len(src_a))
    return FlowTable(hosts[src_a[order]], hosts[dst_a[order]], feat_a[order],
                     (type_a[order] != "").astype(np.int8), type_a[order], names)


def write_csv(spec: SynthSpec, path) -> FlowTable:
    table = generate(spec)
    table.to_csv(path)
    return table
