"""NetFlow CSV ingestion: parsing, stratified splitting and min-max scaling.

Flows are held column-wise in a :class:`FlowTable`; a :class:`FlowRecord` is
the row view. Split manifests and scaler parameters serialise to JSON so a
run can be reproduced from disk.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

SRC_COL = "IPV4_SRC_ADDR"
DST_COL = "IPV4_DST_ADDR"
LABEL_COL = "Label"
ATTACK_COL = "Attack"
TIMESTAMP_COLS = ("FLOW_START_MILLISECONDS", "FLOW_END_MILLISECONDS")

# NetFlow v2 feature set minus the two address columns (which become nodes).
V2_FEATURES = (
    "L4_SRC_PORT", "L4_DST_PORT", "PROTOCOL", "L7_PROTO", "IN_BYTES", "IN_PKTS",
    "OUT_BYTES", "OUT_PKTS", "TCP_FLAGS", "CLIENT_TCP_FLAGS", "SERVER_TCP_FLAGS",
    "FLOW_DURATION_MILLISECONDS", "DURATION_IN", "DURATION_OUT", "MIN_TTL",
    "MAX_TTL", "LONGEST_FLOW_PKT", "SHORTEST_FLOW_PKT", "MIN_IP_PKT_LEN",
    "MAX_IP_PKT_LEN", "SRC_TO_DST_SECOND_BYTES", "DST_TO_SRC_SECOND_BYTES",
    "RETRANSMITTED_IN_BYTES", "RETRANSMITTED_IN_PKTS", "RETRANSMITTED_OUT_BYTES",
    "RETRANSMITTED_OUT_PKTS", "SRC_TO_DST_AVG_THROUGHPUT",
    "DST_TO_SRC_AVG_THROUGHPUT", "NUM_PKTS_UP_TO_128_BYTES",
    "NUM_PKTS_128_TO_256_BYTES", "NUM_PKTS_256_TO_512_BYTES",
    "NUM_PKTS_512_TO_1024_BYTES", "NUM_PKTS_1024_TO_1514_BYTES",
    "TCP_WIN_MAX_IN", "TCP_WIN_MAX_OUT", "ICMP_TYPE", "ICMP_IPV4_TYPE",
    "DNS_QUERY_ID", "DNS_QUERY_TYPE", "DNS_TTL_ANSWER", "FTP_COMMAND_RET_CODE",
)
V3_EXTRA = TIMESTAMP_COLS + (
    "SRC_TO_DST_IAT_MIN", "SRC_TO_DST_IAT_MAX", "SRC_TO_DST_IAT_AVG",
    "SRC_TO_DST_IAT_STDDEV", "DST_TO_SRC_IAT_MIN", "DST_TO_SRC_IAT_MAX",
    "DST_TO_SRC_IAT_AVG", "DST_TO_SRC_IAT_STDDEV",
)
SCHEMAS = {"v2": V2_FEATURES, "v3": V2_FEATURES + V3_EXTRA}

_BENIGN_TOKENS = {"", "0", "0.0", "benign", "normal", "false"}


class SchemaError(ValueError):
    """A CSV header is missing a column the schema requires."""


@dataclass(frozen=True)
class FlowRecord:
    src_ip: str
    dst_ip: str
    features: np.ndarray
    label: int
    attack_type: str


@dataclass
class FlowTable:
    """Column-oriented flow records."""

    src: np.ndarray
    dst: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    attack_types: np.ndarray
    feature_names: list[str]
    invalid_cells: int = 0

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=object)
        self.dst = np.asarray(self.dst, dtype=object)
        self.features = np.asarray(self.features, dtype=np.float64).reshape(len(self.src), -1)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        self.attack_types = np.asarray(self.attack_types, dtype=object)
        if not (len(self.src) == len(self.dst) == len(self.labels) == len(self.attack_types)):
            raise ValueError("FlowTable columns have different lengths")
        if self.features.shape[1] != len(self.feature_names):
            raise ValueError(
                f"{self.features.shape[1]} feature columns but {len(self.feature_names)} names"
            )

    def __len__(self) -> int:
        return len(self.src)

    def __getitem__(self, i: int) -> FlowRecord:
        return FlowRecord(str(self.src[i]), str(self.dst[i]), self.features[i].copy(),
                          int(self.labels[i]), str(self.attack_types[i]))

    def __iter__(self) -> Iterator[FlowRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "FlowTable":
        idx = np.asarray(idx, dtype=np.int64)
        return FlowTable(self.src[idx], self.dst[idx], self.features[idx], self.labels[idx],
                         self.attack_types[idx], list(self.feature_names))

    def with_features(self, features: np.ndarray) -> "FlowTable":
        return FlowTable(self.src, self.dst, features, self.labels, self.attack_types,
                         list(self.feature_names))

    @classmethod
    def from_records(cls, records: Sequence[FlowRecord], feature_names: Sequence[str]) -> "FlowTable":
        feats = np.array([r.features for r in records], dtype=np.float64).reshape(
            len(records), len(feature_names))
        return cls(np.array([r.src_ip for r in records], dtype=object),
                   np.array([r.dst_ip for r in records], dtype=object), feats,
                   np.array([r.label for r in records], dtype=np.int8),
                   np.array([r.attack_type for r in records], dtype=object),
                   list(feature_names))

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.features, columns=self.feature_names)
        df.insert(0, SRC_COL, self.src)
        df.insert(1, DST_COL, self.dst)
        df[LABEL_COL] = self.labels.astype(int)
        df[ATTACK_COL] = np.where(self.labels == 0, "Benign", self.attack_types)
        return df

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

    def stats(self) -> dict:
        hosts = set(self.src.tolist()) | set(self.dst.tolist())
        ratio = float(self.labels.mean()) if len(self) else 0.0
        return {"flows": len(self), "hosts": len(hosts), "anomaly_ratio": ratio}


def _is_attack_token(value) -> bool:
    if isinstance(value, float) and np.isnan(value):
        return False
    return str(value).strip().lower() not in _BENIGN_TOKENS


def _to_float(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return np.nan


def _numeric(col: pd.Series) -> np.ndarray:
    # astype(float) rounds correctly; pd.to_numeric's fast parser can be off by an ulp
    try:
        return col.astype(np.float64).to_numpy()
    except ValueError:
        return col.map(_to_float).to_numpy(dtype=np.float64)


def parse_csv(path, schema: str = "v2", timestamps: bool = False,
              strict: bool = True) -> FlowTable:
    """Read a NetFlow CSV into a :class:`FlowTable`.

    With ``strict`` every feature column of the schema must be present and is
    used in schema order. Without it (reduced feature sets, e.g. synthetic
    data) every column that is not an address or label column is a feature,
    in file order. Timestamp columns are dropped unless ``timestamps`` is set.
    Non-numeric, empty and infinite cells become 0.
    """
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}; expected one of {sorted(SCHEMAS)}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    required = [SRC_COL, DST_COL, LABEL_COL, ATTACK_COL]
    if strict:
        required += list(SCHEMAS[schema])
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise SchemaError(f"missing required column(s) for schema {schema}: {', '.join(missing)}")

    skip = {SRC_COL, DST_COL, LABEL_COL, ATTACK_COL}
    if strict:
        feature_cols = list(SCHEMAS[schema])
    else:
        feature_cols = [c for c in df.columns if c not in skip]
    if timestamps and schema == "v2":
        log.warning("timestamps requested but schema v2 carries no timestamp columns")
    if not timestamps:
        feature_cols = [c for c in feature_cols if c not in TIMESTAMP_COLS]

    raw = np.column_stack([_numeric(df[c]) for c in feature_cols]) if feature_cols \
        else np.zeros((len(df), 0))
    bad = ~np.isfinite(raw)
    n_bad = int(bad.sum())
    if n_bad:
        log.warning("%s: %d non-numeric or non-finite cells replaced with 0", path, n_bad)
    raw[bad] = 0.0

    label_flag = df[LABEL_COL].map(_is_attack_token).to_numpy(dtype=bool)
    attack_flag = df[ATTACK_COL].map(_is_attack_token).to_numpy(dtype=bool)
    labels = (label_flag | attack_flag).astype(np.int8)
    attack_types = np.where(attack_flag, df[ATTACK_COL].str.strip().to_numpy(dtype=object),
                            np.where(labels == 1, "unknown", ""))
    src = df[SRC_COL].str.strip().to_numpy(dtype=object)
    dst = df[DST_COL].str.strip().to_numpy(dtype=object)
    if np.any(src == "") or np.any(dst == ""):
        raise SchemaError("empty host identifier in address column")
    return FlowTable(src, dst, raw, labels, attack_types.astype(object), feature_cols,
                     invalid_cells=n_bad)


# --- splitting ---------------------------------------------------------------

@dataclass
class SplitManifest:
    """Row indices of each partition; train attack rows end up in ``discarded``."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    discarded: np.ndarray
    seed: int
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "ratios": list(self.ratios),
                "train": self.train.tolist(), "val": self.val.tolist(),
                "test": self.test.tolist(), "discarded": self.discarded.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        arr = lambda k: np.asarray(d[k], dtype=np.int64)  # noqa: E731
        return cls(arr("train"), arr("val"), arr("test"), arr("discarded"), int(d["seed"]),
                   tuple(d.get("ratios", (0.8, 0.1, 0.1))))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "SplitManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _apportion(n: int, ratios: Sequence[float]) -> list[int]:
    exact = [n * r for r in ratios]
    counts = [int(np.floor(e)) for e in exact]
    rest = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


def stratified_split(table: FlowTable, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitManifest:
    """Stratified train/val/test partition by attack type.

    Each stratum (benign counts as one) is shuffled and cut with largest-
    remainder rounding, so every partition is within one row of its exact
    share. Attack rows that fall into train are moved to ``discarded``.
    """
    if len(table) == 0:
        raise ValueError("cannot split an empty flow table")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    strata = np.where(table.labels == 0, "", table.attack_types).astype(str)
    parts: list[list[np.ndarray]] = [[], [], []]
    for name in sorted(set(strata.tolist())):
        idx = rng.permutation(np.flatnonzero(strata == name))
        n_tr, n_va, _ = _apportion(len(idx), ratios)
        parts[0].append(idx[:n_tr])
        parts[1].append(idx[n_tr:n_tr + n_va])
        parts[2].append(idx[n_tr + n_va:])
    train, val, test = (np.sort(np.concatenate(p)).astype(np.int64) for p in parts)
    attack = table.labels[train] != 0
    return SplitManifest(train[~attack], val, test, train[attack], int(seed), tuple(ratios))


# --- scaling -----------------------------------------------------------------

@dataclass
class FeatureScaler:
    """Min-max scaler fitted on benign training rows, clipped to ``[clip_lo, clip_hi]``."""

    min_: np.ndarray
    max_: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    clip_lo: float = -10.0
    clip_hi: float = 10.0

    @property
    def degenerate(self) -> np.ndarray:
        return self.max_ == self.min_

    @property
    def n_features(self) -> int:
        return len(self.min_)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        span = np.where(self.degenerate, 1.0, self.max_ - self.min_)
        out = (X - self.min_) / span
        out[:, self.degenerate] = 0.0
        return np.clip(out, self.clip_lo, self.clip_hi)

    def to_dict(self) -> dict:
        return {"feature_names": list(self.feature_names), "min": self.min_.tolist(),
                "max": self.max_.tolist(), "degenerate": self.degenerate.tolist(),
                "clip": [self.clip_lo, self.clip_hi]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        lo, hi = d.get("clip", (-10.0, 10.0))
        return cls(np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64),
                   list(d.get("feature_names", [])), float(lo), float(hi))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "FeatureScaler":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_scaler(train) -> FeatureScaler:
    """Per-feature min/max over training rows (a FlowTable or a 2-D array)."""
    names = list(train.feature_names) if isinstance(train, FlowTable) else []
    if isinstance(train, FlowTable):
        if np.any(train.labels != 0):
            raise ValueError("scaler must be fitted on benign-only training rows")
        X = train.features
    else:
        X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty training set")
    return FeatureScaler(X.min(axis=0), X.max(axis=0), names)


def transform(scaler: FeatureScaler, data) -> np.ndarray:
    X = data.features if isinstance(data, FlowTable) else data
    return scaler.transform(X)


@dataclass
class DatasetSplit:
    """Scaled train/val/test tables plus the manifest and scaler that produced them."""

    train: FlowTable
    val: FlowTable
    test: FlowTable
    scaler: FeatureScaler
    manifest: SplitManifest

    @property
    def n_features(self) -> int:
        return self.train.n_features


def build_split(table: FlowTable, manifest: SplitManifest) -> DatasetSplit:
    train = table.subset(manifest.train)
    scaler = fit_scaler(train)
    scaled = lambda t: t.with_features(scaler.transform(t.features))  # noqa: E731
    return DatasetSplit(scaled(train), scaled(table.subset(manifest.val)),
                        scaled(table.subset(manifest.test)), scaler, manifest)


def prepare_split(table: FlowTable, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    return build_split(table, stratified_split(table, ratios, seed))
