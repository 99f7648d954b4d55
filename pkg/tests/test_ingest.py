import logging

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphids.ingest import (SCHEMAS, TIMESTAMP_COLS, V2_FEATURES, FeatureScaler, FlowTable,
                             SchemaError, SplitManifest, build_split, fit_scaler, parse_csv,
                             prepare_split, stratified_split, transform)


def write_schema_csv(path, schema, n=6, seed=0, blank=None):
    rng = np.random.default_rng(seed)
    cols = list(SCHEMAS[schema])
    df = pd.DataFrame(rng.integers(0, 100, size=(n, len(cols))).astype(str), columns=cols)
    df.insert(0, "IPV4_SRC_ADDR", [f"10.0.0.{i % 3}" for i in range(n)])
    df.insert(1, "IPV4_DST_ADDR", [f"10.0.1.{i % 2}" for i in range(n)])
    df["Label"] = ["1" if i == n - 1 else "0" for i in range(n)]
    df["Attack"] = ["DoS" if i == n - 1 else "Benign" for i in range(n)]
    if blank:
        df.loc[0, blank] = ""
    df.to_csv(path, index=False)
    return df


def toy_table(n_benign, attacks, n_features=3, seed=0):
    rng = np.random.default_rng(seed)
    types = [""] * n_benign + [t for t, k in attacks.items() for _ in range(k)]
    n = len(types)
    return FlowTable(np.array([f"h{i % 7}" for i in range(n)], dtype=object),
                     np.array([f"h{(i * 3 + 1) % 7}" for i in range(n)], dtype=object),
                     rng.random((n, n_features)), np.array([t != "" for t in types]),
                     np.array(types, dtype=object), [f"f{j}" for j in range(n_features)])


def test_v2_feature_dimension(tmp_path):
    # 43 NetFlow columns in total; the two addresses are identifiers, not features
    assert len(V2_FEATURES) + 2 == 43
    write_schema_csv(tmp_path / "a.csv", "v2")
    t = parse_csv(tmp_path / "a.csv", "v2")
    assert t.n_features == len(V2_FEATURES) and len(t) == 6


def test_v3_timestamps_dropped_by_default(tmp_path):
    write_schema_csv(tmp_path / "a.csv", "v3")
    off = parse_csv(tmp_path / "a.csv", "v3")
    on = parse_csv(tmp_path / "a.csv", "v3", timestamps=True)
    assert on.n_features - off.n_features == 2
    assert not set(TIMESTAMP_COLS) & set(off.feature_names)
    assert set(TIMESTAMP_COLS) <= set(on.feature_names)
    assert on.n_features == len(V2_FEATURES) + 10


def test_empty_cell_becomes_zero(tmp_path, caplog):
    write_schema_csv(tmp_path / "a.csv", "v2", blank="IN_BYTES")
    with caplog.at_level(logging.WARNING):
        t = parse_csv(tmp_path / "a.csv", "v2")
    assert t.features[0, t.feature_names.index("IN_BYTES")] == 0
    assert t.invalid_cells == 1
    assert "1 non-numeric" in caplog.text


def test_missing_column_named(tmp_path):
    df = write_schema_csv(tmp_path / "a.csv", "v2")
    df.drop(columns=["OUT_PKTS"]).to_csv(tmp_path / "b.csv", index=False)
    with pytest.raises(SchemaError, match="OUT_PKTS"):
        parse_csv(tmp_path / "b.csv", "v2")


def test_v2_timestamps_warns(tmp_path, caplog):
    write_schema_csv(tmp_path / "a.csv", "v2")
    with caplog.at_level(logging.WARNING):
        parse_csv(tmp_path / "a.csv", "v2", timestamps=True)
    assert "no timestamp" in caplog.text


def test_labels_and_types(tmp_path):
    write_schema_csv(tmp_path / "a.csv", "v2")
    t = parse_csv(tmp_path / "a.csv", "v2")
    assert t.labels.tolist() == [0] * 5 + [1]
    assert t.attack_types.tolist() == [""] * 5 + ["DoS"]
    for rec in t:
        assert (rec.label == 0) == (rec.attack_type == "")


def test_split_counts_example():
    m = stratified_split(toy_table(950, {"scan": 50}), seed=3)
    t = toy_table(950, {"scan": 50})
    assert len(m.train) == 760 and len(m.discarded) == 40
    assert len(m.val) == len(m.test) == 100
    assert int(t.labels[m.val].sum()) == 5 and int(t.labels[m.test].sum()) == 5


def test_all_benign_split():
    m = stratified_split(toy_table(1000, {}), seed=0)
    assert (len(m.train), len(m.val), len(m.test)) == (800, 100, 100)


def test_split_deterministic_and_empty():
    t = toy_table(300, {"a": 20, "b": 7})
    a, b = stratified_split(t, seed=9), stratified_split(t, seed=9)
    assert a.to_dict() == b.to_dict()
    with pytest.raises(ValueError):
        stratified_split(t.subset([]), seed=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.dictionaries(st.sampled_from(["a", "b", "c"]), st.integers(1, 60)),
       st.integers(0, 1000))
def test_split_partition_properties(n_benign, attacks, seed):
    t = toy_table(n_benign, attacks)
    m = stratified_split(t, seed=seed)
    everything = np.concatenate([m.train, m.val, m.test, m.discarded])
    assert sorted(everything.tolist()) == list(range(len(t)))
    assert not np.any(t.labels[m.train])
    for name, k in attacks.items():
        for part, r in ((m.val, 0.1), (m.test, 0.1)):
            got = int(np.sum(t.attack_types[part] == name))
            assert abs(got - k * r) <= 1


def test_manifest_round_trip(tmp_path):
    m = stratified_split(toy_table(50, {"a": 5}), seed=1)
    m.save(tmp_path / "m.json")
    assert SplitManifest.load(tmp_path / "m.json").to_dict() == m.to_dict()


def test_scaler_examples():
    s = fit_scaler(np.array([[2.0, 5.0], [6.0, 5.0], [10.0, 5.0]]))
    assert s.min_.tolist() == [2, 5] and s.max_.tolist() == [10, 5]
    assert s.degenerate.tolist() == [False, True]
    out = s.transform(np.array([[6.0, 123.0], [90.0, -4.0]]))
    assert out[0].tolist() == [0.5, 0.0]
    assert out[1, 0] == 10.0 and out[1, 1] == 0.0
    with pytest.raises(ValueError):
        fit_scaler(np.empty((0, 2)))
    with pytest.raises(ValueError):
        s.transform(np.ones((1, 3)))


def test_scaler_refuses_attacks():
    with pytest.raises(ValueError):
        fit_scaler(toy_table(5, {"a": 1}))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), min_size=1, max_size=30),
       st.lists(st.floats(-1e8, 1e8), min_size=3, max_size=3))
def test_scaler_properties(rows, probe):
    X = np.array(rows)
    s = fit_scaler(X)
    Z = s.transform(X)
    assert np.all(Z[:, ~s.degenerate] >= 0) and np.all(Z[:, ~s.degenerate] <= 1 + 1e-12)
    P = s.transform(np.array([probe, np.array(probe) + 1.0]))
    assert np.all(P >= -10) and np.all(P <= 10)
    assert np.all(P[1] >= P[0])


def test_scaler_json_round_trip(tmp_path):
    s = fit_scaler(np.array([[1.0, 2.0], [3.0, 2.0]]))
    s.save(tmp_path / "s.json")
    s2 = FeatureScaler.load(tmp_path / "s.json")
    assert np.array_equal(s2.min_, s.min_) and np.array_equal(s2.max_, s.max_)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["10.0.0.1", "10.0.0.2", "fe80::1"]),
                          st.sampled_from(["10.0.0.3", "10.0.0.4"]),
                          st.floats(-1e12, 1e12, allow_subnormal=False),
                          st.floats(0, 1e6), st.sampled_from(["", "DoS", "Scan x"])),
                min_size=1, max_size=12))
def test_csv_round_trip(tmp_path_factory, rows):
    t = FlowTable(np.array([r[0] for r in rows], dtype=object),
                  np.array([r[1] for r in rows], dtype=object),
                  np.array([[r[2], r[3]] for r in rows]),
                  np.array([r[4] != "" for r in rows]),
                  np.array([r[4] for r in rows], dtype=object), ["IN_BYTES", "OUT_BYTES"])
    path = tmp_path_factory.mktemp("rt") / "t.csv"
    t.to_csv(path)
    back = parse_csv(path, "v2", strict=False)
    assert back.feature_names == t.feature_names
    assert np.array_equal(back.features, t.features)
    assert back.src.tolist() == t.src.tolist() and back.dst.tolist() == t.dst.tolist()
    assert back.labels.tolist() == t.labels.tolist()
    assert back.attack_types.tolist() == t.attack_types.tolist()


def test_build_split_scales_with_train_only():
    t = toy_table(200, {"a": 20})
    split = prepare_split(t, seed=0)
    assert split.train.features.min() >= 0 and split.train.features.max() <= 1
    again = build_split(t, split.manifest)
    assert np.array_equal(again.test.features, split.test.features)
    assert np.array_equal(transform(split.scaler, t.subset(split.manifest.test)),
                          split.test.features)
