import pytest
import yaml

from graphids.config import TrainConfig, load_config, presets


def test_defaults_are_valid():
    c = TrainConfig()
    assert c.mask_ratio == 0.15 and c.nhops == 1 and c.agg_type == "mean"
    assert c.ae_sequence == c.window_size * c.ae_batch_size


@pytest.mark.parametrize("bad", [
    dict(agg_type="max"), dict(variant="rnn"), dict(mask_ratio=1.0), dict(mask_ratio=-0.1),
    dict(gnn_dropout=1.0), dict(nhops=0), dict(window_size=0), dict(patience=200),
    dict(learning_rate=0.0), dict(gnn_weight_decay=-1.0), dict(embed_dim=8, num_heads=3),
])
def test_rejects_invalid(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)


def test_fingerprint_tracks_every_field():
    base = TrainConfig()
    assert base.fingerprint() == TrainConfig().fingerprint()
    assert base.override(seed=1).fingerprint() != base.fingerprint()
    assert base.override(mask_ratio=0.3).fingerprint() != base.fingerprint()


def test_yaml_round_trip(tmp_path):
    c = TrainConfig(edim_out=16, embed_dim=8, seed=3)
    c.save(tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == c


def test_unknown_keys_named(tmp_path):
    (tmp_path / "c.yaml").write_text(yaml.safe_dump({"edim_out": 8, "lerning_rate": 1.0}))
    with pytest.raises(ValueError, match="lerning_rate"):
        load_config(tmp_path / "c.yaml")


def test_non_mapping_rejected(tmp_path):
    (tmp_path / "c.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ValueError):
        load_config(tmp_path / "c.yaml")


def test_missing_config():
    with pytest.raises(FileNotFoundError):
        load_config("no-such-preset")


def test_presets_load():
    names = presets()
    assert {"nf-unsw-nb15-v2", "nf-unsw-nb15-v3", "nf-cse-cic-ids2018-v2",
            "nf-cse-cic-ids2018-v3", "desk"} <= set(names)
    for n in names:
        load_config(n)
