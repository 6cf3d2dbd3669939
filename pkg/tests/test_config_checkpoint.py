import struct

import numpy as np
import pytest

from conftest import TINY
from sclrobust.checkpoint import CheckpointError, decode, encode, load_checkpoint, save_checkpoint
from sclrobust.config import BlobsData, ConfigError, load_datasets, parse_config, parse_dict
from sclrobust.io import read_csv, summary_block, sweep_csv
from sclrobust.model import ModelConfig, init_model
from sclrobust.training import Mode

MINIMAL = {"mode": "baseline", "dataset": {"kind": "blobs"}}


def test_defaults():
    cfg = parse_dict(MINIMAL)
    assert cfg.mode is Mode.BASELINE
    assert cfg.dataset == BlobsData()
    assert cfg.model == ModelConfig()
    assert (cfg.loss.tau, cfg.loss.m_p, cfg.loss.m_n, cfg.loss.alpha, cfg.loss.beta) == (0.07, 0.5, 0.1, 0.5, 0.5)
    assert cfg.optimizer.lr == 0.001
    assert cfg.attack.epsilons == (0.01, 0.02, 0.03)
    assert (cfg.train.epochs, cfg.train.batch_size) == (10, 128)


def test_model_shape_follows_dataset():
    cfg = parse_dict({"mode": "baseline", "dataset": {"kind": "blobs", "num_classes": 5, "image_size": 12},
                      "model": {"channel_widths": [4, 8]}})
    assert (cfg.model.num_classes, cfg.model.input_size, cfg.model.feature_dim) == (5, 12, 8)
    assert cfg.model.projection_hidden == 8


@pytest.mark.parametrize("raw,path", [
    ({**MINIMAL, "loss": {"tau": 0}}, "loss.tau"),
    ({**MINIMAL, "loss": {"tau": "x"}}, "loss.tau"),
    ({**MINIMAL, "loss": {"m_p": 0.05}}, "loss.m_p"),
    ({**MINIMAL, "train": {"batch_size": 1}}, "train.batch_size"),
    ({**MINIMAL, "train": {"epochs": True}}, "train.epochs"),
    ({**MINIMAL, "loss": {"gamma": 1.0}}, "loss.gamma"),
    ({**MINIMAL, "extra": 1}, "extra"),
    ({"dataset": {"kind": "blobs"}}, "mode"),
    ({**MINIMAL, "mode": "pgd"}, "mode"),
    ({"mode": "baseline", "dataset": {"kind": "imagenet"}}, "dataset.kind"),
    ({"mode": "baseline", "dataset": {"kind": "cifar100"}}, "dataset.path"),
    ({**MINIMAL, "model": {"num_classes": 7}}, "model.num_classes"),
    ({**MINIMAL, "model": {"feature_dim": 3}}, "model.feature_dim"),
    ({**MINIMAL, "attack": {"epsilons": [0.02, 0.01]}}, "attack.epsilons"),
    ({**MINIMAL, "optimizer": {"beta2": 1.0}}, "optimizer.beta2"),
])
def test_errors_name_the_field(raw, path):
    with pytest.raises(ConfigError) as info:
        parse_dict(raw)
    assert info.value.path == path
    assert str(info.value).startswith(path)


def test_invalid_json():
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config("{")


def test_config_round_trips_through_json():
    cfg = parse_dict({"mode": "refined_margin", "augment": True, "dataset": {"kind": "blobs", "seed": 3},
                      "loss": {"alpha": 0.2, "beta": 0.8}, "train": {"max_steps": 7}})
    assert parse_config(cfg.to_json()) == cfg


def test_blob_datasets_from_config():
    cfg = parse_dict({"mode": "baseline", "dataset": {"kind": "blobs", "per_class": 4, "test_per_class": 2}})
    train, test = load_datasets(cfg)
    assert (len(train), len(test)) == (12, 6)


# --- checkpoint ---------------------------------------------------------------

def test_checkpoint_round_trip_at_f32(tmp_path):
    params = init_model(TINY, 0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path, TINY)
    for name in params.names():
        np.testing.assert_array_equal(loaded[name].data, params[name].data.astype(np.float32).astype(np.float64))
        assert loaded[name].requires_grad
    assert encode(loaded) == path.read_bytes()


def test_checkpoint_header_layout():
    params = init_model(TINY, 0)
    buf = encode(params)
    assert buf[:4] == b"SCLR"
    assert struct.unpack("<I", buf[4:8])[0] == 1
    assert buf[8:40] == TINY.digest()
    assert struct.unpack("<I", buf[40:44])[0] == len(params.names())
    (name_len,) = struct.unpack("<H", buf[44:46])
    assert buf[46:46 + name_len].decode() == params.names()[0]


def test_bad_magic():
    buf = b"XXXX" + encode(init_model(TINY, 0))[4:]
    with pytest.raises(CheckpointError, match="magic"):
        decode(buf, TINY)


def test_bad_version():
    buf = bytearray(encode(init_model(TINY, 0)))
    buf[4:8] = struct.pack("<I", 9)
    with pytest.raises(CheckpointError, match="version 9"):
        decode(bytes(buf), TINY)


def test_truncation_names_the_tensor():
    params = init_model(TINY, 0)
    buf = encode(params)
    last = params.names()[-1]
    with pytest.raises(CheckpointError, match=f"truncated.*{last}"):
        decode(buf[:-3], TINY)


def test_trailing_bytes_rejected():
    with pytest.raises(CheckpointError, match="trailing"):
        decode(encode(init_model(TINY, 0)) + b"\0", TINY)


def test_config_digest_mismatch():
    other = ModelConfig(**{**TINY.to_dict(), "channel_widths": (4, 6, 6), "num_classes": 4})
    with pytest.raises(CheckpointError, match="digest"):
        decode(encode(init_model(TINY, 0)), other)


# --- report files -------------------------------------------------------------

def test_sweep_csv_and_summary(tmp_path):
    text = sweep_csv([(0.0, 1.0), (0.01, 0.5)])
    assert text == "epsilon,accuracy\n0.0,1.0\n0.01,0.5\n"
    path = tmp_path / "s.csv"
    path.write_text(text)
    assert read_csv(path) == (["epsilon", "accuracy"], [["0.0", "1.0"], ["0.01", "0.5"]])
    assert summary_block({"gap": 0.25}) == "gap=0.25\n"
