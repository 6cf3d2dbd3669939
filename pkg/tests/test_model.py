import math

import numpy as np
import pytest

from conftest import TINY
from oracles import numeric_grad, rel_error, sample_coords
from sclrobust import tensor as T
from sclrobust.losses import cross_entropy
from sclrobust.model import ModelConfig, forward, init_model, parameter_shapes, two_stream_forward


def test_default_layout():
    shapes = parameter_shapes(ModelConfig())
    assert shapes["stage0.conv1.weight"] == (16, 3, 3, 3)
    assert shapes["stage1.shortcut.weight"] == (32, 16, 1, 1)
    # equal widths but stride 2: still a 1x1 projection on the skip path
    assert shapes["stage2.shortcut.weight"] == (32, 32, 1, 1)
    assert shapes["classifier.weight"] == (32, 3)
    assert shapes["projection.fc2.weight"] == (32, 64)


def test_no_shortcut_without_residual(rng):
    cfg = ModelConfig(use_residual=False)
    assert not any("shortcut" in n for n in parameter_shapes(cfg))
    out = forward(init_model(cfg, 0), rng.normal(size=(2, 3, 8, 8)))
    assert out.logits.shape == (2, 3)


def test_feature_dim_must_match_last_width():
    with pytest.raises(ValueError, match="feature_dim"):
        ModelConfig(feature_dim=16)


def test_init_is_seeded():
    a, b, c = init_model(TINY, 7), init_model(TINY, 7), init_model(TINY, 8)
    for name in a.names():
        assert np.array_equal(a[name].data, b[name].data)
    assert not np.array_equal(a["classifier.weight"].data, c["classifier.weight"].data)


def test_init_bounds_and_zero_biases():
    params = init_model(ModelConfig(), 0)
    for name in params.names():
        data = params[name].data
        if name.endswith(".bias"):
            assert not data.any()
        else:
            fan_in = int(np.prod(data.shape[1:])) if data.ndim == 4 else data.shape[0]
            assert np.abs(data).max() <= math.sqrt(1.0 / fan_in)


def test_output_shapes_and_unit_embeddings(rng):
    out = forward(init_model(ModelConfig(), 0), rng.normal(size=(5, 3, 8, 8)))
    assert out.features.shape == (5, 32)
    assert out.logits.shape == (5, 3)
    assert out.embedding.shape == (5, 64)
    np.testing.assert_allclose(np.linalg.norm(out.embedding.data, axis=1), 1.0, atol=1e-12)


def test_rejects_wrong_input_shape():
    with pytest.raises(T.ShapeError, match=r"\(B, 3, 8, 8\)"):
        forward(init_model(ModelConfig(), 0), np.zeros((2, 3, 9, 9)))


def test_rows_are_independent(rng):
    params = init_model(TINY, 0)
    x = rng.normal(size=(4, 3, 8, 8))
    x[2] = x[0]
    out = forward(params, x).logits.data
    np.testing.assert_array_equal(out[0], out[2])
    perm = np.array([3, 1, 0, 2])
    np.testing.assert_allclose(forward(params, x[perm]).logits.data, out[perm], atol=1e-12)


def test_two_streams_share_weights(rng):
    params = init_model(TINY, 0)
    x = rng.normal(size=(3, 3, 8, 8))
    out = two_stream_forward(params, x, x)
    np.testing.assert_array_equal(out.logits_a.data, out.logits_b.data)
    np.testing.assert_array_equal(out.z_a.data, out.z_b.data)
    # A gradient through both streams lands on the single shared parameter set.
    loss = T.add(T.sum(out.logits_a), T.sum(out.logits_b))
    g_both = T.backward(loss)[params["classifier.weight"]]
    g_one = T.backward(T.sum(forward(params, x).logits))[params["classifier.weight"]]
    np.testing.assert_allclose(g_both, 2 * g_one, atol=1e-12)


def test_two_stream_shape_mismatch(rng):
    with pytest.raises(T.ShapeError):
        two_stream_forward(init_model(TINY, 0), np.zeros((2, 3, 8, 8)), np.zeros((3, 3, 8, 8)))


def test_full_network_gradient(rng):
    params = init_model(TINY, 3)
    x = rng.normal(size=(2, 3, 8, 8))
    labels = [0, 2]
    loss = cross_entropy(forward(params, x).logits, labels)
    grads = T.backward(loss)
    for name in ("stage0.conv1.weight", "stage1.shortcut.weight", "stage2.conv2.weight", "classifier.weight"):
        base = params[name].data

        def f(v, name=name):
            swapped = params.replace({k: (v if k == name else t.data) for k, t in params.tensors.items()})
            return cross_entropy(forward(swapped, x).logits, labels).item()

        coords = sample_coords(base.shape, 12, rng)
        fd = numeric_grad(f, base, coords=coords)
        tape = np.zeros_like(base)
        for c in coords:
            tape[c] = grads[params[name]][c]
        assert rel_error(tape, fd) < 1e-4, name


def test_untrained_k100_cross_entropy_near_log_k(rng):
    cfg = ModelConfig(num_classes=100)
    logits = forward(init_model(cfg, 0), rng.normal(size=(16, 3, 8, 8))).logits
    ce = cross_entropy(logits, rng.integers(0, 100, size=16)).item()
    assert abs(ce - math.log(100)) < 0.3


def test_digest_tracks_config():
    assert ModelConfig().digest() == ModelConfig().digest()
    assert ModelConfig().digest() != ModelConfig(num_classes=4).digest()
    assert len(ModelConfig().digest()) == 32
