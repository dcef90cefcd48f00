import dataclasses

import numpy as np
import pytest

from conftest import tiny_model_config
from src.implicit.encoding import EncodingParams
from src.implicit.queries import build_queries
from src.model import network
from src.model.config import ConfigError, ModelConfig
from src.model.network import (
    as_nodes,
    check_params,
    decode,
    decoder_layer_widths,
    encode,
    encode_nodes,
    fusion_param_delta,
    init_params,
    param_count,
    encode_image,
    pixel_centers,
    query_rgb,
    render,
)
from src.numerics import autodiff as ad
from src.numerics.autodiff import ShapeError
from src.numerics.gradcheck import numerical_grad, relative_error


def _bundle(cfg, params, rng, n=5, grid=(4, 5), out_dims=(9, 11)):
    fm = rng.standard_normal((cfg.enc_channels,) + grid)
    targets = rng.uniform(-1, 1, size=(n, 2))
    enc = EncodingParams(params["freqs"]) if cfg.use_encoding else None
    return build_queries(fm, targets, out_dims, enc)


# -- config and parameter layout -------------------------------------------------


def test_model_config_defaults_and_validation():
    cfg = ModelConfig()
    assert (cfg.enc_channels, cfg.enc_blocks, cfg.hidden_width, cfg.hidden_layers, cfg.encoding_dim) == (
        32, 4, 256, 4, 48,
    )
    assert cfg.input_width == 9 * 32 + 2 + 48 + 2
    assert cfg.tag == "R+C+S"
    with pytest.raises(ConfigError):
        ModelConfig(encoding_dim=10)
    with pytest.raises(ConfigError):
        ModelConfig(hidden_layers=0)
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"hidden_widht": 8})


def test_fused_hidden_layers_take_coordinate_bundle():
    widths = decoder_layer_widths(ModelConfig())
    assert all(w == (256 + 50, 256) for w in widths[1:-1])
    assert widths[-1] == (256, 3)
    assert len(widths) == 4 + 2


@pytest.mark.parametrize("use_encoding", [True, False])
def test_fusion_toggle_parameter_arithmetic(use_encoding):
    on = ModelConfig(use_fusion=True, use_encoding=use_encoding)
    off = ModelConfig(use_fusion=False, use_encoding=use_encoding)
    expected = 4 * (2 + (48 if use_encoding else 0)) * 256
    assert param_count(on) - param_count(off) == expected == fusion_param_delta(on)


def test_encoding_toggle_without_fusion_changes_only_layer0():
    on = ModelConfig(use_fusion=False, use_encoding=True)
    off = ModelConfig(use_fusion=False, use_encoding=False)
    w_on, w_off = decoder_layer_widths(on), decoder_layer_widths(off)
    assert w_on[0][0] - w_off[0][0] == 48
    assert w_on[1:] == w_off[1:]
    # layer-0 weights plus the 12 trainable frequencies
    assert param_count(on) - param_count(off) == 48 * 256 + 12


def test_residual_toggle_adds_no_parameters():
    assert param_count(ModelConfig(use_residual=True)) == param_count(ModelConfig(use_residual=False))


def test_init_is_seeded_and_bounded(tiny_cfg):
    a = init_params(tiny_cfg, np.random.default_rng(3))
    b = init_params(tiny_cfg, np.random.default_rng(3))
    assert a.keys() == b.keys()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    bound = 1.0 / np.sqrt(tiny_cfg.input_width)
    assert np.abs(a["dec.layer0.w"]).max() <= bound
    np.testing.assert_array_equal(a["freqs"], [2.0, 4.0])
    check_params(a, tiny_cfg)


def test_check_params_reports_mismatch(tiny_cfg, tiny_params):
    broken = dict(tiny_params)
    broken["dec.layer1.w"] = np.zeros((3, 3))
    with pytest.raises(ShapeError, match="dec.layer1.w"):
        check_params(broken, tiny_cfg)


# -- encoder -------------------------------------------------------------------


def test_encode_shape(tiny_cfg, tiny_params, random_image):
    assert encode(random_image, tiny_params, tiny_cfg).shape == (4, 12, 10)


def test_encode_zero_weights_gives_zero_features(tiny_cfg, tiny_params, random_image):
    zeros = {k: np.zeros_like(v) for k, v in tiny_params.items()}
    np.testing.assert_array_equal(encode(random_image, zeros, tiny_cfg), 0.0)


def test_encoder_gradients_match_finite_differences(tiny_cfg, tiny_params, rng):
    x = np.transpose(rng.random((6, 6, 3)), (2, 0, 1)).copy()
    enc_names = [k for k in tiny_params if k.startswith("enc.")]

    def loss(nodes):
        return ad.mean(encode_nodes(ad.constant(x), nodes, tiny_cfg))

    grads = ad.backward(loss(as_nodes(tiny_params, trainable=True)))

    def f():
        return float(loss(as_nodes(tiny_params, trainable=False)).data)

    for name in enc_names:
        numeric = numerical_grad(f, tiny_params[name], h=1e-6)
        assert relative_error(grads[name], numeric) < 1e-4, name


# -- decoder -------------------------------------------------------------------


def test_decode_zero_net_returns_final_bias(tiny_cfg, tiny_params, rng):
    params = {k: np.zeros_like(v) for k, v in tiny_params.items()}
    params["freqs"] = tiny_params["freqs"]
    params["dec.layer3.b"] = np.array([0.1, -0.2, 0.7])
    bundle, _ = _bundle(tiny_cfg, params, rng)
    out = decode(bundle, params, tiny_cfg)
    assert out.shape == (4, 5, 3)
    np.testing.assert_array_equal(out, np.broadcast_to([0.1, -0.2, 0.7], (4, 5, 3)))


def test_decode_is_pure(tiny_cfg, tiny_params, rng):
    bundle, _ = _bundle(tiny_cfg, tiny_params, rng)
    np.testing.assert_array_equal(decode(bundle, tiny_params, tiny_cfg), decode(bundle, tiny_params, tiny_cfg))


def test_residual_path_degenerates_to_first_hidden_state(tiny_cfg, tiny_params, rng):
    params = dict(tiny_params)
    params["dec.layer2.w"] = np.zeros_like(params["dec.layer2.w"])
    params["dec.layer2.b"] = np.zeros_like(params["dec.layer2.b"])
    bundle, _ = _bundle(tiny_cfg, params, rng)

    x = np.concatenate([bundle.feature, bundle.rel_coord, bundle.encoding, bundle.cell], axis=-1)
    h0 = np.maximum(x @ params["dec.layer0.w"] + params["dec.layer0.b"], 0.0)
    expected = h0 @ params["dec.layer3.w"] + params["dec.layer3.b"]
    np.testing.assert_allclose(decode(bundle, params, tiny_cfg), expected, atol=1e-12)


def test_decode_width_mismatch_names_layer(tiny_params, rng):
    cfg = tiny_model_config()
    bundle, _ = _bundle(tiny_model_config(enc_channels=5), tiny_params, rng)
    with pytest.raises(ShapeError, match="decoder layer 0"):
        decode(bundle, tiny_params, cfg)


def test_decode_requires_encoding_when_enabled(tiny_cfg, tiny_params, rng):
    bundle, _ = _bundle(tiny_cfg, tiny_params, rng)
    bundle.encoding = None
    with pytest.raises(ShapeError):
        decode(bundle, tiny_params, tiny_cfg)


# -- rendering -----------------------------------------------------------------


def test_render_dims_range_and_determinism(tiny_cfg, tiny_params, random_image):
    a = render(random_image, 25, 17, tiny_params, tiny_cfg, threads=1)
    b = render(random_image, 25, 17, tiny_params, tiny_cfg, threads=1)
    assert a.shape == (25, 17, 3)
    assert a.min() >= 0.0 and a.max() <= 1.0
    np.testing.assert_array_equal(a, b)


def test_render_chunking_and_threads_do_not_change_output(tiny_cfg, tiny_params, random_image, monkeypatch):
    reference = render(random_image, 19, 23, tiny_params, tiny_cfg, threads=1)
    monkeypatch.setattr(network, "RENDER_CHUNK", 7)
    threaded = render(random_image, 19, 23, tiny_params, tiny_cfg, threads=3)
    np.testing.assert_allclose(threaded, reference, atol=1e-12)


def test_render_pixels_equal_point_queries(tiny_cfg, tiny_params, random_image):
    out = render(random_image, 24, 20, tiny_params, tiny_cfg, threads=1)
    centers = pixel_centers(24, 20)
    picks = np.array([0, 21, 137, 479])
    rgb = np.clip(query_rgb(encode_image(random_image, tiny_params, tiny_cfg), centers[picks], (24, 20)), 0, 1)
    np.testing.assert_allclose(out.reshape(-1, 3)[picks], rgb, atol=1e-12)


def test_render_answers_each_chunk_with_point_queries(tiny_cfg, tiny_params, random_image, monkeypatch):
    calls = []
    real = network.query_rgb

    def counting(encoded, targets, out_dims):
        calls.append((len(targets), out_dims))
        return real(encoded, targets, out_dims)

    monkeypatch.setattr(network, "query_rgb", counting)
    monkeypatch.setattr(network, "RENDER_CHUNK", 100)
    render(random_image, 15, 16, tiny_params, tiny_cfg, threads=1)
    assert calls == [(100, (15, 16)), (100, (15, 16)), (40, (15, 16))]


def test_query_rgb_is_independent_of_target_order(tiny_cfg, tiny_params, random_image, rng):
    targets = rng.uniform(-1, 1, size=(12, 2))
    perm = rng.permutation(12)
    encoded = encode_image(random_image, tiny_params, tiny_cfg)
    a = query_rgb(encoded, targets, (48, 40))
    b = query_rgb(encoded, targets[perm], (48, 40))
    np.testing.assert_allclose(a[perm], b, atol=1e-12)


def test_same_targets_at_two_scales_differ_only_in_cell(tiny_cfg, tiny_params, random_image):
    fm = encode(random_image, tiny_params, tiny_cfg)
    enc = EncodingParams(tiny_params["freqs"])
    targets = pixel_centers(24, 20)
    x2, w2 = build_queries(fm, targets, (24, 20), enc)
    x4, w4 = build_queries(fm, targets, (48, 40), enc)
    np.testing.assert_array_equal(x2.feature, x4.feature)
    np.testing.assert_array_equal(x2.rel_coord, x4.rel_coord)
    np.testing.assert_array_equal(x2.encoding, x4.encoding)
    np.testing.assert_array_equal(w2, w4)
    np.testing.assert_allclose(x2.cell, 0.5)
    np.testing.assert_allclose(x4.cell, 0.25)
    same_cell = dataclasses.replace(x4, cell=x2.cell)
    np.testing.assert_array_equal(decode(same_cell, tiny_params, tiny_cfg), decode(x2, tiny_params, tiny_cfg))


@pytest.mark.parametrize("scale", [2.0, 2.5, 3.7, 12.0])
def test_render_any_scale(tiny_cfg, tiny_params, random_image, scale):
    h = int(np.floor(scale * 12 + 1e-9))
    w = int(np.floor(scale * 10 + 1e-9))
    assert render(random_image, h, w, tiny_params, tiny_cfg).shape == (h, w, 3)


def test_render_rejects_empty_output(tiny_cfg, tiny_params, random_image):
    with pytest.raises(ValueError):
        render(random_image, 0, 5, tiny_params, tiny_cfg)
