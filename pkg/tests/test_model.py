import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from h2oformer.het import ConfigError
from h2oformer.model import H2OFormer, ModelConfig, count_parameters, mask_count
from h2oformer.numerics import Tensor, finite_diff_check, load_checkpoint, ops, save_checkpoint
from h2oformer.topology import topology_from_dict
from h2oformer.training import checkpoint_header
from conftest import micro_config


def chain_topology(n, groups):
    return topology_from_dict({"num_vertices": n, "bones": [[i, i + 1] for i in range(n - 1)],
                               "hyperedges": groups})


def zero_module(module):
    for p in module.parameters():
        p.data[...] = 0.0


def test_embed_zero_input_is_zero(micro_model):
    micro_model.b_in.data[...] = 0
    micro_model.joint_embed.data[...] = 0
    assert not micro_model.embed_input(np.zeros((1, 8, 6, 3))).data.any()


def test_embed_shape_full_size(imigue22):
    cfg = ModelConfig(encoder_blocks=1, decoder_blocks=0)
    m = H2OFormer(cfg, imigue22)
    assert m.embed_input(np.zeros((1, 52, 22, 3))).shape == (1, 52, 22, 216)


def test_embed_identity_on_three_channels(micro6, rng):
    m = H2OFormer(micro_config(d_model=3, num_heads=1), micro6)
    m.w_in.data[...] = np.eye(3)
    m.b_in.data[...] = 0
    m.joint_embed.data[...] = 0
    x = rng.standard_normal((2, 8, 6, 3))
    np.testing.assert_array_equal(m.embed_input(x).data, x)


def test_zero_single_encoder_block_passes_embedding(micro6, rng):
    m = H2OFormer(micro_config(encoder_blocks=1), micro6)
    zero_module(m.encoder[0])
    h = m.embed_input(rng.standard_normal((2, 8, 6, 3)))
    z, _, _ = m.encode(h)
    np.testing.assert_array_equal(z.data, h.data)


def test_zero_decoder_reconstructs_zero(micro_model, rng):
    zero_module(micro_model.decoder[0])
    micro_model.w_out.data[...] = 0
    micro_model.b_out.data[...] = 0
    z = Tensor(rng.standard_normal((1, 8, 6, 12)))
    recon, _ = micro_model.decode(z, Tensor(rng.standard_normal((1, 8, 6, 12))))
    assert recon.shape == (1, 8, 6, 3) and not recon.data.any()


def test_decode_without_decoder_rejected(micro6):
    m = H2OFormer(micro_config(use_decoder=False), micro6)
    with pytest.raises(ConfigError, match="decoder"):
        m.decode(Tensor(np.zeros((1, 8, 6, 12))))


def test_zero_head_gives_half(micro_model, rng):
    zero_module(micro_model.head)
    _, prob = micro_model.recognize(Tensor(rng.standard_normal((3, 8, 6, 12))))
    np.testing.assert_array_equal(prob.data, 0.5)


def test_sigmoid_of_log_two():
    assert ops.sigmoid(Tensor(np.array(0.6931471805599453))).item() == pytest.approx(2 / 3, abs=1e-12)


def test_decoder_free_output_has_no_reconstruction(micro6, rng):
    m = H2OFormer(micro_config(use_decoder=False), micro6)
    out = m(rng.standard_normal((2, 8, 6, 3)))
    assert out.reconstruction is None and out.logit.shape == (2,)


def test_full_micro_outputs(micro_model, rng):
    x = rng.standard_normal((3, 8, 6, 3))
    out = micro_model(x)
    assert out.reconstruction.shape == x.shape
    assert out.logit.shape == (3,) and out.probability.shape == (3,)
    np.testing.assert_allclose(out.probability.data, 1 / (1 + np.exp(-out.logit.data)), atol=1e-15)


def test_single_sequence_input(micro_model, rng):
    out = micro_model(rng.standard_normal((8, 6, 3)))
    assert out.reconstruction.shape == (1, 8, 6, 3)


def test_forward_rejects_wrong_joint_count(micro_model):
    with pytest.raises(ops.ShapeError, match=r"\(N, T, 6, 3\)"):
        micro_model(np.zeros((1, 8, 5, 3)))


@pytest.mark.parametrize("rate, v, expected", [(0.3, 10, 3), (0.3, 22, 7), (0.3, 25, 8), (0.3, 6, 2), (0.0, 6, 0)])
def test_mask_count(rate, v, expected):
    assert mask_count(rate, v) == expected


def test_masking_zeroes_three_of_ten_joints(rng):
    top = chain_topology(10, [[0, 1, 2, 3, 4], [5, 6, 7, 8, 9]])
    m = H2OFormer(micro_config(num_joints=10, masking_rate=0.3), top)
    seen = {}
    real = m.embed_input

    def spy(x):
        seen["x"] = x.data.copy()
        return real(x)

    m.embed_input = spy
    x = rng.standard_normal((4, 8, 10, 3)) + 5.0
    out = m(x, mask_rng=np.random.default_rng(0))
    assert out.mask.sum(axis=1).tolist() == [3, 3, 3, 3]
    zeroed = np.all(seen["x"] == 0, axis=(1, 3))
    np.testing.assert_array_equal(zeroed, out.mask)


def test_masking_needs_rng_and_is_off_in_eval(micro6, rng):
    m = H2OFormer(micro_config(masking_rate=0.3), micro6)
    with pytest.raises(ValueError, match="mask_rng"):
        m(rng.standard_normal((1, 8, 6, 3)))
    m.eval()
    assert m(rng.standard_normal((1, 8, 6, 3))).mask is None


def test_forward_is_deterministic(micro6, rng):
    x = rng.standard_normal((2, 8, 6, 3))
    cfg = micro_config(masking_rate=0.3)
    a = H2OFormer(cfg, micro6, seed=5)(x, mask_rng=np.random.default_rng(9))
    b = H2OFormer(cfg, micro6, seed=5)(x, mask_rng=np.random.default_rng(9))
    assert a.reconstruction.data.tobytes() == b.reconstruction.data.tobytes()
    assert a.logit.data.tobytes() == b.logit.data.tobytes()
    np.testing.assert_array_equal(a.mask, b.mask)


def test_variants_share_common_weights(micro6):
    full = H2OFormer(micro_config(), micro6, seed=0).named_parameters()
    bl = H2OFormer(micro_config(use_hypergraph=False, use_enhanced_hyperedge=False, use_decoder=False),
                   micro6, seed=0).named_parameters()
    assert set(bl) < set(full)
    for k in bl:
        np.testing.assert_array_equal(bl[k].data, full[k].data)


def test_zeroed_hypergraph_path_matches_baseline(micro6, rng):
    x = rng.standard_normal((3, 8, 6, 3))
    base = H2OFormer(micro_config(use_hypergraph=False, use_enhanced_hyperedge=False, use_decoder=False), micro6)
    hg = H2OFormer(micro_config(use_decoder=False), micro6)
    for blk in hg.encoder:
        blk.w_ek.data[...] = 0
        blk.w_eq.data[...] = 0
    base.eval()
    hg.eval()
    assert base(x).logit.data.tobytes() == hg(x).logit.data.tobytes()


@pytest.mark.parametrize("t, v", [(4, 4), (8, 6), (52, 22), (52, 25)])
def test_reconstruction_shape_grid(t, v, imigue22, smg25, micro6, quad4):
    top = {4: quad4, 6: micro6, 22: imigue22, 25: smg25}[v]
    m = H2OFormer(ModelConfig(num_joints=v, d_model=6, num_heads=2, temporal_len=t, encoder_blocks=2,
                              decoder_blocks=1), top)
    x = np.random.default_rng(0).standard_normal((1, t, v, 3))
    assert m(x).reconstruction.shape == x.shape


def test_decoder_dims_change_widths(micro6, rng):
    m = H2OFormer(micro_config(decoder_blocks=2, decoder_dims=(24, 12)), micro6)
    assert m.decoder[0].config.d_out == 24
    assert m(rng.standard_normal((1, 8, 6, 3))).reconstruction.shape == (1, 8, 6, 3)
    assert m.num_parameters() == count_parameters(m.config, micro6)


@settings(max_examples=20, deadline=None)
@given(hg=st.booleans(), eh=st.booleans(), db=st.booleans(), share=st.booleans(), mix=st.booleans(),
       layers=st.integers(1, 3), dec=st.integers(0, 2))
def test_parameter_count_is_config_function(micro6, hg, eh, db, share, mix, layers, dec):
    cfg = micro_config(use_hypergraph=hg, use_enhanced_hyperedge=eh and hg, use_decoder=db, share_relpos=share,
                       recompute_hyperedges=mix, encoder_blocks=layers, decoder_blocks=dec)
    assert H2OFormer(cfg, micro6).num_parameters() == count_parameters(cfg, micro6)


def test_recompute_with_zero_pooling_matches_propagation(micro6, rng):
    x = rng.standard_normal((2, 8, 6, 3))
    plain = H2OFormer(micro_config(), micro6, seed=3)
    mixed = H2OFormer(micro_config(recompute_hyperedges=True), micro6, seed=3)
    assert "encoder.block2.W_e" in mixed.named_parameters()
    assert "encoder.block2.W_e" not in plain.named_parameters()
    for blk in mixed.encoder[1:] + mixed.decoder:
        blk.w_e.data[...] = 0
    a, b = plain(x), mixed(x)
    np.testing.assert_allclose(a.reconstruction.data, b.reconstruction.data, rtol=0, atol=1e-13)
    np.testing.assert_allclose(a.logit.data, b.logit.data, rtol=0, atol=1e-13)


def test_recompute_gradients(micro6, rng):
    m = H2OFormer(micro_config(recompute_hyperedges=True, decoder_blocks=0), micro6, seed=1)
    x = rng.standard_normal((2, 8, 6, 3))
    params = [p for k, p in m.named_parameters().items() if k.endswith(".W_e")]

    def loss():
        h = m.embed_input(x)
        z, _, _ = m.encode(h)
        return ops.sum(ops.mul(z, z))

    rep = finite_diff_check(loss, params, samples=16)
    assert rep.passed, rep.format_table()


def test_recompute_rejects_width_mismatch(micro6):
    with pytest.raises(ConfigError, match="recompute_hyperedges"):
        H2OFormer(micro_config(recompute_hyperedges=True, use_enhanced_hyperedge=False, decoder_blocks=2,
                               decoder_dims=(24, 12)), micro6)


def test_checkpoint_round_trip_restores_outputs(micro_model, tmp_path, rng):
    x = rng.standard_normal((2, 8, 6, 3))
    micro_model(x)      # moves running statistics away from their initial values
    micro_model.eval()
    before = micro_model(x).reconstruction.data
    path = save_checkpoint(tmp_path / "m.npz", micro_model.state_dict(), checkpoint_header(micro_model))
    arrays, header = load_checkpoint(path)
    assert header["num_parameters"] == count_parameters(micro_model.config, micro_model.topology)
    fresh = H2OFormer(ModelConfig.from_dict(header["model"]), micro_model.topology, seed=99)
    fresh.load_state_dict(arrays)
    fresh.eval()
    assert fresh(x).reconstruction.data.tobytes() == before.tobytes()


def test_config_validation(micro6):
    with pytest.raises(ConfigError, match="encoder_blocks"):
        micro_config(encoder_blocks=0)
    with pytest.raises(ConfigError, match="masking_rate"):
        micro_config(masking_rate=1.0)
    with pytest.raises(ConfigError, match="requires use_hypergraph"):
        micro_config(use_hypergraph=False)
    with pytest.raises(ConfigError, match="unknown model config keys"):
        ModelConfig.from_dict({"depth": 3})
    with pytest.raises(ConfigError, match="has 6"):
        H2OFormer(dataclasses.replace(micro_config(), num_joints=7), micro6)


def test_float32_model(micro6, rng):
    m = H2OFormer(micro_config(dtype="float32"), micro6)
    out = m(rng.standard_normal((1, 8, 6, 3)))
    assert out.reconstruction.dtype == np.float32
    assert all(p.dtype == np.float32 for p in m.parameters())
