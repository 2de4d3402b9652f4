"""Token assembly, masking, encoder/decoder contracts, reconstruction, loss,
and the checkpoint container."""

import numpy as np
import pytest
from scipy.special import erf

from ramen import LatentGrid, ModelConfig, RamenModel, detokenize, make_mask_plan, tokenize
from ramen.checkpoint import CheckpointMismatchError, load_checkpoint, save_checkpoint
from ramen.encodings import ChannelDescriptor, day_pe_matrix, gsd_pe_2d
from ramen.model import ModalityInput
from ramen.numerics import Tensor
from ramen.resampler import target_dims

TOY = ModelConfig(d=16, depth=2, heads=2, d_dec=8, depth_dec=1, heads_dec=2,
                  temporal_heads=4, temporal_key_dim=4)


def optical(*wavelengths):
    return tuple(ChannelDescriptor("optical", wavelength_nm=w) for w in wavelengths)


def toy_inputs(rng, n_modalities=2):
    mods = [
        ModalityInput("a", optical(490.0, 665.0), 4.0, rng.standard_normal((2, 2, 6, 6)), (40, 200)),
        ModalityInput("b", (ChannelDescriptor("radar", category_id="VV-asc"),), 6.0,
                      rng.standard_normal((1, 1, 4, 4)), (100,)),
        ModalityInput("c", (ChannelDescriptor("elevation", category_id="DSM"),
                            ChannelDescriptor("elevation", category_id="DTM")), 8.0,
                      rng.standard_normal((1, 2, 3, 3)), (7,)),
    ]
    return mods[:n_modalities]


@pytest.fixture
def model():
    return RamenModel(TOY, seed=3, dtype=np.float64)


# ---------------------------------------------------------------- tokenize


def test_token_count_two_8x8_grids(rng):
    grids = [
        LatentGrid("m0", Tensor(rng.standard_normal((16, 8, 8))), 10.0),
        LatentGrid("m1", Tensor(rng.standard_normal((16, 8, 8))), 10.0),
    ]
    seq = tokenize(grids)
    assert seq.n_tokens == 128


def test_tokenize_single_cell(rng):
    latent = rng.standard_normal((16, 1, 1))
    seq = tokenize([LatentGrid("m", Tensor(latent), 25.0)])
    assert seq.n_tokens == 1
    expected = latent[:, 0, 0] + gsd_pe_2d(1, 1, 25.0, 16)[0, 0]
    np.testing.assert_allclose(seq.tokens.data[0], expected, atol=1e-12)


def test_tokenize_rejects_mixed_gsd(rng):
    grids = [
        LatentGrid("m0", Tensor(rng.standard_normal((16, 2, 2))), 10.0),
        LatentGrid("m1", Tensor(rng.standard_normal((16, 2, 2))), 20.0),
    ]
    with pytest.raises(ValueError, match="mixed"):
        tokenize(grids)


def test_detokenize_is_exact_inverse(rng):
    grids = [
        LatentGrid("m0", Tensor(rng.standard_normal((16, 3, 5))), 10.0),
        LatentGrid("m1", Tensor(rng.standard_normal((16, 2, 2))), 10.0),
    ]
    seq = tokenize(grids)
    back = detokenize(seq)
    for (name, restored), lg in zip(back, grids):
        assert name == lg.name
        np.testing.assert_array_equal(restored.data, lg.grid.data)


def test_token_meta_unique(rng):
    grids = [
        LatentGrid("m0", Tensor(rng.standard_normal((16, 3, 4))), 10.0),
        LatentGrid("m1", Tensor(rng.standard_normal((16, 2, 5))), 10.0),
    ]
    seq = tokenize(grids)
    triples = set(zip(seq.modality_idx, seq.grid_h, seq.grid_w))
    assert len(triples) == seq.n_tokens


def test_token_count_formula_random_configs(rng):
    for _ in range(20):
        n_mod = int(rng.integers(1, 4))
        gsd_target = float(rng.uniform(2, 50))
        expected = 0
        grids = []
        for m in range(n_mod):
            h_native, w_native = int(rng.integers(2, 16)), int(rng.integers(2, 16))
            gsd = float(rng.uniform(1, 40))
            ht, wt = target_dims(h_native, w_native, gsd, gsd_target)
            expected += ht * wt
            grids.append(LatentGrid(f"m{m}", Tensor(rng.standard_normal((8, ht, wt))), gsd_target))
        assert tokenize(grids).n_tokens == expected


# ---------------------------------------------------------------- masking


def test_mask_counts():
    plan = make_mask_plan(128, 0.75, seed=0)
    assert plan.masked_idx.size == 96
    assert plan.visible_idx.size == 32


def test_mask_zero_ratio():
    plan = make_mask_plan(50, 0.0, seed=0)
    assert plan.masked_idx.size == 0
    assert plan.visible_idx.size == 50


def test_mask_partition():
    plan = make_mask_plan(77, 0.6, seed=5)
    union = np.sort(np.concatenate([plan.visible_idx, plan.masked_idx]))
    np.testing.assert_array_equal(union, np.arange(77))


def test_mask_deterministic():
    a = make_mask_plan(100, 0.75, seed=42)
    b = make_mask_plan(100, 0.75, seed=42)
    np.testing.assert_array_equal(a.masked_idx, b.masked_idx)
    c = make_mask_plan(100, 0.75, seed=43)
    assert not np.array_equal(a.masked_idx, c.masked_idx)


def test_mask_frequency_near_ratio():
    n, draws = 64, 2000
    counts = np.zeros(n)
    for s in range(draws):
        counts[make_mask_plan(n, 0.75, seed=s).masked_idx] += 1
    freq = counts / draws
    assert np.max(np.abs(freq - 0.75)) < 0.04


# ---------------------------------------------------------------- encoder


def test_encode_row_count(model, rng):
    seq, _ = model.embed(toy_inputs(rng), 8.0)
    plan = make_mask_plan(seq.n_tokens, 0.75, seed=0)
    out = model.encode(seq, plan)
    assert out.shape == (plan.visible_idx.size + 1, TOY.d)


def test_encode_permutation_equivariance(model, rng):
    seq, _ = model.embed(toy_inputs(rng), 8.0)
    plan = make_mask_plan(seq.n_tokens, 0.5, seed=1)
    out = model.encode(seq, plan).data
    perm = np.random.default_rng(0).permutation(plan.visible_idx.size)
    from ramen.model import MaskPlan

    shuffled = MaskPlan(plan.visible_idx[perm], plan.masked_idx, plan.ratio)
    out_p = model.encode(seq, shuffled).data
    np.testing.assert_allclose(out_p[0], out[0], atol=1e-6)  # CLS unchanged
    np.testing.assert_allclose(out_p[1:], out[1:][perm], atol=1e-6)


# ---------------------------------------------------------------- decoder


def test_decode_row_count(model, rng):
    seq, _ = model.embed(toy_inputs(rng), 8.0)
    plan = make_mask_plan(seq.n_tokens, 0.75, seed=0)
    decoded = model.decode(model.encode(seq, plan), plan, seq)
    assert decoded.shape == (seq.n_tokens, TOY.d_dec)


def test_decode_near_total_masking(model, rng):
    seq, _ = model.embed(toy_inputs(rng), 8.0)
    n = seq.n_tokens
    from ramen.model import MaskPlan

    plan = MaskPlan(np.array([0]), np.arange(1, n), ratio=(n - 1) / n)
    decoded = model.decode(model.encode(seq, plan), plan, seq)
    assert decoded.shape == (n, TOY.d_dec)


def test_masked_decoder_inputs_identical_across_modalities(model, rng):
    # two modalities landing on the same target grid: masked rows at equal
    # (h, w) receive identical decoder inputs (shared token + same encoding)
    inputs = toy_inputs(rng)  # grids: a -> 3x3, b -> 3x3 at gsd_target 8
    seq, _ = model.embed(inputs, 8.0)
    n = seq.n_tokens
    assert n == 18
    from ramen.model import MaskPlan

    plan = MaskPlan(np.array([], dtype=int), np.arange(n), ratio=1.0)
    encoded = model.encode(seq, MaskPlan(np.array([0]), np.arange(1, n), 0.9))
    rows = model.decoder_input_rows(encoded, plan, seq).data
    np.testing.assert_array_equal(rows[1:9], rows[10:18])  # same (h, w), both masked


# ---------------------------------------------------------------- reconstruct


def test_reconstruct_shapes_three_modalities(model, rng):
    inputs = toy_inputs(rng, 3)
    seq, assemblies = model.embed(inputs, 8.0)
    plan = make_mask_plan(seq.n_tokens, 0.75, seed=0)
    decoded = model.decode(model.encode(seq, plan), plan, seq)
    recons = model.reconstruct(decoded, assemblies)
    for inp in inputs:
        assert recons[inp.name].shape == inp.values.shape


def test_reconstruct_zero_decoded_zero_head(model, rng):
    # with the channel-recovery head zeroed, any decoded tokens (zero included)
    # reconstruct to exact zeros
    model.reconstruction_head.weight.data[:] = 0.0
    model.reconstruction_head.bias.data[:] = 0.0
    inputs = toy_inputs(rng)
    seq, assemblies = model.embed(inputs, 8.0)
    decoded = Tensor(np.zeros((seq.n_tokens, TOY.d_dec)))
    recons = model.reconstruct(decoded, assemblies)
    for r in recons.values():
        np.testing.assert_array_equal(r.data, 0.0)


def transformer_block_reference(block, x: np.ndarray) -> np.ndarray:
    """Loop-free numpy re-derivation of the pre-norm block."""

    def ln(v, w, b, eps=1e-6):
        mu = v.mean(-1, keepdims=True)
        var = v.var(-1, keepdims=True)
        return (v - mu) / np.sqrt(var + eps) * w + b

    def gelu_ref(v):
        return 0.5 * v * (1.0 + erf(v / np.sqrt(2.0)))

    b_, t_, d_ = x.shape
    nh = block.attn.n_heads
    hd = d_ // nh
    h = ln(x, block.norm1.weight.data, block.norm1.bias.data)
    qkv = h @ block.attn.qkv.weight.data + block.attn.qkv.bias.data
    qkv = qkv.reshape(b_, t_, 3, nh, hd)
    out_attn = np.zeros_like(x)
    for bi in range(b_):
        heads = []
        for n in range(nh):
            q, k, v = qkv[bi, :, 0, n], qkv[bi, :, 1, n], qkv[bi, :, 2, n]
            logits = q @ k.T / np.sqrt(hd)
            logits -= logits.max(axis=-1, keepdims=True)
            a = np.exp(logits)
            a /= a.sum(axis=-1, keepdims=True)
            heads.append(a @ v)
        merged = np.concatenate(heads, axis=-1)
        out_attn[bi] = merged @ block.attn.proj.weight.data + block.attn.proj.bias.data
    x = x + out_attn
    h2 = ln(x, block.norm2.weight.data, block.norm2.bias.data)
    mid = gelu_ref(h2 @ block.mlp.fc1.weight.data + block.mlp.fc1.bias.data)
    return x + (mid @ block.mlp.fc2.weight.data + block.mlp.fc2.bias.data)


def test_reconstruct_matches_hand_composed_chain(rng):
    # single modality, T=1, 4x4, C=2, native GSD == target GSD (sigma = 0)
    model = RamenModel(TOY, seed=9, dtype=np.float64)
    model.reconstruction_head.weight.data = 0.3 * rng.standard_normal(
        model.reconstruction_head.weight.shape
    )
    inp = ModalityInput("only", optical(490.0, 842.0), 5.0,
                        rng.standard_normal((1, 2, 4, 4)), (123,))
    seq, assemblies = model.embed([inp], 5.0)
    decoded_np = rng.standard_normal((seq.n_tokens, TOY.d_dec))
    recons = model.reconstruct(Tensor(decoded_np), assemblies)["only"]

    # chain of stage references: temporal expansion (block reference), inverse
    # resampling (identity here: sigma=0 and zero experts), head + transpose
    asm = assemblies[0]
    grid = decoded_np.T.reshape(TOY.d_dec, 4, 4)
    pixels = grid.reshape(TOY.d_dec, 16).T  # (P, D_dec)
    tokens = pixels[:, None, :] + day_pe_matrix(asm.stamps.days, TOY.d_dec)[None]
    expanded = transformer_block_reference(model.expander.block, tokens)  # (P, 1, D_dec)
    native = expanded[:, 0, :]  # resample step is the identity
    head = native @ model.reconstruction_head.weight.data + model.reconstruction_head.bias.data
    chans = head @ asm.matrix.m.data.T  # (P, C)
    expected = chans.T.reshape(1, 2, 4, 4)
    np.testing.assert_allclose(recons.data, expected, atol=1e-8)


# ---------------------------------------------------------------- loss


def test_loss_zero_on_perfect_reconstruction(model, rng):
    target = rng.standard_normal((1, 2, 4, 4))
    mask = np.zeros((4, 4), dtype=bool)
    mask[1, 2] = True
    loss = model.masked_loss({"m": Tensor(target.copy())}, {"m": target}, {"m": mask})
    assert loss.item() == 0.0


def test_loss_single_masked_pixel_value(model, rng):
    h, w = 5, 7
    target = rng.standard_normal((1, 1, h, w))
    recon = target.copy()
    delta = 0.37
    recon[0, 0, 2, 3] += delta
    mask = np.zeros((h, w), dtype=bool)
    mask[2, 3] = True
    loss = model.masked_loss({"m": Tensor(recon)}, {"m": target}, {"m": mask})
    assert loss.item() == pytest.approx(delta**2 / (h * w), rel=1e-12)


def test_loss_ignores_unmasked_pixels_bitwise(model, rng):
    target = rng.standard_normal((2, 3, 4, 4))
    recon = rng.standard_normal((2, 3, 4, 4))
    mask = np.zeros((4, 4), dtype=bool)
    mask[0, 0] = True
    base = model.masked_loss({"m": Tensor(recon)}, {"m": target}, {"m": mask}).item()
    perturbed = recon.copy()
    perturbed[:, :, 3, 3] += 123.456  # unmasked pixel
    after = model.masked_loss({"m": Tensor(perturbed)}, {"m": target}, {"m": mask}).item()
    assert base == after


def test_loss_empty_mask_warns_and_returns_zero(model, rng):
    target = rng.standard_normal((1, 1, 2, 2))
    mask = np.zeros((2, 2), dtype=bool)
    with pytest.warns(RuntimeWarning):
        loss = model.masked_loss({"m": Tensor(target + 1)}, {"m": target}, {"m": mask})
    assert loss.item() == 0.0


def test_loss_invariant_to_modality_order(model, rng):
    inputs = toy_inputs(rng, 3)
    seq, assemblies = model.embed(inputs, 8.0)
    plan = make_mask_plan(seq.n_tokens, 0.75, seed=11)
    decoded = model.decode(model.encode(seq, plan), plan, seq)
    recons = model.reconstruct(decoded, assemblies)
    masks = model.pixel_masks(plan, seq, assemblies)
    targets = {i.name: i.values for i in inputs}
    loss = model.masked_loss(recons, targets, masks).item()

    # same tokens, modalities declared in reverse; remap the mask indices
    order = np.argsort(
        np.concatenate([np.full(g.h * g.w, 2 - i) for i, g in enumerate(seq.grids)]),
        kind="stable",
    )
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    seq_r, assemblies_r = model.embed(list(reversed(inputs)), 8.0)
    from ramen.model import MaskPlan

    plan_r = MaskPlan(np.sort(inv[plan.visible_idx]), np.sort(inv[plan.masked_idx]), plan.ratio)
    decoded_r = model.decode(model.encode(seq_r, plan_r), plan_r, seq_r)
    recons_r = model.reconstruct(decoded_r, assemblies_r)
    masks_r = model.pixel_masks(plan_r, seq_r, assemblies_r)
    loss_r = model.masked_loss(recons_r, targets, masks_r).item()
    assert loss_r == pytest.approx(loss, abs=1e-10)


def test_pixel_mask_identity_when_grids_match(model, rng):
    inp = ModalityInput("m", optical(490.0), 4.0, rng.standard_normal((1, 1, 5, 5)), (10,))
    seq, assemblies = model.embed([inp], 4.0)  # sigma = 0, grid 5x5
    plan = make_mask_plan(seq.n_tokens, 0.6, seed=2)
    mask = model.pixel_masks(plan, seq, assemblies)["m"]
    token_mask = np.zeros(25, dtype=bool)
    token_mask[plan.masked_idx] = True
    np.testing.assert_array_equal(mask, token_mask.reshape(5, 5))


# ---------------------------------------------------------------- checkpoints


def test_parameter_names_unique_and_stable(model):
    names = [name for name, _ in model.named_parameters()]
    assert len(names) == len(set(names))
    again = [name for name, _ in RamenModel(TOY, seed=99, dtype=np.float64).named_parameters()]
    assert names == again  # name set independent of init seed


def test_checkpoint_round_trip_bit_identical(tmp_path, rng):
    model = RamenModel(TOY, seed=1, dtype=np.float32)
    inputs = toy_inputs(rng)
    before = model.encode_features(inputs, 8.0)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model, {"preset": "toy"})
    reloaded = RamenModel(TOY, seed=777, dtype=np.float32)  # different init
    meta = load_checkpoint(path, reloaded)
    assert meta["preset"] == "toy"
    after = reloaded.encode_features(inputs, 8.0)
    for name in before:
        np.testing.assert_array_equal(before[name], after[name])


def test_checkpoint_mismatch_named_diff(tmp_path):
    small = RamenModel(TOY, seed=0, dtype=np.float32)
    other = RamenModel(ModelConfig(d=24, depth=1, heads=2, d_dec=8, depth_dec=1, heads_dec=2,
                                   temporal_heads=4, temporal_key_dim=4), seed=0, dtype=np.float32)
    path = tmp_path / "small.ckpt"
    save_checkpoint(path, small)
    with pytest.raises(CheckpointMismatchError) as exc:
        load_checkpoint(path, other)
    msg = str(exc.value)
    assert "shape mismatches" in msg or "missing" in msg or "not in model" in msg
    assert "cls_token" in msg or "encoder_blocks" in msg


def test_checkpoint_extra_param_rejected(tmp_path):
    model = RamenModel(TOY, seed=0, dtype=np.float32)
    from ramen.checkpoint import write_arrays

    arrays = {name: p.data for name, p in model.named_parameters()}
    arrays["ghost.weight"] = np.zeros((2, 2), dtype=np.float32)
    path = tmp_path / "ghost.ckpt"
    write_arrays(path, arrays, {"kind": "checkpoint"})
    with pytest.raises(CheckpointMismatchError, match="ghost.weight"):
        load_checkpoint(path, model)
