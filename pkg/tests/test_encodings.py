"""Sinusoidal and learned encodings."""

import math

import numpy as np
import pytest

from ramen.corpus import S2_WAVELENGTHS_NM
from ramen.encodings import (
    CATEGORY_IDS,
    CategoricalEmbedding,
    ChannelDescriptor,
    RegistryError,
    day_pe,
    gsd_pe_2d,
    gsd_pe_arguments,
    ratio_pe,
    wavelength_pe,
)


# ---------------------------------------------------------------- wavelength


def test_wavelength_pe_zero_limit():
    out = wavelength_pe(1e-30, 64)
    np.testing.assert_allclose(out[0::2], 0.0, atol=1e-12)
    np.testing.assert_allclose(out[1::2], 1.0, atol=1e-12)


def test_wavelength_pe_deterministic():
    np.testing.assert_array_equal(wavelength_pe(665.0, 768), wavelength_pe(665.0, 768))


def test_wavelength_pe_component0_is_plain_sine():
    # at k=0 the frequency divisor is 1, so component 0 is sin of the raw value
    assert wavelength_pe(665.0, 768)[0] == pytest.approx(math.sin(665.0), abs=1e-12)
    assert wavelength_pe(665.0, 768)[1] == pytest.approx(math.cos(665.0), abs=1e-12)


def test_wavelength_pe_bounded():
    for lam in (0.1, 665.0, 2200.0, 1e6):
        out = wavelength_pe(lam, 128)
        assert np.all(np.abs(out) <= 1.0)


def test_wavelength_pe_rejects_nonpositive():
    with pytest.raises(ValueError):
        wavelength_pe(0.0, 16)
    with pytest.raises(ValueError):
        wavelength_pe(-5.0, 16)


def test_wavelength_pe_separates_s2_bands():
    vecs = [wavelength_pe(w, 768) for w in S2_WAVELENGTHS_NM]
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            assert np.linalg.norm(vecs[i] - vecs[j]) > 0.0


# ---------------------------------------------------------------- categorical


def test_categorical_same_id_same_row(rng):
    emb = CategoricalEmbedding(32, rng)
    a = emb.rows(["VV-asc"]).data
    b = emb.rows(["VV-asc"]).data
    np.testing.assert_array_equal(a, b)


def test_categorical_distinct_ids_differ(rng):
    emb = CategoricalEmbedding(32, rng)
    a = emb.rows(["VV-asc"]).data
    b = emb.rows(["VH-asc"]).data
    assert np.linalg.norm(a - b) > 0


def test_categorical_registry_size(rng):
    emb = CategoricalEmbedding(48, rng)
    assert len(CATEGORY_IDS) == 11
    assert emb.table.size == 11 * 48


def test_categorical_unknown_id(rng):
    emb = CategoricalEmbedding(16, rng)
    with pytest.raises(RegistryError):
        emb.rows(["XX-asc"])


def test_categorical_rows_carry_gradient(rng):
    emb = CategoricalEmbedding(8, rng)
    emb.rows(["DSM", "slope"]).sum().backward()
    assert emb.table.grad is not None
    assert np.count_nonzero(emb.table.grad.sum(axis=1)) == 2


# ---------------------------------------------------------------- ratio and day


def test_ratio_pe_zero():
    out = ratio_pe(0.0, 32)
    np.testing.assert_array_equal(out[0::2], 0.0)
    np.testing.assert_array_equal(out[1::2], 1.0)


def test_log_ratio_value():
    sigma = math.log(30.0 / 300.0)
    assert sigma == pytest.approx(-2.302585, abs=1e-6)
    assert ratio_pe(sigma, 16)[0] == pytest.approx(math.sin(sigma), abs=1e-12)


def test_ratio_pe_pure_function():
    np.testing.assert_array_equal(ratio_pe(-1.3, 64), ratio_pe(-1.3, 64))


def test_day_pe_identical_inputs():
    np.testing.assert_array_equal(day_pe(1, 32), day_pe(1, 32))


def test_day_pe_distinct_days_differ():
    assert np.linalg.norm(day_pe(1, 32) - day_pe(180, 32)) > 0


def test_day_pe_component0():
    assert day_pe(90, 64)[0] == pytest.approx(math.sin(90.0), abs=1e-12)


def test_day_pe_range_check():
    with pytest.raises(ValueError):
        day_pe(0, 16)
    with pytest.raises(ValueError):
        day_pe(367, 16)


# ---------------------------------------------------------------- 2D grid encoding


def vanilla_2d_sincos(h: int, w: int, d: int) -> np.ndarray:
    """Independent reference: unscaled 2D interleaved sin/cos grid encoding."""
    k = np.arange(d // 4)
    inv = 10000.0 ** (-2.0 * k / d)
    out = np.zeros((h, w, d))
    for i in range(h):
        for j in range(w):
            xargs = j * inv
            yargs = i * inv
            out[i, j, 0 : d // 2 : 2] = np.sin(xargs)
            out[i, j, 1 : d // 2 : 2] = np.cos(xargs)
            out[i, j, d // 2 :: 2] = np.sin(yargs)
            out[i, j, d // 2 + 1 :: 2] = np.cos(yargs)
    return out


def test_gsd_pe_reduces_to_vanilla_bitwise():
    pe = gsd_pe_2d(5, 7, 1.0, 32, g_ref=1.0)
    np.testing.assert_array_equal(pe, vanilla_2d_sincos(5, 7, 32))


def test_gsd_pe_origin_position():
    for gsd in (1.0, 17.0, 300.0):
        v = gsd_pe_2d(3, 3, gsd, 16)[0, 0]
        np.testing.assert_array_equal(v[0::2], 0.0)
        np.testing.assert_array_equal(v[1::2], 1.0)


def test_gsd_pe_scaled_argument():
    # column 1, lowest frequency pair: argument is gsd_target * 1 / base^0
    pe = gsd_pe_2d(2, 2, 300.0, 16)
    assert pe[0, 1, 0] == pytest.approx(math.sin(300.0), abs=1e-12)


def test_gsd_pe_argument_proportionality():
    a1 = gsd_pe_arguments(6, 5.0, 32)
    a2 = gsd_pe_arguments(6, 15.0, 32)
    np.testing.assert_allclose(a2, 3.0 * a1, rtol=1e-12)


def test_gsd_pe_requires_divisible_by_four():
    with pytest.raises(ValueError):
        gsd_pe_2d(2, 2, 1.0, 30)


def test_sincos_bounded_everywhere():
    pe = gsd_pe_2d(4, 4, 123.4, 32)
    assert np.all(np.abs(pe) <= 1.0)


# ---------------------------------------------------------------- descriptors


def test_encoding_config_invariants():
    from ramen.encodings import EncodingConfig

    cfg = EncodingConfig()
    assert cfg.d == 768 and cfg.base == 10000.0 and cfg.g_ref == 1.0
    with pytest.raises(ValueError):
        EncodingConfig(d=7)
    with pytest.raises(ValueError):
        EncodingConfig(g_ref=0.0)


def test_channel_descriptor_validation():
    ChannelDescriptor("optical", wavelength_nm=490.0)
    ChannelDescriptor("radar", category_id="VV-desc")
    with pytest.raises(ValueError):
        ChannelDescriptor("optical", category_id="DSM")
    with pytest.raises(ValueError):
        ChannelDescriptor("radar", wavelength_nm=500.0)
    with pytest.raises(ValueError):
        ChannelDescriptor("optical", wavelength_nm=-1.0)
    with pytest.raises(KeyError):
        ChannelDescriptor("elevation", category_id="not-a-thing")
