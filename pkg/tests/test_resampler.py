"""Adjustable resampler: target geometry, gating, expert mixture, inverse path."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ramen.numerics import Tensor, finite_diff_check
from ramen.resampler import MixtureGate, ResampleSpec, SpatialResampler, log_ratio, target_dims
from tests.test_numerics import bilinear_reference


# ---------------------------------------------------------------- geometry


def test_target_dims_identity():
    assert target_dims(64, 64, 10.0, 10.0) == (64, 64)


def test_target_dims_hls_downsample():
    # 512 px at 30 m -> 300 m target: 51.2 rounds to 51
    assert target_dims(512, 512, 30.0, 300.0) == (51, 51)


def test_target_dims_exact_ratio():
    assert target_dims(240, 240, 10.0, 160.0) == (15, 15)


def test_target_dims_floor_one():
    assert target_dims(4, 4, 1.0, 1000.0) == (1, 1)


def test_target_dims_rejects_bad_gsd():
    with pytest.raises(ValueError):
        target_dims(4, 4, 0.0, 10.0)
    with pytest.raises(ValueError):
        target_dims(4, 4, 10.0, -1.0)


def test_spec_sigma_and_dims():
    spec = ResampleSpec.from_dims(512, 512, 30.0, 300.0)
    assert spec.sigma == pytest.approx(math.log(0.1), abs=1e-15)
    assert (spec.h_out, spec.w_out) == (51, 51)
    assert spec.h_out == max(1, int(math.floor(math.exp(spec.sigma) * spec.h_in + 0.5)))


@settings(deadline=None, max_examples=60)
@given(st.floats(min_value=0.01, max_value=500.0), st.floats(min_value=0.01, max_value=500.0))
def test_sigma_antisymmetry(a, b):
    assert log_ratio(a, b) == -log_ratio(b, a)


# ---------------------------------------------------------------- gate


def test_gate_zero_init_uniform(rng):
    gate = MixtureGate(32, 4, rng, dtype=np.float64)
    for sigma in (-3.0, 0.0, 0.7, 2.3):
        np.testing.assert_array_equal(gate.weights(sigma).data, np.full(4, 0.25))


@settings(deadline=None, max_examples=40)
@given(st.floats(min_value=-8.0, max_value=8.0))
def test_gate_simplex(sigma):
    rng = np.random.default_rng(7)
    gate = MixtureGate(16, 4, rng, dtype=np.float64)
    gate.fc2.weight.data = rng.standard_normal(gate.fc2.weight.shape)
    gate.fc2.bias.data = rng.standard_normal(gate.fc2.bias.shape)
    w = gate.weights(sigma).data
    assert abs(w.sum() - 1.0) < 1e-6
    assert np.all(w >= 0)


# ---------------------------------------------------------------- resample


@pytest.fixture
def fresh(rng):
    return SpatialResampler(6, 4, rng, dtype=np.float64)


def resample_reference(x: np.ndarray, experts: np.ndarray, weights: np.ndarray,
                       h_out: int, w_out: int) -> np.ndarray:
    """Expert-by-expert loop over a per-pixel bilinear + channel-mix reference."""
    t, d, _, _ = x.shape
    z = np.zeros((t, d, h_out, w_out))
    for ti in range(t):
        for di in range(d):
            z[ti, di] = bilinear_reference(x[ti, di], h_out, w_out)
    out = z.copy()
    for n in range(experts.shape[0]):
        for ti in range(t):
            for hi in range(h_out):
                for wi in range(w_out):
                    out[ti, :, hi, wi] += weights[n] * (z[ti, :, hi, wi] @ experts[n])
    return out


def test_resample_identity_at_sigma_zero(fresh, rng):
    x = rng.standard_normal((2, 6, 5, 5))
    spec = ResampleSpec.from_dims(5, 5, 10.0, 10.0)
    out = fresh.resample(Tensor(x), spec)
    np.testing.assert_array_equal(out.data, x)


def test_resample_zeros(fresh):
    spec = ResampleSpec.from_dims(4, 4, 10.0, 25.0)
    out = fresh.resample(Tensor(np.zeros((1, 6, 4, 4))), spec)
    np.testing.assert_array_equal(out.data, 0.0)


@pytest.mark.parametrize("seed", range(3))
def test_resample_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    res = SpatialResampler(6, 4, rng, dtype=np.float64)
    res.randomize_experts(rng, 0.3)
    res.gate.fc2.weight.data = rng.standard_normal(res.gate.fc2.weight.shape)
    spec = ResampleSpec.from_dims(4, 5, 10.0, 6.0)
    x = rng.standard_normal((2, 6, 4, 5))
    out = res.resample(Tensor(x), spec).data
    w = res.gate.weights(spec.sigma).data
    ref = resample_reference(x, res.experts.data, w, spec.h_out, spec.w_out)
    np.testing.assert_allclose(out, ref, atol=1e-10)


def test_resample_is_linear_in_input(rng):
    res = SpatialResampler(4, 4, rng, dtype=np.float64)
    res.randomize_experts(rng, 0.2)
    spec = ResampleSpec.from_dims(3, 3, 10.0, 4.0)
    x = rng.standard_normal((1, 4, 3, 3))
    y = rng.standard_normal((1, 4, 3, 3))
    lhs = res.resample(Tensor(2.0 * x - 3.0 * y), spec).data
    rhs = 2.0 * res.resample(Tensor(x), spec).data - 3.0 * res.resample(Tensor(y), spec).data
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_resample_shape_mismatch(fresh):
    spec = ResampleSpec.from_dims(4, 4, 10.0, 20.0)
    with pytest.raises(Exception, match="grid"):
        fresh.resample(Tensor(np.zeros((1, 6, 5, 5))), spec)


# ---------------------------------------------------------------- inverse path


def test_inverse_identity_at_sigma_zero(fresh, rng):
    x = rng.standard_normal((1, 6, 4, 4))
    spec = ResampleSpec.from_dims(4, 4, 7.0, 7.0)
    out = fresh.resample_inverse(Tensor(x), spec)
    np.testing.assert_array_equal(out.data, x)


def test_inverse_restores_native_dims(fresh, rng):
    spec = ResampleSpec.from_dims(512, 512, 30.0, 300.0)
    y = rng.standard_normal((1, 6, spec.h_out, spec.w_out))
    out = fresh.resample_inverse(Tensor(y), spec)
    assert out.shape == (1, 6, 512, 512)


def test_constant_round_trip_at_init(fresh):
    for gsd_target in (2.0, 10.0, 37.0, 300.0):
        spec = ResampleSpec.from_dims(6, 6, 10.0, gsd_target)
        x = Tensor(np.full((1, 6, 6, 6), 3.25))
        down = fresh.resample(x, spec)
        up = fresh.resample_inverse(down, spec)
        assert np.max(np.abs(up.data - 3.25)) < 1e-6


def test_gradient_through_gate_and_resample(rng):
    res = SpatialResampler(4, 4, rng, dtype=np.float64)
    res.randomize_experts(rng, 0.2)
    res.gate.fc2.weight.data = 0.1 * rng.standard_normal(res.gate.fc2.weight.shape)
    spec = ResampleSpec.from_dims(3, 4, 10.0, 7.0)
    err = finite_diff_check(lambda t: (res.resample(t, spec) ** 2).sum(),
                            rng.standard_normal((1, 4, 3, 4)))
    assert err < 1e-4


def test_simplex_over_many_draws(rng):
    gate = MixtureGate(16, 4, rng, dtype=np.float64)
    gate.fc2.weight.data = rng.standard_normal(gate.fc2.weight.shape)
    sigmas = rng.uniform(-6, 6, 200)
    for s in sigmas:
        w = gate.weights(float(s)).data
        assert abs(w.sum() - 1.0) < 1e-6
        assert np.all(w >= 0)
