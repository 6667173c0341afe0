import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from civc import BitstreamError, GaussianModel, decode_latents, encode_latents, ideal_rate, skip_mask
from civc.entropy import apply_skip, bin_mass, mode_and_mass


def trapezoid_mass(mu, sigma, lo, hi, n=1_000_001):
    """Gaussian mass on [lo, hi] by the trapezoid rule on the pdf."""
    x = np.linspace(lo, hi, n)
    pdf = np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    return float(trapezoid(pdf, x))


@pytest.mark.parametrize("sigma, expected", [(0.5, 0.682689), (1 / (2 * math.sqrt(2)), 0.842701)])
def test_qmax_against_integration(sigma, expected):
    mode, q = mode_and_mass(0.0, sigma)
    assert mode == 0.0
    oracle = trapezoid_mass(0.0, sigma, -0.5, 0.5)
    assert abs(q - oracle) < 1e-9
    assert abs(q - expected) < 1e-6


def test_qmax_translation_invariant():
    assert mode_and_mass(7.3, 0.8)[1] == mode_and_mass(0.0, 0.8)[1]
    assert mode_and_mass(7.3, 0.8)[0] == 7.3


def test_apply_skip_branches():
    model = GaussianModel(np.array([1.7, 0.0], np.float32), np.array([0.05, 0.5], np.float32))
    latents, mask = apply_skip(np.array([2.2, -2.6]), model, 0.16)
    assert mask.tolist() == [True, False]
    assert latents[0] == np.float32(1.7) and latents[1] == -3.0


def test_all_skipped_is_mu_grid_and_empty_payload(rng):
    mu = rng.normal(0, 3, (5, 7)).astype(np.float32)
    model = GaussianModel(mu, np.full((5, 7), 0.1, np.float32))
    latents, mask = apply_skip(rng.normal(0, 9, (5, 7)), model, 0.16)
    assert mask.all() and np.array_equal(latents, mu)
    payload = encode_latents(latents, model, mask)
    assert payload == b""
    assert ideal_rate(latents, model, mask) == 0.0
    assert np.array_equal(decode_latents(payload, model, 0.16), mu)


def test_single_element_cost():
    oracle_p = trapezoid_mass(0.0, 1.0, -0.5, 0.5)
    assert oracle_p == pytest.approx(0.382925, abs=1e-6)
    ideal = -math.log2(oracle_p)
    assert ideal == pytest.approx(1.385, abs=1e-3)
    model = GaussianModel(np.zeros(1, np.float32), np.ones(1, np.float32))
    mask = np.zeros(1, bool)
    assert ideal_rate(np.zeros(1), model, mask) == pytest.approx(ideal, abs=1e-9)
    payload = encode_latents(np.zeros(1, np.float32), model, mask)
    assert len(payload) <= math.ceil(ideal / 8) + 4
    assert decode_latents(payload, model, 0.16).tolist() == [0.0]


def test_bin_mass_sums_to_one_over_support():
    mu, sigma = 0.3, 40.0
    v = np.arange(-255, 256)
    assert bin_mass(v, np.full(v.shape, mu), np.full(v.shape, sigma)).sum() == pytest.approx(1.0, abs=1e-12)


def _fuzz(rng, n, tau=0.16):
    mu = rng.normal(0, 20, n).astype(np.float32)
    sigma = np.exp(rng.uniform(np.log(0.01), np.log(64), n)).astype(np.float32)
    model = GaussianModel(mu, sigma)
    values = mu + rng.normal(0, 1, n) * sigma * rng.choice([1, 1, 1, 30], n)
    return (*apply_skip(values, model, tau), model)


def test_round_trip_1e5(rng):
    latents, mask, model = _fuzz(rng, 100_000)
    payload = encode_latents(latents, model, mask)
    out, dmask = decode_latents(payload, model, 0.16, latents.shape, return_mask=True)
    assert np.array_equal(out, latents)
    assert np.array_equal(dmask, mask)


@settings(max_examples=80, deadline=None)
@given(n=st.integers(1, 300), seed=st.integers(0, 2**32 - 1),
       tau=st.sampled_from([0.0, 0.16, 0.5, 3.0]))
def test_round_trip_property(n, seed, tau):
    latents, mask, model = _fuzz(np.random.default_rng(seed), n, tau)
    payload = encode_latents(latents, model, mask)
    assert np.array_equal(decode_latents(payload, model, tau), latents)
    # skip never costs bits
    off_latents, off_mask = apply_skip(latents, model, 0.0)
    assert len(payload) <= len(encode_latents(off_latents, model, off_mask))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 64), min_size=1, max_size=50),
       st.floats(0, 1, width=32))
def test_mask_is_pure_function_of_sigma(sigmas, tau):
    s = np.array(sigmas, np.float32)
    model = GaussianModel(np.zeros_like(s), s)
    _, enc_mask = apply_skip(np.zeros_like(s), model, tau)
    _, dec_mask = decode_latents(encode_latents(np.zeros_like(s), model, enc_mask), model, tau,
                                 return_mask=True)
    assert np.array_equal(enc_mask, dec_mask)
    assert np.array_equal(enc_mask, s < np.float32(tau))


def test_saturation_keeps_parity():
    model = GaussianModel(np.array([0.0, 10.4], np.float32), np.array([1.0, 0.5], np.float32))
    latents, mask = apply_skip(np.array([1e6, -1e6]), model, 0.16)
    assert latents.tolist() == [255.0, 10 - 255.0]
    assert np.array_equal(decode_latents(encode_latents(latents, model, mask), model, 0.16), latents)


@pytest.mark.parametrize("lo, hi", [(0.16, 0.5), (0.5, 4.0), (4.0, 64.0)])
def test_efficiency_regimes(lo, hi):
    r = np.random.default_rng(7)
    n = 200_000
    sigma = r.uniform(lo, hi, n).astype(np.float32)
    mu = r.normal(0, 5, n).astype(np.float32)
    model = GaussianModel(mu, sigma)
    latents, mask = apply_skip(mu + r.normal(0, 1, n) * sigma, model, 0.0)
    bits = 8 * len(encode_latents(latents, model, mask))
    ideal = ideal_rate(latents, model, mask)
    assert bits <= 1.02 * ideal + 64


def test_errors():
    model = GaussianModel(np.zeros(3, np.float32), np.ones(3, np.float32))
    mask = np.zeros(3, bool)
    with pytest.raises(ValueError):
        encode_latents(np.array([0.5, 0, 0], np.float32), model, mask)
    with pytest.raises(ValueError):
        encode_latents(np.zeros(4, np.float32), model, mask)
    with pytest.raises(BitstreamError):
        decode_latents(b"", model, 0.16)
    skipped = GaussianModel(np.zeros(3, np.float32), np.full(3, 0.1, np.float32))
    with pytest.raises(BitstreamError):
        decode_latents(b"\x00" * 4, skipped, 0.16)
    with pytest.raises(ValueError):
        GaussianModel(np.zeros(2), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        GaussianModel(np.zeros(2), np.ones(3))


def test_skip_mask_float32_boundary():
    tau = 0.16
    s = np.array([np.float32(0.16), np.nextafter(np.float32(0.16), np.float32(0))], np.float32)
    assert skip_mask(s, tau).tolist() == [False, True]
