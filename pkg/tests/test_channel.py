import math

import numpy as np
import pytest

from wiretap_jscc.channel import (
    BandSpec,
    ChannelError,
    ChannelSpec,
    bsc_log_likelihood,
    bsc_sample,
    channel_matrix,
    relaxed_flip,
    wiretap_sample,
)


def test_bsc_sample_epsilon_zero_is_identity():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2, 500).astype(float)
    np.testing.assert_array_equal(bsc_sample(x, 0.0, rng), x)


def test_bsc_sample_epsilon_half_flips_half():
    rng = np.random.default_rng(1)
    x = np.zeros(100_000)
    y = bsc_sample(x, 0.5, rng)
    rate = y.mean()
    sigma = math.sqrt(0.25 / x.size)
    assert abs(rate - 0.5) < 3 * sigma


def test_bsc_sample_flip_fraction_binomial():
    rng = np.random.default_rng(2)
    x = rng.integers(0, 2, 200).astype(float)
    n_draws = 100_000
    flips = 0
    for _ in range(20):
        batch = np.tile(x, (n_draws // 20, 1))
        y = bsc_sample(batch, 0.1, rng)
        flips += int(np.sum(y != batch))
    total = n_draws * 200
    rate = flips / total
    assert abs(rate - 0.1) < 3 * math.sqrt(0.1 * 0.9 / total)


def test_bsc_sample_epsilon_out_of_range_rejected():
    rng = np.random.default_rng(3)
    with pytest.raises(ChannelError):
        bsc_sample(np.zeros(4), 0.6, rng)
    with pytest.raises(ChannelError):
        bsc_sample(np.zeros(4), -0.1, rng)


def test_log_likelihood_equal_words():
    x = np.array([0.0, 1.0])
    assert bsc_log_likelihood(x, x, 0.1) == pytest.approx(2 * math.log(0.9), abs=1e-15)


def test_log_likelihood_one_flip():
    x = np.array([0.0, 0.0])
    y = np.array([0.0, 1.0])
    assert bsc_log_likelihood(x, y, 0.1) == pytest.approx(math.log(0.9 * 0.1), abs=1e-15)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3, 0.5])
@pytest.mark.parametrize("n", [1, 4, 6])
def test_log_likelihood_normalizes(eps, n):
    rng = np.random.default_rng(4)
    x = rng.integers(0, 2, n).astype(float)
    total = 0.0
    for code in range(1 << n):
        y = np.array([(code >> (n - 1 - i)) & 1 for i in range(n)], dtype=float)
        total += math.exp(bsc_log_likelihood(x, y, eps))
    assert abs(total - 1.0) < 1e-12


def test_log_likelihood_errors():
    with pytest.raises(ChannelError, match="length"):
        bsc_log_likelihood(np.zeros(3), np.zeros(4), 0.1)
    with pytest.raises(ChannelError, match="epsilon 0"):
        bsc_log_likelihood(np.zeros(2), np.ones(2), 0.0)
    assert bsc_log_likelihood(np.ones(3), np.ones(3), 0.0) == 0.0


def test_wiretap_sample_four_band_and_noiseless_case():
    rng = np.random.default_rng(5)
    single = ChannelSpec.single(200, 0.1, 0.3)
    x = rng.integers(0, 2, 200).astype(float)
    y_b, y_e = wiretap_sample(x, single, rng)
    assert y_b.shape == y_e.shape == (200,)

    four = ChannelSpec(bands=(
        BandSpec(50, 0.1, 0.1), BandSpec(50, 0.001, 0.2),
        BandSpec(50, 0.2, 0.001), BandSpec(50, 0.001, 0.001),
    ))
    assert four.n == 200
    y_b, y_e = wiretap_sample(x, four, rng)
    assert y_b.shape == (200,)

    clean = ChannelSpec(bands=(BandSpec(3, 0.0, 0.0), BandSpec(2, 0.0, 0.0)))
    x5 = np.array([1.0, 0, 1, 1, 0])
    y_b, y_e = wiretap_sample(x5, clean, rng)
    np.testing.assert_array_equal(y_b, x5)
    np.testing.assert_array_equal(y_e, x5)


def test_wiretap_sample_length_mismatch():
    rng = np.random.default_rng(6)
    with pytest.raises(ChannelError, match="length"):
        wiretap_sample(np.zeros(7), ChannelSpec.single(8, 0.1, 0.1), rng)


def test_relaxed_flip_identities():
    p = np.array([0.0, 0.25, 0.5, 1.0])
    np.testing.assert_array_equal(relaxed_flip(p, 0.0), p)
    np.testing.assert_allclose(relaxed_flip(np.full(4, 0.5), 0.37), np.full(4, 0.5))
    assert relaxed_flip(np.array([1.0]), 0.2)[0] == pytest.approx(0.8)


def test_relaxed_flip_matches_empirical_marginal():
    rng = np.random.default_rng(7)
    p = rng.random(16)
    q = relaxed_flip(p, 0.23)
    n_draws = 100_000
    bits = (rng.random((n_draws, 16)) < p).astype(float)
    noisy = bsc_sample(bits, 0.23, rng)
    emp = noisy.mean(axis=0)
    sigma = np.sqrt(q * (1 - q) / n_draws)
    assert np.all(np.abs(emp - q) < 3 * sigma + 1e-9)


def test_cascade_of_two_bscs_matches_composed_crossover():
    rng = np.random.default_rng(8)
    e1, e2 = 0.1, 0.2
    e12 = e1 * (1 - e2) + (1 - e1) * e2
    n_draws, width = 100_000, 8
    x = np.zeros((n_draws, width))
    y = bsc_sample(bsc_sample(x, e1, rng), e2, rng)
    flips = int(y.sum())
    total = n_draws * width
    expected = total * e12
    chi2 = (flips - expected) ** 2 / expected + (
        (total - flips) - (total - expected)
    ) ** 2 / (total - expected)
    assert chi2 < 9.0


def test_band_flips_uncorrelated_across_bands():
    rng = np.random.default_rng(9)
    spec = ChannelSpec(bands=(BandSpec(4, 0.2, 0.1), BandSpec(4, 0.05, 0.3)))
    x = np.zeros((100_000, 8))
    y_b, _ = wiretap_sample(x, spec, rng)
    f1 = y_b[:, :4].sum(axis=1)
    f2 = y_b[:, 4:].sum(axis=1)
    corr = np.corrcoef(f1, f2)[0, 1]
    assert abs(corr) < 0.01


def test_channel_matrix_rows_normalize_and_special_cases():
    for eps in (0.0, 0.1, 0.5):
        k = channel_matrix(5, eps)
        np.testing.assert_allclose(k.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(channel_matrix(3, 0.0), np.eye(8))
    np.testing.assert_allclose(channel_matrix(2, 0.5), np.full((4, 4), 0.25), atol=1e-15)


def test_spec_parse_format_round_trip():
    spec = ChannelSpec.parse("50:0.1:0.1, 50:0.001:0.2,50:0.2:0.001,50:0.001:0.001")
    assert spec.n == 200
    assert len(spec.bands) == 4
    assert ChannelSpec.parse(spec.format()) == spec
    np.testing.assert_array_equal(spec.eps_vector("bob")[:50], np.full(50, 0.1))
    np.testing.assert_array_equal(spec.eps_vector("eve")[50:100], np.full(50, 0.2))


def test_spec_validation():
    with pytest.raises(ChannelError):
        BandSpec(0, 0.1, 0.1)
    with pytest.raises(ChannelError):
        BandSpec(4, 0.7, 0.1)
    with pytest.raises(ChannelError):
        ChannelSpec.parse("")
    with pytest.raises(ChannelError):
        ChannelSpec.parse("10:0.1")


def test_codeword_entries_validated():
    rng = np.random.default_rng(10)
    with pytest.raises(ChannelError, match="0 or 1"):
        bsc_sample(np.array([0.0, 0.5]), 0.1, rng)
