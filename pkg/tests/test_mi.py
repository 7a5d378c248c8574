import math

import numpy as np
import pytest

from wiretap_jscc.channel import ChannelSpec
from wiretap_jscc.mi import (
    EnumerationLimitError,
    MiReport,
    binary_entropy,
    decoder_ce_bound,
    entropy_bits,
    eve_ce_bound,
    exact_mi,
    exact_posterior,
    mi_bits,
    one_hot,
    tabular_posterior_bound,
)
from wiretap_jscc.models import DecoderModel, EveClassifier, ModelDims, build_system
from wiretap_jscc.source import DiscreteSystem, make_discrete_system


def identity_bit_system():
    return make_discrete_system("correlated-bits", m=1, n_bits=1)


def random_setup(seed):
    rng = np.random.default_rng(seed)
    nt = int(rng.integers(2, 5))
    ns = int(rng.integers(2, 9))
    n_bits = int(rng.integers(1, 4))
    sys_ = make_discrete_system("random", seed=seed, nt=nt, ns=ns, n_bits=n_bits)
    spec = ChannelSpec.single(n_bits, float(rng.uniform(0.0, 0.5)), float(rng.uniform(0.0, 0.5)))
    return rng, sys_, spec


def dirichlet_rows(rng, rows, cols):
    q = rng.gamma(1.0, size=(rows, cols))
    return q / q.sum(axis=1, keepdims=True)


def test_identity_encoder_bsc_matches_closed_form():
    sys1 = identity_bit_system()
    spec = ChannelSpec.single(1, 0.1, 0.3)
    got = exact_mi(sys1, spec, "S;Y_B").value
    assert abs(got - (1.0 - binary_entropy(0.1))) < 1e-9


def test_epsilon_half_gives_zero_everywhere():
    sys1 = identity_bit_system()
    spec = ChannelSpec.single(1, 0.5, 0.5)
    for which in ("S;Y_B", "T;Y_E", "X;Y_E", "S;Y_E"):
        assert exact_mi(sys1, spec, which).value == pytest.approx(0.0, abs=1e-12)


def test_noiseless_identity_gives_source_entropy():
    sys2 = make_discrete_system("correlated-bits", m=2, n_bits=2)
    spec = ChannelSpec.single(2, 0.0, 0.0)
    assert exact_mi(sys2, spec, "S;Y_B").value == pytest.approx(
        entropy_bits(sys2.p_s), abs=1e-12
    )


def test_exact_mi_nonnegative_and_bounded_by_entropies():
    for seed in range(10):
        _, sys_, spec = random_setup(seed)
        r = exact_mi(sys_, spec, "T;Y_E")
        assert isinstance(r, MiReport)
        assert -1e-12 <= r.value <= entropy_bits(sys_.p_t) + 1e-12


def test_data_processing_chain():
    for seed in range(20):
        _, sys_, spec = random_setup(100 + seed)
        i_t = exact_mi(sys_, spec, "T;Y_E").value
        i_s = exact_mi(sys_, spec, "S;Y_E").value
        i_x = exact_mi(sys_, spec, "X;Y_E").value
        assert i_t <= i_s + 1e-9
        assert i_s <= i_x + 1e-9


def test_capacity_ceiling_single_band():
    for seed in range(10):
        _, sys_, spec = random_setup(200 + seed)
        i_x = exact_mi(sys_, spec, "X;Y_E").value
        cap = spec.n * (1.0 - binary_entropy(spec.bands[0].epsilon_e))
        assert i_x <= cap + 1e-9


def test_band_restricted_mi_sums_align():
    sys_ = make_discrete_system("correlated-bits", m=2, n_bits=2)
    spec = ChannelSpec.parse("1:0.0:0.3,1:0.0:0.0")
    full = exact_mi(sys_, spec, "T;Y_E").value
    b0 = exact_mi(sys_, spec, "T;Y_E", bands=(0,)).value
    b1 = exact_mi(sys_, spec, "T;Y_E", bands=(1,)).value
    assert b0 <= full + 1e-12 and b1 <= full + 1e-12
    # identity encoder routes T on band 0: the band alone carries 1 - h2(0.3)
    assert b0 == pytest.approx(1.0 - binary_entropy(0.3), abs=1e-9)
    assert b1 == pytest.approx(0.0, abs=1e-12)


def test_enumeration_limit_enforced():
    sys_ = make_discrete_system("correlated-bits", m=2, n_bits=2)
    with pytest.raises(ValueError):
        exact_mi(sys_, ChannelSpec.single(3, 0.1, 0.1), "S;Y_B")


def test_bound_validity_random_tables():
    worst = -np.inf
    for seed in range(25):
        rng, sys_, spec = random_setup(300 + seed)
        from wiretap_jscc.mi import _pair_joint

        j_sy = _pair_joint(sys_, spec, "S;Y_B")
        j_ty = _pair_joint(sys_, spec, "T;Y_E")
        i_sy = mi_bits(j_sy)
        i_ty = mi_bits(j_ty)
        for _ in range(4):
            q_dec = dirichlet_rows(rng, j_sy.shape[1], j_sy.shape[0])
            q_eve = dirichlet_rows(rng, j_ty.shape[1], j_ty.shape[0])
            slack_dec = i_sy - tabular_posterior_bound(j_sy, q_dec)
            slack_eve = i_ty - tabular_posterior_bound(j_ty, q_eve)
            assert slack_dec >= -1e-9
            assert slack_eve >= -1e-9
            worst = max(worst, -slack_dec, -slack_eve)
    assert worst <= 1e-9


def test_bound_equality_at_true_posterior():
    for seed in range(10):
        _, sys_, spec = random_setup(400 + seed)
        from wiretap_jscc.mi import _pair_joint

        for which in ("S;Y_B", "T;Y_E"):
            j = _pair_joint(sys_, spec, which)
            bound = tabular_posterior_bound(j, exact_posterior(j))
            assert bound == pytest.approx(mi_bits(j), abs=1e-9)


DIMS = ModelDims(image_size=4, n_bits=8, enc_hidden=(8,), dec_hidden=(8,), eve_hidden=(8,))


def test_decoder_bound_constant_half_decoder():
    rng = np.random.default_rng(0)
    dec = DecoderModel(DIMS, rng)  # zero-initialized head outputs 0.5
    images = (rng.random((6, 4, 4, 3)) > 0.5).astype(float)
    y = (rng.random((6, 8)) < 0.5).astype(float)
    report = decoder_ce_bound(dec, images, y)
    assert report.value == pytest.approx(-4 * 4 * 3, abs=1e-9)
    assert report.method == "decoder-bound"


def test_decoder_bound_perfect_decoder_is_maximal():
    # a decoder that outputs the binary targets exactly pays only the clamp
    from wiretap_jscc.mi import bernoulli_log_likelihood_bits

    rng = np.random.default_rng(1)
    images = (rng.random((5, 4, 4, 3)) > 0.5).astype(float)
    flat = images.reshape(5, -1)
    ll = bernoulli_log_likelihood_bits(flat, flat)
    per_pixel_clamp = math.log2(1.0 - 1e-7)
    assert np.all(ll <= 0.0)
    assert ll.mean() == pytest.approx(4 * 4 * 3 * per_pixel_clamp, abs=1e-9)
    assert ll.mean() > -1e-3


def test_eve_bound_uniform_classifier_is_zero():
    rng = np.random.default_rng(2)
    eve = EveClassifier(DIMS, rng)  # zero head -> uniform output
    labels = rng.integers(0, 9, 12)
    y = (rng.random((12, 8)) < 0.5).astype(float)
    report = eve_ce_bound(eve, labels, y, h_t_bits=math.log2(9))
    assert report.value == pytest.approx(0.0, abs=1e-9)


def test_eve_bound_requires_nonempty_batch():
    rng = np.random.default_rng(3)
    eve = EveClassifier(DIMS, rng)
    with pytest.raises(ValueError):
        eve_ce_bound(eve, np.array([], dtype=int), np.zeros((0, 8)), 1.0)


def test_one_hot():
    out = one_hot([0, 2], 3)
    np.testing.assert_array_equal(out, [[1, 0, 0], [0, 0, 1]])


def test_mine_divergence_reported_as_estimation_failure():
    from wiretap_jscc.mi import EstimationError, build_mine_net, mine_estimate

    rng = np.random.default_rng(5)
    t = one_hot(rng.integers(0, 3, 1200), 3)
    y = rng.random((1200, 2))
    net = build_mine_net(3, 2, hidden=(8,), seed=0)
    for _, e in net.store.items():
        e.value += 400.0  # saturate the statistics net so exp(f) overflows
    with pytest.raises(EstimationError):
        mine_estimate(t, y, epochs=2, batch_size=256, seed=1, net=net)


def test_mine_rejects_small_samples():
    from wiretap_jscc.mi import mine_estimate

    rng = np.random.default_rng(6)
    with pytest.raises(ValueError, match="1000"):
        mine_estimate(one_hot(rng.integers(0, 2, 500), 2), rng.random((500, 1)))


def test_mi_bits_of_independent_and_copy_tables():
    p = np.outer([0.3, 0.7], [0.25, 0.75])
    assert mi_bits(p) == pytest.approx(0.0, abs=1e-12)
    copy = np.diag([0.25, 0.25, 0.25, 0.25])
    assert mi_bits(copy) == pytest.approx(2.0, abs=1e-12)
