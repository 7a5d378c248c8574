"""Mutual-information machinery.

Exact enumeration on small discrete systems, the two variational
cross-entropy lower bounds (decoder side and classifier side), and a
Donsker-Varadhan neural estimator for test-time leakage. All values
are reported in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import LayerSpec, Network, ParamStore, adam_step
from .channel import ChannelSpec, channel_matrix
from .source import DiscreteSystem

LN2 = math.log(2.0)
PROB_CLAMP = 1e-7

ENUMERATION_LIMIT = 1 << 20

WHICH_PAIRS = ("S;Y_B", "T;Y_E", "X;Y_E", "S;Y_E", "T;Y_B")


class EnumerationLimitError(ValueError):
    """Outcome space too large for exact enumeration."""


class EstimationError(RuntimeError):
    """Neural estimation diverged."""


@dataclass(frozen=True)
class MiReport:
    value: float
    method: str
    sample_count: int
    auxiliary: dict | None = None


def entropy_bits(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    mask = p > 0
    return float(-(p[mask] * np.log2(p[mask])).sum())


def binary_entropy(eps: float) -> float:
    """h2(eps) in bits; 1 - h2(eps) is the BSC capacity per bit."""
    if eps <= 0.0 or eps >= 1.0:
        return 0.0
    return -eps * math.log2(eps) - (1.0 - eps) * math.log2(1.0 - eps)


def mi_bits(joint: np.ndarray) -> float:
    """Mutual information of a 2-D joint table, in bits."""
    j = np.asarray(joint, dtype=np.float64)
    if np.any(j < -1e-15):
        raise ValueError("joint table has negative entries")
    pa = j.sum(axis=1, keepdims=True)
    pb = j.sum(axis=0, keepdims=True)
    mask = j > 0
    ratio = np.ones_like(j)
    np.divide(j, pa * pb, out=ratio, where=mask)
    return float((j[mask] * np.log2(ratio[mask])).sum())


def _band_projection(spec: ChannelSpec, side: str, bands=None):
    """Transition matrix from full codewords to the selected bands' outputs.

    Returns C of shape (2**n, 2**w_sel) with C[x, y] = P(selected-band
    output = y | codeword = x), plus the selected-output width.
    """
    n = spec.n
    if bands is None:
        bands = tuple(range(len(spec.bands)))
    bands = tuple(bands)
    if not bands or any(not 0 <= b < len(spec.bands) for b in bands):
        raise ValueError(f"invalid band selection {bands}")
    slices = spec.slices()
    kernel = None
    for b in bands:
        band = spec.bands[b]
        eps = band.epsilon_b if side == "bob" else band.epsilon_e
        k = channel_matrix(band.width, eps)
        kernel = k if kernel is None else np.kron(kernel, k)
    w_sel = sum(spec.bands[b].width for b in bands)
    # map each full codeword to the integer formed by its selected bits
    x_idx = np.arange(1 << n, dtype=np.int64)
    sub = np.zeros(1 << n, dtype=np.int64)
    for b in bands:
        sl = slices[b]
        width = sl.stop - sl.start
        chunk = (x_idx >> (n - sl.stop)) & ((1 << width) - 1)
        sub = (sub << width) | chunk
    return kernel[sub, :], w_sel


def _pair_joint(sys: DiscreteSystem, spec: ChannelSpec, which: str, bands=None) -> np.ndarray:
    if which not in WHICH_PAIRS:
        raise ValueError(f"which must be one of {WHICH_PAIRS}, got {which!r}")
    if spec.n != sys.n_bits:
        raise ValueError(f"channel n={spec.n} does not match system n_bits={sys.n_bits}")
    if sys.n_s * (1 << sys.n_bits) > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"|S| * 2^n = {sys.n_s * (1 << sys.n_bits)} exceeds {ENUMERATION_LIMIT}"
        )
    side = "bob" if which.endswith("Y_B") else "eve"
    c = _band_projection(spec, side, bands)[0]
    left = which.split(";")[0]
    if left == "S":
        return sys.p_s[:, None] * (sys.encoder @ c)
    if left == "T":
        return sys.joint @ (sys.encoder @ c)
    p_x = sys.p_s @ sys.encoder
    return p_x[:, None] * c


def exact_mi(sys: DiscreteSystem, spec: ChannelSpec, which: str = "S;Y_B", bands=None) -> MiReport:
    """Exact MI by full enumeration of the joint factorization."""
    joint = _pair_joint(sys, spec, which, bands)
    return MiReport(
        value=mi_bits(joint), method="exact", sample_count=int(joint.size),
        auxiliary={"which": which} if bands is None else {"which": which, "bands": tuple(bands)},
    )


def exact_posterior(joint_ab: np.ndarray) -> np.ndarray:
    """Rows P(a | b) indexed by b; uniform where P(b) = 0."""
    j = np.asarray(joint_ab, dtype=np.float64)
    pb = j.sum(axis=0)
    post = np.full((j.shape[1], j.shape[0]), 1.0 / j.shape[0])
    nz = pb > 0
    post[nz, :] = (j[:, nz] / pb[nz]).T
    return post


def tabular_posterior_bound(joint_ab: np.ndarray, q: np.ndarray) -> float:
    """H(A) + E[log2 q(a|b)] for a variational table q; lower-bounds I(A;B).

    ``q`` has shape (|B|, |A|) with rows summing to 1. Equality holds
    exactly when q is the true posterior.
    """
    j = np.asarray(joint_ab, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (j.shape[1], j.shape[0]):
        raise ValueError(f"q must have shape {(j.shape[1], j.shape[0])}, got {q.shape}")
    h_a = entropy_bits(j.sum(axis=1))
    mask = j > 0
    qt = q.T
    if np.any(qt[mask] <= 0):
        return float("-inf")
    return h_a + float((j[mask] * np.log2(qt[mask])).sum())


def bernoulli_log_likelihood_bits(targets: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Per-sample sum of factorized Bernoulli log2-likelihoods, clamped."""
    f = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    ll = targets * np.log2(f) + (1.0 - targets) * np.log2(1.0 - f)
    return ll.reshape(ll.shape[0], -1).sum(axis=1)


def decoder_ce_bound(dec, images, y) -> MiReport:
    """Mean log2 f_dec(s | y_b) under a per-pixel Bernoulli likelihood.

    The returned value plus H(S) lower-bounds I(S; Y_B).
    """
    from .models import decode, flatten_images

    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    if images.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    targets = flatten_images(images, dec.dims)
    recon = decode(dec, y)
    probs = recon.reshape(targets.shape[0], -1)
    ll = bernoulli_log_likelihood_bits(targets, probs)
    return MiReport(
        value=float(ll.mean()), method="decoder-bound", sample_count=targets.shape[0],
    )


def eve_ce_bound(eve, t_labels, y, h_t_bits: float) -> MiReport:
    """H(T) + mean log2 f_eve(t | y_e); a lower bound on I(T; Y_E)."""
    from .models import eve_classify

    t_labels = np.asarray(t_labels, dtype=np.int64)
    if t_labels.size == 0:
        raise ValueError("batch must be nonempty")
    probs = eve_classify(eve, y)
    pt = np.clip(probs[np.arange(t_labels.size), t_labels], PROB_CLAMP, 1.0)
    value = h_t_bits + float(np.log2(pt).mean())
    return MiReport(value=value, method="eve-bound", sample_count=int(t_labels.size))


def build_mine_net(t_dim: int, y_dim: int, hidden=(128, 128), seed: int = 0) -> Network:
    """Statistics network f(t, y) -> scalar for the Donsker-Varadhan objective."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 0x6D696E65)))
    store = ParamStore()
    layers = [LayerSpec(h, "relu") for h in hidden] + [LayerSpec(1, "identity")]
    return Network("mine", t_dim + y_dim, layers, store, rng, zero_last=True)


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _dv_value_bits(net: Network, t, y, idx, rng) -> float:
    """Donsker-Varadhan objective on one batch of held-out pairs, in bits."""
    tb, yb = t[idx], y[idx]
    tm = tb[rng.permutation(idx.size)]
    f_joint = net.forward(np.concatenate([tb, yb], axis=1))[:, 0]
    f_marg = net.forward(np.concatenate([tm, yb], axis=1))[:, 0]
    with np.errstate(over="ignore"):
        mean_exp = float(np.exp(f_marg).mean())
    if not math.isfinite(mean_exp) or mean_exp <= 0.0:
        raise EstimationError("MINE objective diverged (non-finite partition)")
    dv_nats = float(f_joint.mean()) - math.log(mean_exp)
    if not math.isfinite(dv_nats):
        raise EstimationError("MINE objective diverged (non-finite value)")
    return dv_nats / LN2


def mine_estimate(t_features, y_features, *, epochs: int = 200, batch_size: int = 256,
                  lr: float = 1e-3, ema_decay: float = 0.99, smooth_steps: int = 50,
                  hidden=(128, 128), seed: int = 0, net: Network | None = None,
                  groups=None) -> MiReport:
    """Donsker-Varadhan MI estimate in bits from paired samples.

    Marginal pairs are formed by in-batch shuffling of the t features;
    the log-partition gradient uses an exponential-moving-average
    correction. The statistics network trains on half the samples and
    the per-step objective is scored on batches from the held-out half,
    so a network that merely memorizes its training pairs scores
    nothing. When several samples derive from one underlying draw
    (e.g. repeated channel noise on one source), pass their ids as
    ``groups``; the fit/score split then separates whole groups. The
    returned value is the mean of the last ``smooth_steps`` held-out
    objectives, floored at 0.

    Raises
    ------
    EstimationError
        If the objective becomes non-finite (divergence).
    """
    t = np.asarray(t_features, dtype=np.float64)
    y = np.asarray(y_features, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    if y.ndim == 1:
        y = y[:, None]
    n = t.shape[0]
    if n < 1000:
        raise ValueError(f"MINE needs at least 1000 samples, got {n}")
    if y.shape[0] != n:
        raise ValueError("t and y sample counts differ")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 0x64762D6D)))
    if net is None:
        net = build_mine_net(t.shape[1], y.shape[1], hidden=hidden, seed=seed)

    if groups is None:
        split = rng.permutation(n)
        fit_idx, score_idx = split[: n // 2], split[n // 2 :]
    else:
        groups = np.asarray(groups)
        if groups.shape[0] != n:
            raise ValueError("groups must have one id per sample")
        uniq = np.unique(groups)
        chosen = rng.permutation(uniq.size)
        fit_groups = set(uniq[chosen[: uniq.size // 2]].tolist())
        in_fit = np.array([g in fit_groups for g in groups.tolist()])
        fit_idx = np.flatnonzero(in_fit)
        score_idx = np.flatnonzero(~in_fit)
    if fit_idx.size == 0 or score_idx.size == 0:
        raise ValueError("fit/score split left one side empty")
    batch = min(batch_size, fit_idx.size, score_idx.size)

    ema = None
    values: list[float] = []
    for _ in range(epochs):
        order = fit_idx[rng.permutation(fit_idx.size)]
        for start in range(0, order.size - batch + 1, batch):
            idx = order[start : start + batch]
            tb, yb = t[idx], y[idx]
            tm = tb[rng.permutation(idx.size)]
            b = idx.size

            net.forward(np.concatenate([tb, yb], axis=1), record=True)
            net.backward(np.full((b, 1), -1.0 / b))

            f_marg = net.forward(np.concatenate([tm, yb], axis=1), record=True)[:, 0]
            with np.errstate(over="ignore"):
                exp_marg = np.exp(f_marg)
                mean_exp = float(exp_marg.mean())
            if not math.isfinite(mean_exp):
                raise EstimationError("MINE objective diverged (non-finite partition)")
            ema = mean_exp if ema is None else ema_decay * ema + (1.0 - ema_decay) * mean_exp
            net.backward((exp_marg / (b * ema))[:, None])
            adam_step(net.store, lr=lr)

            probe = score_idx[rng.integers(0, score_idx.size, size=batch)]
            values.append(_dv_value_bits(net, t, y, probe, rng))
    if not values:
        raise ValueError("no optimization steps ran; increase epochs or samples")
    raw = float(np.mean(values[-smooth_steps:]))
    return MiReport(
        value=max(0.0, raw), method="mine", sample_count=n,
        auxiliary={"raw": raw, "steps": len(values)},
    )
