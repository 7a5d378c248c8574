"""Adversarial optimization of the privacy-utility objective.

Minimizes distortion minus the decoder-side MI bound plus lambda times
the classifier-side leakage bound over the encoder/decoder, alternating
with maximization steps for the eavesdropper classifier. Also provides
the hard-sampling evaluation path, adversary retraining, and the
illustrative eavesdropper decoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import LayerSpec, Network, NumericError, ParamStore, adam_step
from .channel import ChannelSpec, relaxed_flip, wiretap_sample
from .mi import LN2, PROB_CLAMP, bernoulli_log_likelihood_bits
from .models import (
    DecoderModel,
    EveClassifier,
    JsccSystem,
    ModelDims,
    N_CLASSES,
    build_system,
    decode,
    encode,
    eve_classify,
    flatten_images,
    sample_bits_st,
    st_grad,
)

H_T_BITS = math.log2(N_CLASSES)


@dataclass(frozen=True)
class TrainConfig:
    channel: ChannelSpec
    lam: float = 0.0
    epochs: int = 200
    batch_size: int = 128
    eve_steps: int = 5
    seed: int = 0
    lr: float = 1e-3
    eve_lr: float = 1e-3
    image_size: int = 16
    enc_hidden: tuple[int, ...] = (256,)
    dec_hidden: tuple[int, ...] = (256,)
    eve_hidden: tuple[int, ...] = (128,)
    bob_mi_weight: float = 1.0
    # weight of the leakage bound relative to the per-pixel utility terms
    privacy_weight: float = 1.0 / 32.0
    # epochs over which the lambda term ramps linearly from 0 to full
    lam_warmup_epochs: int = 0
    # channel draws averaged in the leakage term (variance reduction)
    eve_draws: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if self.eve_steps < 1:
            raise ValueError(f"eve_steps must be at least 1, got {self.eve_steps}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")

    @property
    def dims(self) -> ModelDims:
        return ModelDims(
            image_size=self.image_size,
            n_bits=self.channel.n,
            enc_hidden=tuple(self.enc_hidden),
            dec_hidden=tuple(self.dec_hidden),
            eve_hidden=tuple(self.eve_hidden),
        )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    distortion: float
    bob_bound: float
    eve_bound: float
    total_loss: float
    eve_accuracy: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    CSV_HEADER = "epoch,distortion,bob_bound_bits,eve_bound_bits,total_loss,eve_accuracy"

    def rows(self) -> list[str]:
        return [
            f"{r.epoch},{r.distortion!r},{r.bob_bound!r},{r.eve_bound!r},"
            f"{r.total_loss!r},{r.eve_accuracy!r}"
            for r in self.records
        ]


@dataclass(frozen=True)
class LossTerms:
    """Scalar pieces of the objective for one batch.

    ``distortion`` and ``bob_bound`` are per-image (summed over pixels);
    the optimized ``total`` uses their per-pixel means plus the leakage
    bound weighted by ``privacy_weight``. ``eve_term`` is the leakage
    bound exactly as it enters ``total``.
    """

    distortion: float
    bob_bound: float
    eve_bound: float
    eve_term: float
    total: float
    eve_accuracy: float


def _require_finite(value: float, term: str) -> None:
    if not math.isfinite(value):
        raise NumericError(f"non-finite value in loss term '{term}'")


def total_loss(system: JsccSystem, images, labels, cfg: TrainConfig, rng,
               accumulate: bool = True, sample: bool = True,
               lam: float | None = None) -> LossTerms:
    """Objective for one batch; gradients land in encoder+decoder stores only.

    ``sample=False`` replaces the straight-through channel samples by
    their expected marginals, making the loss a deterministic, smooth
    function of the parameters (used by gradient checking).
    """
    labels = np.asarray(labels, dtype=np.int64)
    lam = cfg.lam if lam is None else float(lam)
    targets = flatten_images(images, system.dims)
    b, pix = targets.shape
    eps_b = cfg.channel.eps_vector("bob")
    eps_e = cfg.channel.eps_vector("eve")

    p = encode(system.enc, targets, record=accumulate)
    q_b = relaxed_flip(p, eps_b)
    q_e = relaxed_flip(p, eps_e)
    draws = max(1, cfg.eve_draws) if sample else 1
    if sample:
        y_b = sample_bits_st(q_b, rng)
        y_es = [sample_bits_st(q_e, rng) for _ in range(draws)]
    else:
        y_b, y_es = q_b, [q_e]

    recon = system.dec.net.forward(y_b, record=accumulate)
    want_eve_grad = accumulate and lam != 0.0

    diff = recon - targets
    distortion_pp = float(np.mean(diff * diff))
    bob_pp = float(np.mean(bernoulli_log_likelihood_bits(targets, recon))) / pix
    _require_finite(distortion_pp, "distortion")
    _require_finite(bob_pp, "bob_bound")

    if accumulate:
        d_recon = 2.0 * diff / (b * pix)
        inside = (recon > PROB_CLAMP) & (recon < 1.0 - PROB_CLAMP)
        f = np.clip(recon, PROB_CLAMP, 1.0 - PROB_CLAMP)
        d_bob = np.where(inside, (targets / f - (1.0 - targets) / (1.0 - f)) / LN2, 0.0)
        d_recon -= cfg.bob_mi_weight * d_bob / (b * pix)
        g_yb = system.dec.net.backward(d_recon)
        g_p = st_grad(g_yb) * (1.0 - 2.0 * eps_b)
    else:
        g_p = None

    eve_bounds = []
    acc_sum = 0.0
    for y_e in y_es:
        probs = system.eve.net.forward(y_e, record=want_eve_grad)
        pt = probs[np.arange(b), labels]
        pt_safe = np.clip(pt, PROB_CLAMP, 1.0)
        eve_bounds.append(H_T_BITS + float(np.mean(np.log2(pt_safe))))
        acc_sum += float(np.mean(np.argmax(probs, axis=1) == labels))
        if want_eve_grad:
            d_probs = np.zeros_like(probs)
            live = pt > PROB_CLAMP
            d_probs[np.arange(b), labels] = np.where(
                live,
                lam * cfg.privacy_weight
                / (draws * b * LN2 * np.maximum(pt, PROB_CLAMP)),
                0.0,
            )
            g_ye = system.eve.net.backward(d_probs, accumulate=False)
            g_p = g_p + st_grad(g_ye) * (1.0 - 2.0 * eps_e)
    eve_bound = float(np.mean(eve_bounds))
    eve_term = eve_bound * cfg.privacy_weight
    total = distortion_pp - cfg.bob_mi_weight * bob_pp + lam * eve_term
    _require_finite(eve_bound, "eve_bound")
    _require_finite(total, "total")
    accuracy = acc_sum / draws

    if accumulate:
        system.enc.net.backward(g_p)

    return LossTerms(
        distortion=distortion_pp * pix,
        bob_bound=bob_pp * pix,
        eve_bound=eve_bound,
        eve_term=eve_term,
        total=total,
        eve_accuracy=accuracy,
    )


def _eve_update_from_p(system: JsccSystem, p, labels, cfg: TrainConfig, rng) -> tuple[float, float]:
    """One classifier ascent step on frozen codes; returns (CE bits, accuracy)."""
    labels = np.asarray(labels, dtype=np.int64)
    b = labels.size
    q_e = relaxed_flip(p, cfg.channel.eps_vector("eve"))
    y_e = sample_bits_st(q_e, rng)
    probs = system.eve.net.forward(y_e, record=True)
    pt = np.clip(probs[np.arange(b), labels], PROB_CLAMP, 1.0)
    ce_bits = -float(np.mean(np.log2(pt)))
    _require_finite(ce_bits, "eve_cross_entropy")
    d_probs = np.zeros_like(probs)
    d_probs[np.arange(b), labels] = -1.0 / (b * LN2 * pt)
    system.eve.net.backward(d_probs)
    adam_step(system.eve.store, lr=cfg.eve_lr)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == labels))
    return ce_bits, accuracy


def eve_step(system: JsccSystem, images, labels, cfg: TrainConfig, rng) -> tuple[float, float]:
    """Public single classifier step: encoder frozen, one cross-entropy descent."""
    p = encode(system.enc, images)
    return _eve_update_from_p(system, p, labels, cfg, rng)


def fit(cfg: TrainConfig, images, labels, progress=None) -> tuple[JsccSystem, TrainHistory]:
    """Alternating adversarial training; deterministic given cfg and data.

    Per batch: ``eve_steps`` classifier updates on the frozen encoder,
    then one encoder/decoder update on the full objective.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if images.shape[0] == 0:
        raise ValueError("dataset must be nonempty")
    system = build_system(cfg.dims, cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(cfg.seed), 0x747261696E)))
    history = TrainHistory()
    n = images.shape[0]
    flat = flatten_images(images, system.dims)

    for epoch in range(cfg.epochs):
        if cfg.lam_warmup_epochs > 0:
            lam_now = cfg.lam * min(1.0, (epoch + 1) / cfg.lam_warmup_epochs)
        else:
            lam_now = cfg.lam
        order = rng.permutation(n)
        sums = np.zeros(5)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            batch_x = flat[idx]
            batch_t = labels[idx]
            p_frozen = encode(system.enc, batch_x)
            acc = 0.0
            for _ in range(cfg.eve_steps):
                _, acc = _eve_update_from_p(system, p_frozen, batch_t, cfg, rng)
            terms = total_loss(system, batch_x, batch_t, cfg, rng, accumulate=True,
                               lam=lam_now)
            adam_step(system.enc.store, lr=cfg.lr)
            adam_step(system.dec.store, lr=cfg.lr)
            sums += (terms.distortion, terms.bob_bound, terms.eve_bound, terms.total, acc)
            batches += 1
        if batches:
            means = sums / batches
            history.records.append(
                EpochRecord(epoch, means[0], means[1], means[2], means[3], means[4])
            )
        if progress is not None:
            progress(epoch, history.records[-1] if history.records else None, system)
    return system, history


def train_eve_decoder(system: JsccSystem, images, cfg: TrainConfig, *,
                      epochs: int = 30, rng=None) -> DecoderModel:
    """Reconstruction decoder trained on the eavesdropper's noisy bits."""
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(cfg.seed), 0x65766564)))
    dec_e = DecoderModel(system.dims, rng, name="eve_dec")
    flat = flatten_images(images, system.dims)
    n = flat.shape[0]
    eps_e = cfg.channel.eps_vector("eve")
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            targets = flat[idx]
            b, pix = targets.shape
            p = encode(system.enc, targets)
            y_e = sample_bits_st(relaxed_flip(p, eps_e), rng)
            recon = dec_e.net.forward(y_e, record=True)
            diff = recon - targets
            inside = (recon > PROB_CLAMP) & (recon < 1.0 - PROB_CLAMP)
            f = np.clip(recon, PROB_CLAMP, 1.0 - PROB_CLAMP)
            d_bob = np.where(inside, (targets / f - (1.0 - targets) / (1.0 - f)) / LN2, 0.0)
            d_recon = (2.0 * diff - cfg.bob_mi_weight * d_bob) / (b * pix)
            dec_e.net.backward(d_recon)
            adam_step(dec_e.store, lr=cfg.lr)
    return dec_e


def train_classifier(x, labels, *, hidden=(128,), epochs: int = 40, batch_size: int = 128,
                     lr: float = 1e-3, seed: int = 0, num_classes: int = N_CLASSES) -> Network:
    """Softmax cross-entropy classifier on a static feature matrix."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 0x636C7366)))
    store = ParamStore()
    layers = [LayerSpec(h, "relu") for h in hidden] + [LayerSpec(num_classes, "softmax")]
    net = Network("clf", x.shape[1], layers, store, rng, zero_last=True)
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            if idx.size < 2:
                continue
            xb, tb = x[idx], labels[idx]
            probs = net.forward(xb, record=True)
            pt = np.clip(probs[np.arange(tb.size), tb], PROB_CLAMP, 1.0)
            d = np.zeros_like(probs)
            d[np.arange(tb.size), tb] = -1.0 / (tb.size * LN2 * pt)
            net.backward(d)
            adam_step(store, lr=lr)
    return net


def classifier_accuracy(net: Network, x, labels) -> float:
    probs = net.forward(np.asarray(x, dtype=np.float64))
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


def retrain_adversary(system: JsccSystem, train_images, train_labels,
                      test_images, test_labels, cfg: TrainConfig, *,
                      epochs: int = 40, seed: int = 0, band: int | None = None
                      ) -> tuple[EveClassifier, float]:
    """Strongest-adversary evaluation: fresh classifier on frozen codes.

    Channel noise is redrawn every epoch; ``band`` restricts the
    classifier's input to one band's bits.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 0x61647665)))
    sl = slice(None) if band is None else cfg.channel.slices()[band]
    width = cfg.channel.n if band is None else cfg.channel.bands[band].width
    dims = ModelDims(
        image_size=cfg.image_size, n_bits=width,
        enc_hidden=cfg.enc_hidden, dec_hidden=cfg.dec_hidden, eve_hidden=cfg.eve_hidden,
    )
    adversary = EveClassifier(dims, rng, name="adversary")
    train_labels = np.asarray(train_labels, dtype=np.int64)
    test_labels = np.asarray(test_labels, dtype=np.int64)
    p_train = encode(system.enc, train_images)
    q_train = relaxed_flip(p_train, cfg.channel.eps_vector("eve"))
    n = p_train.shape[0]
    for _ in range(epochs):
        y_e = sample_bits_st(q_train, rng)[:, sl]
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            probs = adversary.net.forward(y_e[idx], record=True)
            tb = train_labels[idx]
            pt = np.clip(probs[np.arange(tb.size), tb], PROB_CLAMP, 1.0)
            d = np.zeros_like(probs)
            d[np.arange(tb.size), tb] = -1.0 / (tb.size * LN2 * pt)
            adversary.net.backward(d)
            adam_step(adversary.store, lr=cfg.eve_lr)
    p_test = encode(system.enc, test_images)
    x_test = sample_bits_st(p_test, rng)
    y_test = wiretap_sample(x_test, cfg.channel, rng)[1][:, sl]
    accuracy = classifier_accuracy(adversary.net, y_test, test_labels)
    return adversary, accuracy


def evaluate_hard(system: JsccSystem, images, labels, cfg: TrainConfig, rng) -> dict:
    """Hard-sampling evaluation: codeword drawn, channel sampled, decoder applied.

    Returns per-image squared-error distortion, the training classifier's
    accuracy, both cross-entropy bound terms, and the sampled arrays for
    downstream estimators.
    """
    labels = np.asarray(labels, dtype=np.int64)
    targets = flatten_images(images, system.dims)
    p = encode(system.enc, targets)
    x = sample_bits_st(p, rng)
    y_b, y_e = wiretap_sample(x, cfg.channel, rng)
    recon = system.dec.net.forward(y_b)
    diff = recon - targets
    distortion = float(np.mean(np.sum(diff * diff, axis=1)))
    probs = system.eve.net.forward(y_e)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == labels))
    bob_bound = float(np.mean(bernoulli_log_likelihood_bits(targets, recon)))
    pt = np.clip(probs[np.arange(labels.size), labels], PROB_CLAMP, 1.0)
    eve_bound = H_T_BITS + float(np.mean(np.log2(pt)))
    return {
        "distortion": distortion,
        "eve_accuracy": accuracy,
        "bob_bound_bits": bob_bound,
        "eve_bound_bits": eve_bound,
        "p": p,
        "x": x,
        "y_b": y_b,
        "y_e": y_e,
        "recon": recon,
    }


def leakage_samples(system: JsccSystem, images, labels, cfg: TrainConfig, rng,
                    draws: int = 8) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(labels, y_e, groups) with ``draws`` independent channel outputs per image.

    Group ids tie the repeated draws of one image together so estimators
    can split by source sample rather than by observation.
    """
    flat = flatten_images(images, system.dims)
    labels = np.asarray(labels, dtype=np.int64)
    q_e = relaxed_flip(encode(system.enc, flat), cfg.channel.eps_vector("eve"))
    ys, ts, gs = [], [], []
    n = flat.shape[0]
    for _ in range(max(1, draws)):
        ys.append(sample_bits_st(q_e, rng))
        ts.append(labels)
        gs.append(np.arange(n))
    return np.concatenate(ts), np.concatenate(ys), np.concatenate(gs)


def loss_gradient_check(cfg: TrainConfig, images, labels, *, step: float = 1e-5,
                        seed: int = 0) -> float:
    """Max relative error of the full-objective gradient vs central differences.

    Runs the deterministic (expected-marginal) training path so the loss
    is smooth in the parameters; checks every encoder and decoder entry.
    Entries below 1e-6 in both views are compared on that floor, since
    central differences of an O(1) loss carry ~1e-11 cancellation noise.
    """
    system = build_system(cfg.dims, seed)
    rng = np.random.default_rng(seed)
    # move off the zero-initialized final layers so gradients are generic
    warm = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0x7761726D)))
    for store in (system.enc.store, system.dec.store, system.eve.store):
        for _, e in store.items():
            e.value += 0.05 * warm.standard_normal(e.value.shape)

    def loss_value() -> float:
        return total_loss(system, images, labels, cfg, rng, accumulate=False, sample=False).total

    total_loss(system, images, labels, cfg, rng, accumulate=True, sample=False)
    worst = 0.0
    for store in (system.enc.store, system.dec.store):
        analytic = {k: e.grad.copy() for k, e in store.items()}
        store.zero_grads()
        for name, e in store.items():
            it = np.nditer(e.value, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = e.value[idx]
                e.value[idx] = orig + step
                lp = loss_value()
                e.value[idx] = orig - step
                lm = loss_value()
                e.value[idx] = orig
                numeric = (lp - lm) / (2.0 * step)
                a = analytic[name][idx]
                denom = max(abs(a), abs(numeric), 1e-6)
                worst = max(worst, abs(a - numeric) / denom)
                it.iternext()
    return worst
