"""Experiment front end.

Subcommands: gen-data, train, sweep, eval, parallel, oracle, gradcheck.
Reads an INI-style config (sections: dataset, channel, training,
evaluation, output); command-line flags win over the file. Every
artifact (CSV, SVG, PNG, checkpoint) is byte-deterministic given
(config, seed). Exit codes: 0 success, 1 usage, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .autodiff import (
    CheckpointError,
    LayerSpec,
    Network,
    NumericError,
    ParamStore,
    adam_step,
    grad_check,
    quadratic_loss,
)
from .channel import BandSpec, ChannelError, ChannelSpec, relaxed_flip, wiretap_sample
from .mi import (
    LN2,
    PROB_CLAMP,
    EnumerationLimitError,
    EstimationError,
    mine_estimate,
    one_hot,
)
from .models import (
    DecoderModel,
    JsccSystem,
    encode,
    load_system,
    sample_bits_st,
    save_system,
    st_grad,
)
from .oracle import frontier_sweep
from .source import (
    SourceFormatError,
    generate_glyphs,
    glyphs_to_arrays,
    load_dataset,
    load_idx_and_colorize,
    make_discrete_system,
    save_dataset,
)
from .training import (
    TrainConfig,
    TrainHistory,
    evaluate_hard,
    fit,
    leakage_samples,
    loss_gradient_check,
    retrain_adversary,
    train_eve_decoder,
)
from .viz import image_grid, line_plot_svg, write_png

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
OUTPUT_ENV = "WIRETAP_JSCC_OUTDIR"

PUT_SCHEMA = "# schema: put.v1"
PUT_HEADER = "lambda,eps_b,eps_e,seed,status,distortion,mine_bits,adversary_accuracy"
EVAL_SCHEMA = "# schema: eval.v1"
EVAL_HEADER = (
    "distortion,mine_bits,adversary_accuracy,bob_bound_bits,eve_bound_bits,"
    "train_eve_accuracy,leakage_method,leakage_samples"
)
PARALLEL_SCHEMA = "# schema: parallel.v1"
PARALLEL_HEADER = "seed,band,width,eps_b,eps_e,mine_bits,acc_t,acc_color,acc_thickness"
FRONTIER_SCHEMA = "# schema: frontier.v1"
FRONTIER_HEADER = "lambda,distortion,mi_bob,mi_eve_leakage,objective,restarts_used"
HISTORY_SCHEMA = "# schema: history.v1"


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    # dataset
    dataset_kind: str = "glyphs"
    image_size: int = 16
    train_count: int = 9000
    test_count: int = 2000
    data_seed: int = 7
    data_path: str = ""
    idx_images: str = ""
    idx_labels: str = ""
    # channel
    bands: str = "200:0.1:0.3"
    # training
    lam: float = 0.0
    epochs: int = 200
    batch_size: int = 128
    eve_steps: int = 5
    train_seed: int = 0
    lr: float = 1e-3
    eve_lr: float = 1e-3
    enc_hidden: str = "256"
    dec_hidden: str = "256"
    eve_hidden: str = "128"
    bob_mi_weight: float = 1.0
    privacy_weight: float = 1.0 / 32.0
    lam_warmup_epochs: int = 0
    eve_draws: int = 1
    checkpoint_every: int = 0
    # evaluation
    mine_epochs: int = 150
    mine_batch: int = 256
    mine_draws: int = 8
    mine_hidden: str = "128,128"
    adversary_epochs: int = 40
    eve_decoder_epochs: int = 30
    band_decoder_epochs: int = 15
    grid_samples: int = 8
    # output
    out_dir: str = ""


_SECTION_FIELDS = {
    "dataset": ("dataset_kind", "image_size", "train_count", "test_count", "data_seed",
                "data_path", "idx_images", "idx_labels"),
    "channel": ("bands",),
    "training": ("lam", "epochs", "batch_size", "eve_steps", "train_seed", "lr", "eve_lr",
                 "enc_hidden", "dec_hidden", "eve_hidden", "bob_mi_weight",
                 "privacy_weight", "lam_warmup_epochs", "eve_draws", "checkpoint_every"),
    "evaluation": ("mine_epochs", "mine_batch", "mine_draws", "mine_hidden", "adversary_epochs",
                   "eve_decoder_epochs", "band_decoder_epochs", "grid_samples"),
    "output": ("out_dir",),
}

_KEY_ALIASES = {
    "lambda": "lam",
    "kind": "dataset_kind",
    "size": "image_size",
    "train": "train_count",
    "test": "test_count",
    "dir": "out_dir",
}


def load_config(path: str | None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if not path:
        return cfg
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise UsageError(f"cannot read config file {path}")
    defaults = asdict(cfg)
    for section, fields in _SECTION_FIELDS.items():
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            name = _KEY_ALIASES.get(key, key)
            if name == "seed":
                name = "data_seed" if section == "dataset" else "train_seed"
            if name not in fields:
                raise UsageError(f"unknown config key [{section}] {key}")
            kind = type(defaults[name])
            try:
                value = kind(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for [{section}] {key}: {raw!r}") from exc
            setattr(cfg, name, value)
    return cfg


def _parse_hidden(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in str(text).split(",") if p.strip())


def _parse_floats(text: str) -> list[float]:
    return [float(p) for p in str(text).split(",") if p.strip()]


def channel_of(cfg: ExperimentConfig) -> ChannelSpec:
    return ChannelSpec.parse(cfg.bands)


def train_config(cfg: ExperimentConfig, lam: float | None = None,
                 seed: int | None = None, channel: ChannelSpec | None = None) -> TrainConfig:
    return TrainConfig(
        channel=channel if channel is not None else channel_of(cfg),
        lam=cfg.lam if lam is None else float(lam),
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        eve_steps=cfg.eve_steps,
        seed=cfg.train_seed if seed is None else int(seed),
        lr=cfg.lr,
        eve_lr=cfg.eve_lr,
        image_size=cfg.image_size,
        enc_hidden=_parse_hidden(cfg.enc_hidden),
        dec_hidden=_parse_hidden(cfg.dec_hidden),
        eve_hidden=_parse_hidden(cfg.eve_hidden),
        bob_mi_weight=cfg.bob_mi_weight,
        privacy_weight=cfg.privacy_weight,
        lam_warmup_epochs=cfg.lam_warmup_epochs,
        eve_draws=cfg.eve_draws,
    )


def make_dataset(cfg: ExperimentConfig):
    """(train_images, train_labels, test_images, test_labels) per the config."""
    if cfg.dataset_kind == "glyphs":
        glyphs = generate_glyphs(cfg.train_count + cfg.test_count, cfg.image_size, cfg.data_seed)
        images, labels = glyphs_to_arrays(glyphs)
    elif cfg.dataset_kind == "file":
        if not cfg.data_path:
            raise UsageError("dataset kind 'file' needs data_path")
        tr_i, tr_l = load_dataset(os.path.join(cfg.data_path, "train.bin"))
        te_i, te_l = load_dataset(os.path.join(cfg.data_path, "test.bin"))
        return tr_i, tr_l, te_i, te_l
    elif cfg.dataset_kind == "idx":
        if not (cfg.idx_images and cfg.idx_labels):
            raise UsageError("dataset kind 'idx' needs idx_images and idx_labels")
        glyphs = load_idx_and_colorize(cfg.idx_images, cfg.idx_labels,
                                       seed=cfg.data_seed, size=cfg.image_size)
        if len(glyphs) < cfg.train_count + cfg.test_count:
            raise UsageError(
                f"IDX file holds {len(glyphs)} samples, need {cfg.train_count + cfg.test_count}"
            )
        images, labels = glyphs_to_arrays(glyphs)
    else:
        raise UsageError(f"unknown dataset kind {cfg.dataset_kind!r}")
    n_train = cfg.train_count
    return (images[:n_train], labels[:n_train],
            images[n_train : n_train + cfg.test_count],
            labels[n_train : n_train + cfg.test_count])


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence(entropy=tuple(int(p) for p in parts)).generate_state(1)[0])


def _write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def _write_csv(path, schema: str, header: str, rows: list[str], extra_comments=()) -> None:
    _write_text(path, "\n".join([schema, *extra_comments, header, *rows]) + "\n")


def _out_dir(args_out: str | None, cfg: ExperimentConfig) -> str:
    out = args_out or cfg.out_dir or os.environ.get(OUTPUT_ENV, "") or "runs"
    os.makedirs(out, exist_ok=True)
    return out


def _mine_leakage(cfg: ExperimentConfig, system: JsccSystem, tcfg: TrainConfig,
                  test_images, test_labels, seed: int, band_slice=None):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 0x6D696E65)))
    labels, y_e, groups = leakage_samples(system, test_images, test_labels, tcfg, rng,
                                          draws=cfg.mine_draws)
    feats = y_e if band_slice is None else y_e[:, band_slice]
    return mine_estimate(
        one_hot(labels, 9), feats,
        epochs=cfg.mine_epochs, batch_size=cfg.mine_batch,
        hidden=_parse_hidden(cfg.mine_hidden), seed=seed, groups=groups,
    )


def _evaluate_cell(cfg: ExperimentConfig, tcfg: TrainConfig, system: JsccSystem,
                   train_images, train_labels, test_images, test_labels) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(tcfg.seed, 0x6576616C)))
    stats = evaluate_hard(system, test_images, test_labels, tcfg, rng)
    leakage = _mine_leakage(cfg, system, tcfg, test_images, test_labels,
                            seed=_derive_seed(tcfg.seed, 1))
    stats["mine_bits"] = leakage.value
    stats["leakage_report"] = leakage
    _, adv_acc = retrain_adversary(
        system, train_images, train_labels, test_images, test_labels, tcfg,
        epochs=cfg.adversary_epochs, seed=_derive_seed(tcfg.seed, 2),
    )
    stats["adversary_accuracy"] = adv_acc
    return stats


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg: ExperimentConfig, out: str) -> int:
    tr_i, tr_l, te_i, te_l = make_dataset(cfg)
    save_dataset(os.path.join(out, "train.bin"), tr_i, tr_l)
    save_dataset(os.path.join(out, "test.bin"), te_i, te_l)
    counts = np.bincount(np.concatenate([tr_l, te_l]), minlength=9)
    print(f"wrote {tr_i.shape[0]} train / {te_i.shape[0]} test samples to {out}")
    print("label counts:", " ".join(str(int(c)) for c in counts))
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, out: str, quiet: bool = False) -> int:
    tr_i, tr_l, _, _ = make_dataset(cfg)
    tcfg = train_config(cfg)
    meta = {
        "lambda": tcfg.lam,
        "bands": tcfg.channel.format(),
        "seed": tcfg.seed,
        "image_size": tcfg.image_size,
    }

    def progress(epoch, record, system):
        if not quiet and record is not None and (epoch % 10 == 9 or epoch == 0):
            print(
                f"epoch {epoch + 1}/{tcfg.epochs} distortion={record.distortion:.3f} "
                f"eve_acc={record.eve_accuracy:.3f}", flush=True,
            )
        if cfg.checkpoint_every > 0 and (epoch + 1) % cfg.checkpoint_every == 0:
            save_system(os.path.join(out, f"checkpoint_ep{epoch + 1:04d}.wjck"),
                        system, {**meta, "epoch": epoch + 1})

    system, history = fit(tcfg, tr_i, tr_l, progress=progress)
    save_system(os.path.join(out, "checkpoint.wjck"), system, meta)
    _write_csv(os.path.join(out, "history.csv"), HISTORY_SCHEMA,
               TrainHistory.CSV_HEADER, history.rows())
    print(f"checkpoint and history written to {out}")
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, checkpoint: str, out: str) -> int:
    system, meta = load_system(checkpoint)
    if meta.get("bands"):
        cfg = replace(cfg, bands=meta["bands"])
    if "lambda" in meta:
        cfg = replace(cfg, lam=float(meta["lambda"]))
    if "image_size" in meta:
        cfg = replace(cfg, image_size=int(meta["image_size"]))
    tr_i, tr_l, te_i, te_l = make_dataset(cfg)
    tcfg = train_config(cfg, seed=int(meta.get("seed", cfg.train_seed)))
    if tcfg.channel.n != system.dims.n_bits:
        raise UsageError(
            f"checkpoint expects n={system.dims.n_bits}, config channel has n={tcfg.channel.n}"
        )
    stats = _evaluate_cell(cfg, tcfg, system, tr_i, tr_l, te_i, te_l)
    leakage = stats["leakage_report"]
    row = ",".join(
        repr(float(stats[k]))
        for k in ("distortion", "mine_bits", "adversary_accuracy",
                  "bob_bound_bits", "eve_bound_bits", "eve_accuracy")
    ) + f",{leakage.method},{leakage.sample_count}"
    _write_csv(os.path.join(out, "metrics.csv"), EVAL_SCHEMA, EVAL_HEADER, [row])

    rng = np.random.default_rng(np.random.SeedSequence(entropy=(tcfg.seed, 0x67726964)))
    eve_dec = train_eve_decoder(system, tr_i, tcfg, epochs=cfg.eve_decoder_epochs, rng=rng)
    k = min(cfg.grid_samples, te_i.shape[0])
    sample = te_i[:k]
    p = encode(system.enc, sample)
    x = sample_bits_st(p, rng)
    y_b, y_e = wiretap_sample(x, tcfg.channel, rng)
    side = cfg.image_size
    bob = system.dec.net.forward(y_b).reshape(k, side, side, 3)
    eve = eve_dec.net.forward(y_e).reshape(k, side, side, 3)
    write_png(os.path.join(out, "recon_grid.png"), image_grid([sample, bob, eve]))
    print(f"metrics and reconstruction grid written to {out}")
    return EXIT_OK


def _sweep_cell(payload: dict) -> dict:
    cfg = ExperimentConfig(**payload["config"])
    lam, eps_e, replicate = payload["lam"], payload["eps_e"], payload["replicate"]
    base = channel_of(cfg)
    if len(base.bands) != 1:
        raise UsageError("sweep varies eps_e on single-band channels only")
    band = base.bands[0]
    spec = ChannelSpec.single(band.width, band.epsilon_b, eps_e)
    seed = _derive_seed(cfg.train_seed, replicate, round(lam * 1000), round(eps_e * 1e6))
    tcfg = train_config(cfg, lam=lam, seed=seed, channel=spec)
    tr_i, tr_l, te_i, te_l = make_dataset(cfg)
    system, _ = fit(tcfg, tr_i, tr_l)
    stats = _evaluate_cell(cfg, tcfg, system, tr_i, tr_l, te_i, te_l)
    return {
        "lam": lam, "eps_b": band.epsilon_b, "eps_e": eps_e, "seed": replicate,
        "status": "ok", "distortion": stats["distortion"],
        "mine_bits": stats["mine_bits"], "adversary_accuracy": stats["adversary_accuracy"],
    }


def _sweep_cell_safe(payload: dict) -> dict:
    try:
        return _sweep_cell(payload)
    except (NumericError, EstimationError) as exc:
        cfg = ExperimentConfig(**payload["config"])
        base = channel_of(cfg).bands[0]
        return {
            "lam": payload["lam"], "eps_b": base.epsilon_b, "eps_e": payload["eps_e"],
            "seed": payload["replicate"], "status": f"error:{type(exc).__name__}",
            "distortion": float("nan"), "mine_bits": float("nan"),
            "adversary_accuracy": float("nan"),
        }


def cmd_sweep(cfg: ExperimentConfig, lambdas, eps_grid, seeds: int, out: str,
              workers: int = 0) -> int:
    if not lambdas:
        print("warning: empty lambda list, writing empty table", file=sys.stderr)
        _write_csv(os.path.join(out, "put.csv"), PUT_SCHEMA, PUT_HEADER, [])
        return EXIT_OK
    payloads = [
        {"config": asdict(cfg), "lam": float(lam), "eps_e": float(eps_e), "replicate": rep}
        for lam in lambdas for eps_e in eps_grid for rep in range(seeds)
    ]
    if workers and workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows_data = list(pool.map(_sweep_cell_safe, payloads))
    else:
        rows_data = [_sweep_cell_safe(p) for p in payloads]
    rows_data.sort(key=lambda r: (r["lam"], r["eps_e"], r["seed"]))
    rows = [
        f'{r["lam"]:g},{r["eps_b"]:g},{r["eps_e"]:g},{r["seed"]},{r["status"]},'
        f'{r["distortion"]!r},{r["mine_bits"]!r},{r["adversary_accuracy"]!r}'
        for r in rows_data
    ]
    _write_csv(os.path.join(out, "put.csv"), PUT_SCHEMA, PUT_HEADER, rows)

    series = []
    for eps_e in sorted({r["eps_e"] for r in rows_data}):
        pts = []
        for lam in sorted({r["lam"] for r in rows_data}):
            cell = [r for r in rows_data
                    if r["lam"] == lam and r["eps_e"] == eps_e and r["status"] == "ok"]
            if cell:
                pts.append((float(np.mean([r["distortion"] for r in cell])),
                            float(np.mean([r["mine_bits"] for r in cell]))))
        if pts:
            series.append({"label": f"eps_e={eps_e:g}",
                           "xs": [p[0] for p in pts], "ys": [p[1] for p in pts]})
    line_plot_svg(os.path.join(out, "put.svg"), series,
                  "distortion per image", "leakage estimate (bits)",
                  "privacy-utility trade-off")
    failures = sum(1 for r in rows_data if r["status"] != "ok")
    print(f"sweep complete: {len(rows_data)} cells, {failures} failures -> {out}/put.csv")
    return EXIT_OK


def _train_band_decoder(system: JsccSystem, images, tcfg: TrainConfig, band_slice,
                        side: str, epochs: int, rng) -> DecoderModel:
    """Reconstruction decoder for one band; other bands neutralized at 0.5."""
    from .models import flatten_images

    dec = DecoderModel(system.dims, rng, name="band_dec")
    flat = flatten_images(images, system.dims)
    eps = tcfg.channel.eps_vector(side)
    n = flat.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            if idx.size < 2:
                continue
            targets = flat[idx]
            b, pix = targets.shape
            p = encode(system.enc, targets)
            y = sample_bits_st(relaxed_flip(p, eps), rng)
            iso = np.full_like(y, 0.5)
            iso[:, band_slice] = y[:, band_slice]
            recon = dec.net.forward(iso, record=True)
            diff = recon - targets
            inside = (recon > PROB_CLAMP) & (recon < 1.0 - PROB_CLAMP)
            fcl = np.clip(recon, PROB_CLAMP, 1.0 - PROB_CLAMP)
            d_ce = np.where(inside, (targets / fcl - (1.0 - targets) / (1.0 - fcl)) / LN2, 0.0)
            dec.net.backward((2.0 * diff - d_ce) / (b * pix))
            adam_step(dec.store, lr=tcfg.lr)
    return dec


def cmd_parallel(cfg: ExperimentConfig, seeds: int, out: str, render_grid: bool = True) -> int:
    spec = channel_of(cfg)
    if len(spec.bands) < 2:
        raise UsageError("parallel analysis needs at least 2 bands; use 'sweep' for one band")
    tr_i, tr_l, te_i, te_l = make_dataset(cfg)
    slices = spec.slices()
    rows = []
    first_system, first_tcfg = None, None
    for rep in range(seeds):
        seed = _derive_seed(cfg.train_seed, rep, 0x70617261)
        tcfg = train_config(cfg, seed=seed)
        system, _ = fit(tcfg, tr_i, tr_l)
        if first_system is None:
            first_system, first_tcfg = system, tcfg
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0x6576616C)))
        stats = evaluate_hard(system, te_i, te_l, tcfg, rng)
        for b, band in enumerate(spec.bands):
            mine_bits = _mine_leakage(cfg, system, tcfg, te_i, te_l,
                                      seed=_derive_seed(seed, 10 + b),
                                      band_slice=slices[b]).value
            adversary, acc_t = retrain_adversary(
                system, tr_i, tr_l, te_i, te_l, tcfg,
                epochs=cfg.adversary_epochs, seed=_derive_seed(seed, 20 + b), band=b,
            )
            probs = adversary.net.forward(stats["y_e"][:, slices[b]])
            pred = np.argmax(probs, axis=1)
            acc_color = float(np.mean((pred // 3) == (te_l // 3)))
            acc_thick = float(np.mean((pred % 3) == (te_l % 3)))
            rows.append(
                f"{rep},{b},{band.width},{band.epsilon_b:g},{band.epsilon_e:g},"
                f"{mine_bits!r},{acc_t!r},{acc_color!r},{acc_thick!r}"
            )
    _write_csv(os.path.join(out, "parallel.csv"), PARALLEL_SCHEMA, PARALLEL_HEADER, rows)

    if render_grid and first_system is not None:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(first_tcfg.seed, 0x67726964)))
        eve_dec = train_eve_decoder(first_system, tr_i, first_tcfg,
                                    epochs=cfg.eve_decoder_epochs, rng=rng)
        k = min(cfg.grid_samples, te_i.shape[0])
        sample = te_i[:k]
        p = encode(first_system.enc, sample)
        x = sample_bits_st(p, rng)
        y_b, y_e = wiretap_sample(x, first_tcfg.channel, rng)
        side = cfg.image_size
        groups = [sample,
                  first_system.dec.net.forward(y_b).reshape(k, side, side, 3),
                  eve_dec.net.forward(y_e).reshape(k, side, side, 3)]
        for channel_side, y in (("bob", y_b), ("eve", y_e)):
            for b in range(len(spec.bands)):
                dec_b = _train_band_decoder(first_system, tr_i, first_tcfg, slices[b],
                                            channel_side, cfg.band_decoder_epochs, rng)
                iso = np.full_like(y, 0.5)
                iso[:, slices[b]] = y[:, slices[b]]
                groups.append(dec_b.net.forward(iso).reshape(k, side, side, 3))
        write_png(os.path.join(out, "parallel_grid.png"), image_grid(groups))
    print(f"parallel report written to {out}/parallel.csv")
    return EXIT_OK


def cmd_oracle(cfg: ExperimentConfig, lambdas, restarts: int, kind: str, m: int,
               n_bits: int, eps_b: float, eps_e: float, funnel: bool, out: str) -> int:
    if funnel:
        eps_e = eps_b
    try:
        system = make_discrete_system(kind, seed=cfg.data_seed, m=m, n_bits=n_bits)
        spec = ChannelSpec.single(n_bits, eps_b, eps_e)
        points = frontier_sweep(system, spec, lambdas, restarts=restarts, seed=cfg.train_seed)
    except (EnumerationLimitError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    comments = ["# regime: privacy-funnel"] if funnel else []
    rows = [
        f"{p.lam:g},{p.distortion!r},{p.mi_bob!r},{p.mi_eve!r},{p.objective!r},{p.restarts_used}"
        for p in points
    ]
    _write_csv(os.path.join(out, "frontier.csv"), FRONTIER_SCHEMA, FRONTIER_HEADER, rows,
               extra_comments=comments)
    line_plot_svg(
        os.path.join(out, "frontier.svg"),
        [
            {"label": "I(S;Y_B)", "xs": [p.lam for p in points],
             "ys": [p.mi_bob for p in points]},
            {"label": "leakage", "xs": [p.lam for p in points],
             "ys": [p.mi_eve for p in points], "dashed": True},
        ],
        "lambda", "bits", "exact trade-off frontier",
    )
    print(f"frontier written to {out}/frontier.csv")
    return EXIT_OK


def cmd_gradcheck(corrupt: bool = False) -> int:
    rng = np.random.default_rng(20240)
    scale = 1.01 if corrupt else 1.0
    checks: list[tuple[str, float, float]] = []
    for act in ("identity", "relu", "sigmoid", "tanh", "softmax"):
        store = ParamStore()
        net = Network(f"chk_{act}", 6, [LayerSpec(7, "tanh"), LayerSpec(5, act)], store, rng)
        x = rng.standard_normal((3, 6))
        report = grad_check(net, x, quadratic_loss(rng.random((3, 5))),
                            tolerance=1e-4, corrupt_scale=scale)
        checks.append((f"layer {act}", report.max_rel_error, report.tolerance))

    rng2 = np.random.default_rng(77)
    p = rng2.random((4, 16))
    bits = sample_bits_st(p, rng2)
    hard = float(np.max(np.abs(bits * (1.0 - bits))))
    ident = float(np.max(np.abs(st_grad(np.ones_like(p)) - 1.0)))
    checks.append(("straight-through contract", max(hard, ident), 1e-12))

    tiny = TrainConfig(
        channel=ChannelSpec.parse("4:0.1:0.3,4:0.05:0.05"), lam=3.0, epochs=1,
        batch_size=4, image_size=4, enc_hidden=(10,), dec_hidden=(10,), eve_hidden=(8,),
    )
    imgs = np.random.default_rng(5).random((4, 4, 4, 3))
    labels = np.array([0, 3, 5, 8])
    worst = loss_gradient_check(tiny, imgs, labels, seed=11)
    if corrupt:
        worst += 0.01
    checks.append(("full training loss", worst, 1e-4))

    failed = 0
    for name, err, tol in checks:
        ok = err <= tol
        failed += 0 if ok else 1
        print(f"{name:28s} max_rel_err={err:.3e} tol={tol:.0e} {'ok' if ok else 'FAIL'}")
    if failed:
        print(f"{failed} gradient check(s) failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="wiretap-jscc",
                     description="privacy-aware JSCC over binary wiretap channels")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--out", default=None, help=f"output dir (or ${OUTPUT_ENV})")
        p.add_argument("--seed", type=int, default=None, help="training seed override")
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--eps-b", type=float, default=None)
        p.add_argument("--eps-e", type=float, default=None)
        p.add_argument("--bands", default=None, help="width:eps_b:eps_e[,...]")
        p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("gen-data", help="generate and cache a glyph dataset")
    common(p)

    p = sub.add_parser("train", help="train one system from the config")
    common(p)
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("sweep", help="lambda/eps_e grid of runs -> put.csv + plot")
    common(p)
    p.add_argument("--lambdas", default="0,5,10,20")
    p.add_argument("--eps-e-grid", default="0,0.2,0.3")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--workers", type=int, default=0)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("parallel", help="parallel-channel per-band analysis")
    common(p)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--no-grid", action="store_true")

    p = sub.add_parser("oracle", help="exact frontier on a tiny discrete system")
    common(p)
    p.add_argument("--lambdas", default="0,0.25,0.5,1,2,4,8,16")
    p.add_argument("--restarts", type=int, default=16)
    p.add_argument("--kind", default="correlated-bits")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--n-bits", type=int, default=2)
    p.add_argument("--funnel", action="store_true",
                   help="privacy-funnel regime (eps_e forced equal to eps_b)")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--corrupt", action="store_true", help="negative control")

    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, train_seed=args.seed)
    if getattr(args, "lam", None) is not None:
        cfg = replace(cfg, lam=args.lam)
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, epochs=args.epochs)
    if getattr(args, "bands", None) is not None:
        cfg = replace(cfg, bands=args.bands)
    eps_b = getattr(args, "eps_b", None)
    eps_e = getattr(args, "eps_e", None)
    if eps_b is not None or eps_e is not None:
        spec = ChannelSpec.parse(cfg.bands)
        if len(spec.bands) != 1:
            raise UsageError("--eps-b/--eps-e apply to single-band channels; use --bands")
        band = spec.bands[0]
        new = BandSpec(band.width,
                       band.epsilon_b if eps_b is None else eps_b,
                       band.epsilon_e if eps_e is None else eps_e)
        cfg = replace(cfg, bands=ChannelSpec(bands=(new,)).format())
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "gradcheck":
            return cmd_gradcheck(corrupt=args.corrupt)
        if args.command == "oracle":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = replace(cfg, train_seed=args.seed)
            out = _out_dir(args.out, cfg)
            return cmd_oracle(
                cfg, _parse_floats(args.lambdas), args.restarts, args.kind, args.m,
                args.n_bits,
                args.eps_b if args.eps_b is not None else 0.0,
                args.eps_e if args.eps_e is not None else 0.0,
                args.funnel, out,
            )
        cfg = _apply_overrides(load_config(args.config), args)
        out = _out_dir(args.out, cfg)
        if args.command == "gen-data":
            return cmd_gen_data(cfg, out)
        if args.command == "train":
            return cmd_train(cfg, out, quiet=args.quiet)
        if args.command == "sweep":
            return cmd_sweep(cfg, _parse_floats(args.lambdas),
                             _parse_floats(args.eps_e_grid), args.seeds, out,
                             workers=args.workers)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, out)
        if args.command == "parallel":
            return cmd_parallel(cfg, args.seeds, out, render_grid=not args.no_grid)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, ChannelError, SourceFormatError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, EstimationError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
