"""Learnable system components.

Stochastic bit encoder, reconstruction decoder, eavesdropper classifier,
the straight-through sampling contract, and checkpoint round-tripping.
The decoder and classifier only ever consume channel outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    CheckpointError,
    LayerSpec,
    Network,
    ParamStore,
    load_checkpoint,
    save_checkpoint,
)

N_CLASSES = 9


@dataclass(frozen=True)
class ModelDims:
    image_size: int = 16
    n_bits: int = 200
    enc_hidden: tuple[int, ...] = (256,)
    dec_hidden: tuple[int, ...] = (256,)
    eve_hidden: tuple[int, ...] = (128,)

    @property
    def flat_pixels(self) -> int:
        return self.image_size * self.image_size * 3

    def to_meta(self) -> dict:
        return {
            "image_size": self.image_size,
            "n_bits": self.n_bits,
            "enc_hidden": list(self.enc_hidden),
            "dec_hidden": list(self.dec_hidden),
            "eve_hidden": list(self.eve_hidden),
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "ModelDims":
        return cls(
            image_size=int(meta["image_size"]),
            n_bits=int(meta["n_bits"]),
            enc_hidden=tuple(meta["enc_hidden"]),
            dec_hidden=tuple(meta["dec_hidden"]),
            eve_hidden=tuple(meta["eve_hidden"]),
        )


def _mlp_layers(hidden: tuple[int, ...], out_width: int, out_activation: str):
    layers = [LayerSpec(h, "relu") for h in hidden]
    layers.append(LayerSpec(out_width, out_activation))
    return layers


class EncoderModel:
    """Maps a flattened image to n bit-probabilities via a terminal sigmoid."""

    def __init__(self, dims: ModelDims, rng, store: ParamStore | None = None):
        self.dims = dims
        self.store = store if store is not None else ParamStore()
        self.net = Network(
            "enc", dims.flat_pixels,
            _mlp_layers(dims.enc_hidden, dims.n_bits, "sigmoid"),
            self.store, rng, zero_last=True,
        )


class DecoderModel:
    """Maps n channel values (hard bits or relaxed probabilities) to an image."""

    def __init__(self, dims: ModelDims, rng, store: ParamStore | None = None, name: str = "dec"):
        self.dims = dims
        self.store = store if store is not None else ParamStore()
        self.net = Network(
            name, dims.n_bits,
            _mlp_layers(dims.dec_hidden, dims.flat_pixels, "sigmoid"),
            self.store, rng, zero_last=True,
        )


class EveClassifier:
    """Maps n channel values to 9-class probabilities via a terminal softmax."""

    def __init__(self, dims: ModelDims, rng, store: ParamStore | None = None, name: str = "eve"):
        self.dims = dims
        self.store = store if store is not None else ParamStore()
        self.net = Network(
            name, dims.n_bits,
            _mlp_layers(dims.eve_hidden, N_CLASSES, "softmax"),
            self.store, rng, zero_last=True,
        )


def flatten_images(images, dims: ModelDims) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 4:
        x = x.reshape(x.shape[0], -1)
    elif x.ndim == 3:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != dims.flat_pixels:
        raise ValueError(
            f"image batch does not flatten to width {dims.flat_pixels}: {np.shape(images)}"
        )
    return x


def encode(enc: EncoderModel, images, record: bool = False) -> np.ndarray:
    """Bit-probabilities p in (0,1)^n; deterministic given the image."""
    return enc.net.forward(flatten_images(images, enc.dims), record=record)


def sample_bits_st(p, rng) -> np.ndarray:
    """Bernoulli(p) hard bits. Backward contract: identity Jacobian onto p."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("bit-probabilities must lie in [0, 1]")
    return (rng.random(p.shape) < p).astype(np.float64)


def st_grad(grad_bits: np.ndarray) -> np.ndarray:
    """Straight-through backward: the sampler is treated as identity."""
    return grad_bits


def decode(dec: DecoderModel, y, record: bool = False) -> np.ndarray:
    """Reconstruction in (0,1), reshaped to (B, H, W, 3) (or (H, W, 3) for one input)."""
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    out = dec.net.forward(y, record=record)
    s = dec.dims.image_size
    if single:
        return out.reshape(s, s, 3)
    return out.reshape(out.shape[0], s, s, 3)


def eve_classify(eve: EveClassifier, y, record: bool = False) -> np.ndarray:
    return eve.net.forward(np.asarray(y, dtype=np.float64), record=record)


@dataclass
class JsccSystem:
    """Encoder/decoder/classifier trio with their stores."""

    enc: EncoderModel
    dec: DecoderModel
    eve: EveClassifier
    dims: ModelDims
    extra: dict = field(default_factory=dict)


def build_system(dims: ModelDims, seed: int) -> JsccSystem:
    ss = np.random.SeedSequence(entropy=(int(seed), 0x6D6F64))
    r_enc, r_dec, r_eve = [np.random.default_rng(s) for s in ss.spawn(3)]
    return JsccSystem(
        enc=EncoderModel(dims, r_enc),
        dec=DecoderModel(dims, r_dec),
        eve=EveClassifier(dims, r_eve),
        dims=dims,
    )


def save_system(path, system: JsccSystem, meta: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    for model in (system.enc, system.dec, system.eve):
        arrays.update(model.store.arrays())
    full_meta = {"dims": system.dims.to_meta()}
    full_meta.update(meta or {})
    save_checkpoint(path, arrays, full_meta)


def load_system(path) -> tuple[JsccSystem, dict]:
    arrays, meta = load_checkpoint(path)
    if "dims" not in meta:
        raise CheckpointError(f"checkpoint lacks model dimensions: {path}")
    dims = ModelDims.from_meta(meta["dims"])
    system = build_system(dims, seed=0)
    for model in (system.enc, system.dec, system.eve):
        model.store.load_arrays(arrays)
    return system, meta
