"""Dense-network numeric core.

Feed-forward networks over float64 arrays with named parameter stores,
reverse-mode gradients, Adam updates, central-difference gradient checking,
and a deterministic binary checkpoint container.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("identity", "relu", "sigmoid", "tanh", "softmax")

CHECKPOINT_MAGIC = b"WJCK"
CHECKPOINT_VERSION = 1


class NumericError(RuntimeError):
    """A non-finite value reached a loss or parameter update."""


class ShapeError(ValueError):
    """Input incompatible with a layer's expected width."""


class CheckpointError(RuntimeError):
    """Unreadable, incomplete, or version-mismatched checkpoint."""


@dataclass
class ParamEntry:
    """One trainable array with its gradient and Adam moment slots."""

    value: np.ndarray
    grad: np.ndarray
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def fresh(cls, value) -> "ParamEntry":
        value = np.array(value, dtype=np.float64)
        return cls(
            value=value,
            grad=np.zeros_like(value),
            m=np.zeros_like(value),
            v=np.zeros_like(value),
        )


class ParamStore:
    """Uniquely named trainable arrays; one owner mutates, readers share."""

    def __init__(self):
        self._entries: dict[str, ParamEntry] = {}
        self.adam_steps = 0

    def add(self, name: str, value) -> ParamEntry:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name: {name}")
        entry = ParamEntry.fresh(value)
        self._entries[name] = entry
        return entry

    def __getitem__(self, name: str) -> ParamEntry:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def zero_grads(self) -> None:
        for e in self._entries.values():
            e.grad[...] = 0.0

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: e.value.copy() for k, e in self._entries.items()}

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: e.value for k, e in self._entries.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, e in self._entries.items():
            if name not in arrays:
                raise CheckpointError(f"missing parameter in checkpoint: {name}")
            a = np.asarray(arrays[name], dtype=np.float64)
            if a.shape != e.value.shape:
                raise CheckpointError(
                    f"shape mismatch for {name}: file {a.shape} vs model {e.value.shape}"
                )
            e.value[...] = a


def adam_step(store: ParamStore, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8) -> None:
    """Apply one bias-corrected Adam update to every entry, then zero grads."""
    for name, e in store.items():
        if not np.all(np.isfinite(e.grad)):
            raise NumericError(f"non-finite gradient in parameter {name}")
    b1, b2 = betas
    store.adam_steps += 1
    t = store.adam_steps
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for e in store._entries.values():
        e.m *= b1
        e.m += (1.0 - b1) * e.grad
        e.v *= b2
        e.v += (1.0 - b2) * e.grad * e.grad
        e.value -= lr * (e.m / c1) / (np.sqrt(e.v / c2) + eps)
        e.grad[...] = 0.0


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"layer width must be positive, got {self.width}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "tanh":
        return np.tanh(z)
    if kind == "softmax":
        shifted = z - z.max(axis=1, keepdims=True)
        ez = np.exp(shifted)
        return ez / ez.sum(axis=1, keepdims=True)
    raise ValueError(f"unknown activation {kind!r}")


class Network:
    """Feed-forward chain of dense layers sharing one ParamStore.

    Forward with ``record=True`` retains activations for one backward pass;
    backward writes parameter gradients (unless ``accumulate=False``) and
    returns the gradient with respect to the network input. Weights are
    only ever mutated by the optimizer, never by forward/backward.
    """

    def __init__(self, name, in_width, layers, store, rng, zero_last=False):
        if in_width <= 0:
            raise ValueError("in_width must be positive")
        layers = tuple(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        self.name = name
        self.in_width = int(in_width)
        self.layers = layers
        self.store = store
        self._params: list[tuple[ParamEntry, ParamEntry]] = []
        fan_in = self.in_width
        for i, spec in enumerate(layers):
            if spec.activation == "relu":
                scale = math.sqrt(2.0 / fan_in)
            else:
                scale = math.sqrt(2.0 / (fan_in + spec.width))
            w = rng.normal(0.0, scale, size=(fan_in, spec.width))
            b = np.zeros(spec.width)
            if zero_last and i == len(layers) - 1:
                w[...] = 0.0
            we = store.add(f"{name}.{i}.W", w)
            be = store.add(f"{name}.{i}.b", b)
            self._params.append((we, be))
            fan_in = spec.width
        self.out_width = fan_in
        self._cache = None

    def param_entries(self) -> list[tuple[str, ParamEntry]]:
        out = []
        for i, (we, be) in enumerate(self._params):
            out.append((f"{self.name}.{i}.W", we))
            out.append((f"{self.name}.{i}.b", be))
        return out

    def forward(self, x, record: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise ShapeError(
                f"{self.name}: layer 0 expects input width {self.in_width}, "
                f"got array of shape {tuple(np.asarray(x).shape)}"
            )
        cache = []
        h = x
        for spec, (we, be) in zip(self.layers, self._params):
            z = h @ we.value + be.value
            a = _activate(z, spec.activation)
            cache.append((h, a))
            h = a
        if not np.all(np.isfinite(h)):
            raise NumericError(f"{self.name}: non-finite activations in forward pass")
        if record:
            self._cache = (single, cache)
        return h[0] if single else h

    def backward(self, out_grad, accumulate: bool = True) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward called without a recorded forward")
        single, cache = self._cache
        g = np.asarray(out_grad, dtype=np.float64)
        if single and g.ndim == 1:
            g = g[None, :]
        if g.shape != (cache[-1][1].shape[0], self.out_width):
            raise ShapeError(
                f"{self.name}: output grad shape {g.shape} does not match "
                f"output ({cache[-1][1].shape[0]}, {self.out_width})"
            )
        for i in range(len(self.layers) - 1, -1, -1):
            spec = self.layers[i]
            h_in, a = cache[i]
            kind = spec.activation
            if kind == "identity":
                dz = g
            elif kind == "relu":
                dz = g * (a > 0)
            elif kind == "sigmoid":
                dz = g * a * (1.0 - a)
            elif kind == "tanh":
                dz = g * (1.0 - a * a)
            else:  # softmax
                dz = a * (g - (g * a).sum(axis=1, keepdims=True))
            we, be = self._params[i]
            if accumulate:
                we.grad += h_in.T @ dz
                be.grad += dz.sum(axis=0)
            g = dz @ we.value.T
        self._cache = None
        if not np.all(np.isfinite(g)):
            raise NumericError(f"{self.name}: non-finite gradients in backward pass")
        return g[0] if single else g


@dataclass
class GradCheckReport:
    max_rel_error: float
    entry_errors: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def grad_check(net, x, loss_fn, tolerance=1e-4, step=1e-5, corrupt_scale=1.0) -> GradCheckReport:
    """Compare analytic parameter gradients against central differences.

    Parameters
    ----------
    net : Network
    x : array
        Input at which the check runs.
    loss_fn : callable
        Maps the network output to ``(scalar_loss, dloss_doutput)``.
    tolerance : float
        Relative-error threshold for ``passed``.
    step : float
        Central-difference step.
    corrupt_scale : float
        Multiplies analytic gradients before comparison. A value other
        than 1.0 deliberately breaks the check (negative-control hook).
    """
    entries = net.param_entries()
    for _, e in entries:
        e.grad[...] = 0.0
    out = net.forward(x, record=True)
    _, dout = loss_fn(out)
    net.backward(dout)
    analytic = {name: e.grad.copy() * corrupt_scale for name, e in entries}
    for _, e in entries:
        e.grad[...] = 0.0

    errors: dict[str, float] = {}
    for name, e in entries:
        numeric = np.zeros_like(e.value)
        it = np.nditer(e.value, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = e.value[idx]
            e.value[idx] = orig + step
            lp = loss_fn(net.forward(x))[0]
            e.value[idx] = orig - step
            lm = loss_fn(net.forward(x))[0]
            e.value[idx] = orig
            numeric[idx] = (lp - lm) / (2.0 * step)
            it.iternext()
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        errors[name] = float(np.max(np.abs(a - numeric) / denom)) if a.size else 0.0
    max_err = max(errors.values()) if errors else 0.0
    return GradCheckReport(max_rel_error=max_err, entry_errors=errors, tolerance=tolerance)


def quadratic_loss(target):
    """loss(out) = 0.5 * sum((out - target)^2), with its output gradient."""
    target = np.asarray(target, dtype=np.float64)

    def fn(out):
        diff = out - target
        return 0.5 * float(np.sum(diff * diff)), diff

    return fn


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named float64 arrays plus JSON metadata, byte-deterministically."""
    meta = dict(meta or {})
    meta["checkpoint_version"] = CHECKPOINT_VERSION
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            a = np.ascontiguousarray(np.asarray(arrays[name], dtype=np.float64))
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", a.ndim))
            if a.ndim:
                f.write(struct.pack(f"<{a.ndim}q", *a.shape))
            f.write(a.tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        data = f.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise CheckpointError(f"truncated checkpoint: {path}")
        chunk = data[off : off + n]
        off += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"not a checkpoint file: {path}")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(take(meta_len).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}q", take(8 * ndim)) if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        a = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).copy()
        arrays[name] = a
    if off != len(data):
        raise CheckpointError(f"trailing bytes in checkpoint: {path}")
    return arrays, meta
