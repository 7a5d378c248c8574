"""Binary symmetric wiretap channel.

Exact per-bit likelihoods, bit-flip sampling for the legitimate receiver
and the eavesdropper, the parallel-band generalization, and the
differentiable expected-marginal surrogate used on the training path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ChannelError(ValueError):
    pass


def _check_epsilon(epsilon) -> float:
    e = float(epsilon)
    if not math.isfinite(e) or not (0.0 <= e <= 0.5):
        raise ChannelError(f"crossover probability must lie in [0, 0.5], got {epsilon}")
    return e


@dataclass(frozen=True)
class BandSpec:
    """One parallel band: bit width plus Bob/Eve crossover probabilities."""

    width: int
    epsilon_b: float
    epsilon_e: float

    def __post_init__(self):
        if self.width <= 0:
            raise ChannelError(f"band width must be positive, got {self.width}")
        _check_epsilon(self.epsilon_b)
        _check_epsilon(self.epsilon_e)


@dataclass(frozen=True)
class ChannelSpec:
    """Ordered parallel bands covering the whole blocklength."""

    bands: tuple[BandSpec, ...]

    def __post_init__(self):
        if not self.bands:
            raise ChannelError("channel needs at least one band")

    @property
    def n(self) -> int:
        return sum(b.width for b in self.bands)

    def slices(self) -> list[slice]:
        out, start = [], 0
        for b in self.bands:
            out.append(slice(start, start + b.width))
            start += b.width
        return out

    def eps_vector(self, side: str) -> np.ndarray:
        """Per-bit crossover probabilities for 'bob' or 'eve'."""
        if side not in ("bob", "eve"):
            raise ValueError(f"side must be 'bob' or 'eve', got {side!r}")
        parts = [
            np.full(b.width, b.epsilon_b if side == "bob" else b.epsilon_e)
            for b in self.bands
        ]
        return np.concatenate(parts)

    @classmethod
    def single(cls, n: int, epsilon_b: float, epsilon_e: float) -> "ChannelSpec":
        return cls(bands=(BandSpec(n, epsilon_b, epsilon_e),))

    @classmethod
    def parse(cls, text: str) -> "ChannelSpec":
        """Parse 'width:eps_b:eps_e[, width:eps_b:eps_e ...]'."""
        bands = []
        for chunk in text.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            parts = chunk.split(":")
            if len(parts) != 3:
                raise ChannelError(f"band must be width:eps_b:eps_e, got {chunk!r}")
            bands.append(BandSpec(int(parts[0]), float(parts[1]), float(parts[2])))
        if not bands:
            raise ChannelError(f"no bands in channel description {text!r}")
        return cls(bands=tuple(bands))

    def format(self) -> str:
        return ",".join(f"{b.width}:{b.epsilon_b:g}:{b.epsilon_e:g}" for b in self.bands)


def _as_bits(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all((x == 0.0) | (x == 1.0)):
        raise ChannelError("codeword entries must be 0 or 1")
    return x


def bsc_sample(x, epsilon, rng) -> np.ndarray:
    """Flip each bit independently with probability epsilon.

    ``epsilon`` may be a scalar or a per-bit vector matching the last axis.
    """
    x = _as_bits(x)
    if np.isscalar(epsilon) or np.ndim(epsilon) == 0:
        eps = _check_epsilon(epsilon)
    else:
        eps = np.asarray(epsilon, dtype=np.float64)
        if np.any(eps < 0.0) or np.any(eps > 0.5):
            raise ChannelError("crossover probabilities must lie in [0, 0.5]")
    flips = rng.random(x.shape) < eps
    return np.abs(x - flips.astype(np.float64))


def bsc_log_likelihood(x, y, epsilon) -> float:
    """Natural-log probability of observing y when x crosses a BSC(epsilon).

    epsilon = 0 is accepted only when x equals y (log-probability 0);
    anything else at epsilon = 0 is an impossible event and rejected.
    """
    x = _as_bits(x)
    y = _as_bits(y)
    if x.shape != y.shape:
        raise ChannelError(f"length mismatch: {x.shape} vs {y.shape}")
    eps = _check_epsilon(epsilon)
    flips = int(np.sum(x != y))
    n = x.size
    if eps == 0.0:
        if flips:
            raise ChannelError("epsilon 0 cannot produce differing bits")
        return 0.0
    return flips * math.log(eps) + (n - flips) * math.log(1.0 - eps)


def wiretap_sample(x, spec: ChannelSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    """Sample Bob's and Eve's observations; the two draws are independent given x."""
    x = _as_bits(x)
    n = spec.n
    if x.shape[-1] != n:
        raise ChannelError(f"codeword length {x.shape[-1]} does not match channel n={n}")
    y_b = bsc_sample(x, spec.eps_vector("bob"), rng)
    y_e = bsc_sample(x, spec.eps_vector("eve"), rng)
    return y_b, y_e


def relaxed_flip(p, epsilon) -> np.ndarray:
    """Expected channel-output marginal q = p(1-eps) + (1-p)eps.

    Differentiable in p with Jacobian (1 - 2 eps); epsilon may be scalar
    or a per-bit vector (see ChannelSpec.eps_vector).
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ChannelError("bit-probabilities must lie in [0, 1]")
    if np.isscalar(epsilon) or np.ndim(epsilon) == 0:
        eps = _check_epsilon(epsilon)
    else:
        eps = np.asarray(epsilon, dtype=np.float64)
        if np.any(eps < 0.0) or np.any(eps > 0.5):
            raise ChannelError("crossover probabilities must lie in [0, 0.5]")
    return p * (1.0 - 2.0 * eps) + eps


_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def popcount(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.uint64)
    out = np.zeros(v.shape, dtype=np.int64)
    for shift in range(0, 64, 8):
        out += _POPCOUNT8[(v >> np.uint64(shift)) & np.uint64(0xFF)]
    return out


def channel_matrix(width: int, epsilon) -> np.ndarray:
    """Exact BSC transition matrix K[x, y] = eps^d (1-eps)^(width-d) over width bits."""
    eps = _check_epsilon(epsilon)
    idx = np.arange(1 << width, dtype=np.uint64)
    d = popcount(idx[:, None] ^ idx[None, :])
    return np.power(eps, d) * np.power(1.0 - eps, width - d)


def int_to_bits(value: int, width: int) -> np.ndarray:
    """Big-endian bit vector of ``value`` (first bit is the most significant)."""
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.float64)


def bits_to_int(bits) -> int:
    bits = np.asarray(bits)
    out = 0
    for b in bits:
        out = (out << 1) | int(round(float(b)))
    return out
