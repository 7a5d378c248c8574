"""Source generation.

Synthetic colored glyphs whose latent sensitive attribute is the
(color, thickness) pair, optional ingestion of IDX-format grayscale
digits with random colorization, and tiny explicit discrete sources
for exact mutual-information verification.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .channel import popcount

COLOR_NAMES = ("R", "G", "B")
N_COLORS = 3
N_THICKNESS = 3
N_CLASSES = N_COLORS * N_THICKNESS
N_TEMPLATES = 10

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# Seven-segment style strokes: A top, B top-right, C bottom-right,
# D bottom, E bottom-left, F top-left, G middle.
_DIGIT_SEGMENTS = (
    "ABCDEF",   # 0
    "BC",       # 1
    "ABGED",    # 2
    "ABGCD",    # 3
    "FGBC",     # 4
    "AFGCD",    # 5
    "AFGEDC",   # 6
    "ABC",      # 7
    "ABCDEFG",  # 8
    "ABCFGD",   # 9
)


class SourceFormatError(ValueError):
    """Malformed dataset or IDX file."""


@dataclass(frozen=True)
class GlyphSample:
    """One colored glyph with its latent sensitive attribute.

    ``image`` is (H, W, 3) in [0, 1] with exactly one nonzero color
    channel; ``t_label`` encodes (color, thickness) as 3*color + thickness.
    """

    image: np.ndarray
    color: int
    thickness: int
    template: int

    @property
    def t_label(self) -> int:
        return 3 * self.color + self.thickness

    def check(self) -> None:
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise SourceFormatError("glyph image must be H x W x 3")
        if np.any(self.image < 0.0) or np.any(self.image > 1.0):
            raise SourceFormatError("glyph intensities must lie in [0, 1]")
        mass = self.image.sum(axis=(0, 1))
        lit = [c for c in range(3) if mass[c] > 0]
        if lit != [self.color]:
            raise SourceFormatError(
                f"glyph must be pure-hue on channel {self.color}, found mass on {lit}"
            )


def dilate(mask: np.ndarray, passes: int) -> np.ndarray:
    """Binary dilation with a 3x3 square element, ``passes`` times."""
    out = mask.astype(bool)
    h, w = out.shape
    for _ in range(passes):
        padded = np.pad(out, 1)
        acc = np.zeros_like(out)
        for dr in (0, 1, 2):
            for dc in (0, 1, 2):
                acc |= padded[dr : dr + h, dc : dc + w]
        out = acc
    return out


def render_template(template: int, size: int) -> np.ndarray:
    """1-pixel seven-segment strokes for digit ``template`` on a size x size canvas."""
    if not 0 <= template < N_TEMPLATES:
        raise ValueError(f"template must be in 0..9, got {template}")
    if size < 8:
        raise ValueError(f"glyph size must be at least 8, got {size}")
    m = max(2, size // 6)
    top, bottom = m, size - 1 - m
    left, right = m, size - 1 - m
    mid = (top + bottom) // 2
    mask = np.zeros((size, size), dtype=bool)
    segs = _DIGIT_SEGMENTS[template]
    if "A" in segs:
        mask[top, left : right + 1] = True
    if "G" in segs:
        mask[mid, left : right + 1] = True
    if "D" in segs:
        mask[bottom, left : right + 1] = True
    if "F" in segs:
        mask[top : mid + 1, left] = True
    if "B" in segs:
        mask[top : mid + 1, right] = True
    if "E" in segs:
        mask[mid : bottom + 1, left] = True
    if "C" in segs:
        mask[mid : bottom + 1, right] = True
    return mask


def make_glyph(template: int, color: int, thickness: int, size: int = 16) -> GlyphSample:
    if not 0 <= color < N_COLORS:
        raise ValueError(f"color index must be in 0..2, got {color}")
    if not 0 <= thickness < N_THICKNESS:
        raise ValueError(f"thickness must be in 0..2, got {thickness}")
    mask = dilate(render_template(template, size), thickness)
    image = np.zeros((size, size, 3), dtype=np.float64)
    image[:, :, color] = mask.astype(np.float64)
    return GlyphSample(image=image, color=color, thickness=thickness, template=template)


def generate_glyphs(count: int, size: int = 16, seed: int = 0) -> list[GlyphSample]:
    """Draw glyphs with template, color, and thickness independent and uniform."""
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    templates = rng.integers(0, N_TEMPLATES, size=count)
    colors = rng.integers(0, N_COLORS, size=count)
    thick = rng.integers(0, N_THICKNESS, size=count)
    return [
        make_glyph(int(t), int(c), int(k), size)
        for t, c, k in zip(templates, colors, thick)
    ]


def glyphs_to_arrays(glyphs) -> tuple[np.ndarray, np.ndarray]:
    images = np.stack([g.image for g in glyphs]).astype(np.float64)
    labels = np.array([g.t_label for g in glyphs], dtype=np.int64)
    return images, labels


def save_dataset(path, images: np.ndarray, labels: np.ndarray) -> None:
    """Flat binary record file: count/H/W header, then pixels + t_label per sample."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    count, h, w, c = images.shape
    if c != 3 or count != labels.shape[0]:
        raise SourceFormatError("images must be (N, H, W, 3) with matching labels")
    with open(f"{path}.tmp", "wb") as f:
        f.write(struct.pack("<III", count, h, w))
        for i in range(count):
            f.write(np.ascontiguousarray(images[i]).tobytes())
            f.write(struct.pack("<B", int(labels[i])))
    import os

    os.replace(f"{path}.tmp", path)


def load_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12:
        raise SourceFormatError(f"truncated dataset file: {path}")
    count, h, w = struct.unpack("<III", data[:12])
    rec = h * w * 3 * 8 + 1
    if len(data) != 12 + count * rec:
        raise SourceFormatError(f"dataset size mismatch in {path}")
    images = np.empty((count, h, w, 3), dtype=np.float64)
    labels = np.empty(count, dtype=np.int64)
    off = 12
    for i in range(count):
        images[i] = np.frombuffer(data, dtype="<f8", count=h * w * 3, offset=off).reshape(h, w, 3)
        off += h * w * 3 * 8
        labels[i] = data[off]
        off += 1
    return images, labels


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, h, w))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def load_idx_images(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 16:
        raise SourceFormatError(f"truncated IDX image file: {path}")
    magic, n, h, w = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise SourceFormatError(f"bad IDX image magic 0x{magic:08x} in {path}")
    if len(data) != 16 + n * h * w:
        raise SourceFormatError(f"truncated IDX image payload in {path}")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, h, w).copy()


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8:
        raise SourceFormatError(f"truncated IDX label file: {path}")
    magic, n = struct.unpack(">II", data[:8])
    if magic != IDX_LABEL_MAGIC:
        raise SourceFormatError(f"bad IDX label magic 0x{magic:08x} in {path}")
    if len(data) != 8 + n:
        raise SourceFormatError(f"truncated IDX label payload in {path}")
    return np.frombuffer(data, dtype=np.uint8, offset=8).copy()


def _resize_nearest(mask: np.ndarray, size: int) -> np.ndarray:
    h, w = mask.shape
    rows = (np.arange(size) * h) // size
    cols = (np.arange(size) * w) // size
    return mask[np.ix_(rows, cols)]


def load_idx_and_colorize(images_path, labels_path, seed: int = 0, size: int = 16) -> list[GlyphSample]:
    """Threshold IDX grayscale digits at 0.5, then colorize and thicken randomly."""
    raw = load_idx_images(images_path)
    digits = load_idx_labels(labels_path)
    if raw.shape[0] != digits.shape[0]:
        raise SourceFormatError(
            f"count mismatch: {raw.shape[0]} images vs {digits.shape[0]} labels"
        )
    rng = np.random.default_rng(seed)
    out = []
    for i in range(raw.shape[0]):
        binary = (raw[i].astype(np.float64) / 255.0) > 0.5
        if not binary.any():
            raise SourceFormatError(f"empty glyph at index {i}")
        mask = _resize_nearest(binary, size)
        if not mask.any():
            raise SourceFormatError(f"empty glyph at index {i}")
        color = int(rng.integers(0, N_COLORS))
        thickness = int(rng.integers(0, N_THICKNESS))
        mask = dilate(mask, thickness)
        image = np.zeros((size, size, 3), dtype=np.float64)
        image[:, :, color] = mask.astype(np.float64)
        out.append(
            GlyphSample(image=image, color=color, thickness=thickness, template=int(digits[i]))
        )
    return out


MAX_T_ALPHABET = 4
MAX_S_ALPHABET = 16
MAX_CODE_BITS = 6


@dataclass(frozen=True)
class DiscreteSystem:
    """Explicit joint P(T, S) with a tabular encoder P(X^n | S).

    Small enough for full enumeration; ``distortion`` is the per-pair
    source distortion matrix used by the exact trade-off solver.
    """

    joint: np.ndarray
    encoder: np.ndarray
    n_bits: int
    distortion: np.ndarray

    def __post_init__(self):
        joint = np.asarray(self.joint, dtype=np.float64)
        enc = np.asarray(self.encoder, dtype=np.float64)
        nt, ns = joint.shape
        if nt > MAX_T_ALPHABET or ns > MAX_S_ALPHABET:
            raise ValueError(f"alphabets too large: |T|={nt}, |S|={ns}")
        if not 1 <= self.n_bits <= MAX_CODE_BITS:
            raise ValueError(f"n_bits must be in 1..{MAX_CODE_BITS}, got {self.n_bits}")
        if enc.shape != (ns, 1 << self.n_bits):
            raise ValueError(f"encoder table must be ({ns}, {1 << self.n_bits})")
        if np.any(joint < 0) or abs(joint.sum() - 1.0) > 1e-12:
            raise ValueError("joint table must be nonnegative and sum to 1 within 1e-12")
        if np.any(enc < 0) or np.max(np.abs(enc.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("encoder rows must be nonnegative and sum to 1 within 1e-12")
        if np.asarray(self.distortion).shape != (ns, ns):
            raise ValueError("distortion matrix must be (|S|, |S|)")

    @property
    def n_t(self) -> int:
        return self.joint.shape[0]

    @property
    def n_s(self) -> int:
        return self.joint.shape[1]

    @property
    def p_s(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    @property
    def p_t(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    def with_encoder(self, table: np.ndarray) -> "DiscreteSystem":
        return DiscreteSystem(
            joint=self.joint, encoder=np.asarray(table, dtype=np.float64),
            n_bits=self.n_bits, distortion=self.distortion,
        )


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    a = a / a.sum(axis=-1, keepdims=True)
    # renormalize once more so row sums land within 1e-12 of 1
    return a / a.sum(axis=-1, keepdims=True)


def make_discrete_system(kind: str = "correlated-bits", seed: int = 0,
                         m: int = 2, n_bits: int = 2,
                         nt: int = 3, ns: int = 6) -> DiscreteSystem:
    """Construct a verification-scale discrete source/encoder pair.

    ``correlated-bits``: S uniform over m-bit strings, T = leading bit of S,
    identity-style default encoder, bitwise-Hamming distortion.
    ``random``: Dirichlet-like random joint and encoder, 0/1 distortion.
    """
    rng = np.random.default_rng(seed)
    if kind == "correlated-bits":
        if not 1 <= m <= 4:
            raise ValueError(f"m must be in 1..4, got {m}")
        ns_ = 1 << m
        joint = np.zeros((2, ns_))
        for s in range(ns_):
            t = (s >> (m - 1)) & 1
            joint[t, s] = 1.0 / ns_
        nx = 1 << n_bits
        enc = np.zeros((ns_, nx))
        if n_bits >= m:
            for s in range(ns_):
                enc[s, s] = 1.0
        else:
            enc[...] = 1.0 / nx
        idx = np.arange(ns_, dtype=np.uint64)
        dist = popcount(idx[:, None] ^ idx[None, :]).astype(np.float64)
        return DiscreteSystem(joint=joint, encoder=enc, n_bits=n_bits, distortion=dist)
    if kind == "random":
        joint = rng.gamma(1.0, size=(nt, ns))
        joint = joint / joint.sum()
        joint = joint / joint.sum()
        enc = _normalize_rows(rng.gamma(1.0, size=(ns, 1 << n_bits)))
        dist = 1.0 - np.eye(ns)
        return DiscreteSystem(joint=joint, encoder=enc, n_bits=n_bits, distortion=dist)
    raise ValueError(f"unknown system kind {kind!r}")
