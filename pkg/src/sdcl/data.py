"""Synthetic benchmark with a controllable style-class confound.

Each class is a shape motif (bars, cross, blob, ring) drawn at a random
position, scale, and orientation as a faint luminance bump. Each style is
a photometric rendering regime: a palette tint and an exposure pedestal
that move every channel's global statistics in a style-specific way. On
top of both sits per-sample nuisance drawn from ranges shared by every
style: a chroma grating with random frequency, orientation, and hue, a
contrast curve, additive grain, and small tint and pedestal wobble. The
regime is therefore trivially readable from low-order color statistics,
while the class motif is weak and needs spatial integration. In the train
split the style matches the class with probability rho, making the
rendering regime an easy shortcut for the label; test domains decorrelate
style from class, and at least one uses a palette never seen in training.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError

# Style banks. Index order is the style id; ids past num_styles are
# reserved for held-out test regimes. A style is a photometric regime: a
# palette tint plus an exposure pedestal. Everything else about an image
# (motif geometry, grating texture, contrast curve, grain) is per-sample
# nuisance drawn from ranges shared by every style.
_STYLE_TINT = [
    (1.00, 0.62, 0.62),
    (0.62, 1.00, 0.62),
    (0.62, 0.62, 1.00),
    (0.95, 0.95, 0.55),
    (0.60, 0.95, 0.95),  # held-out default
    (0.95, 0.60, 0.95),
    (0.80, 0.80, 0.80),
    (1.00, 0.80, 0.55),
]
_STYLE_BG = [0.40, 0.60, 0.50, 0.44, 0.56, 0.48, 0.62, 0.38]
# Shared per-sample nuisance ranges.
_TINT_WOBBLE = 0.05
_BG_WOBBLE = 0.03
_GAMMA_RANGE = (0.85, 1.18)
_GRAIN_RANGE = (0.02, 0.06)
_CARRIER_AMP = (0.18, 0.30)
_CARRIER_FREQ = (2.5, 5.0)
_CONTRAST_RANGE = (0.22, 0.30)
# Orthonormal chroma plane (zero-luminance directions) for the grating.
_CHROMA_A = np.array([1.0, -1.0, 0.0]) / np.sqrt(2.0)
_CHROMA_B = np.array([1.0, 1.0, -2.0]) / np.sqrt(6.0)

_MOTIFS = ("bars", "cross", "blob", "ring")


@dataclass
class BenchmarkSpec:
    image_size: tuple[int, int, int] = (3, 16, 16)
    num_classes: int = 4
    num_styles: int = 4
    train_correlation: float = 0.95
    num_test_domains: int = 2
    train_count: int = 4000
    test_count: int = 1000
    seed: int = 0

    def __post_init__(self):
        self.image_size = tuple(self.image_size)

    def validate(self) -> None:
        if len(self.image_size) != 3 or self.image_size[0] != 3:
            raise ConfigError("benchmark.image_size", f"expected (3, H, W), got {self.image_size}")
        if self.image_size[1] < 8 or self.image_size[2] < 8:
            raise ConfigError("benchmark.image_size", "images must be at least 8x8")
        if not 2 <= self.num_classes <= len(_MOTIFS):
            raise ConfigError(
                "benchmark.num_classes",
                f"{self.num_classes} outside [2, {len(_MOTIFS)}]; only "
                f"{len(_MOTIFS)} shape motifs exist",
            )
        if self.num_styles < 2:
            raise ConfigError("benchmark.num_styles", "need at least two styles")
        total_styles = self.num_styles + max(0, self.num_test_domains - 1)
        if total_styles > len(_STYLE_TINT):
            raise ConfigError(
                "benchmark.num_styles",
                f"{total_styles} style regimes requested, only {len(_STYLE_TINT)} defined",
            )
        if not 0.0 <= self.train_correlation <= 1.0:
            raise ConfigError("benchmark.train_correlation", "rho must lie in [0, 1]")
        if self.num_test_domains < 1:
            raise ConfigError("benchmark.num_test_domains", "need at least one test domain")
        if self.train_count < 1 or self.test_count < 1:
            raise ConfigError("benchmark.train_count", "split sizes must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_size"] = list(self.image_size)
        return d

    @staticmethod
    def from_dict(d: dict) -> "BenchmarkSpec":
        known = set(BenchmarkSpec.__dataclass_fields__)
        for key in d:
            if key not in known:
                raise ConfigError(f"benchmark.{key}", "unknown field")
        return BenchmarkSpec(**d)


@dataclass
class LabeledBatch:
    """Images in [0, 1] with integer labels; style ids are diagnostics only."""

    images: Tensor
    labels: np.ndarray
    style_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx: np.ndarray) -> "LabeledBatch":
        return LabeledBatch(
            images=Tensor(self.images.data[idx]),
            labels=self.labels[idx].copy(),
            style_ids=self.style_ids[idx].copy(),
        )


def _motif_mask(motif: str, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """A soft foreground mask for one shape, randomly placed, scaled, rotated."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy = h / 2 + rng.uniform(-h / 8, h / 8)
    cx = w / 2 + rng.uniform(-w / 8, w / 8)
    scale = rng.uniform(0.75, 1.15)
    psi = rng.uniform(0.0, np.pi)
    along = np.cos(psi) * (xx - cx) + np.sin(psi) * (yy - cy)
    across = -np.sin(psi) * (xx - cx) + np.cos(psi) * (yy - cy)

    if motif == "bars":
        width = max(1.0, w / 8 * scale)
        period = 2.0 * width
        phase = rng.uniform(0, period)
        pos = np.abs(((along + phase) % period) - width / 2)
        return (pos < width / 2).astype(np.float64)
    if motif == "cross":
        arm = max(1.0, h / 10 * scale)
        return ((np.abs(along) < arm) | (np.abs(across) < arm)).astype(np.float64)
    if motif == "blob":
        r = h / 3.4 * scale
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        return (d2 < r * r).astype(np.float64)
    if motif == "ring":
        r = h / 2.6 * scale
        d = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        band = max(1.0, h / 10 * scale)
        return (np.abs(d - r * 0.72) < band / 1.6).astype(np.float64)
    raise ConfigError("benchmark.num_classes", f"no motif named {motif!r}")


def _apply_style(delta: np.ndarray, style: int, rng: np.random.Generator) -> np.ndarray:
    """Render a signed luminance layout into a styled RGB image in [0, 1].

    The layout lands equally on all three channels. The style contributes
    its pedestal and tint; the chroma grating, contrast curve, grain, and
    small wobble on pedestal and tint are per-sample nuisance shared by
    every style. The layout itself is untouched by any of it.
    """
    h, w = delta.shape
    bg = _STYLE_BG[style] + rng.uniform(-_BG_WOBBLE, _BG_WOBBLE)
    tint = np.array(_STYLE_TINT[style]) * rng.uniform(
        1.0 - _TINT_WOBBLE, 1.0 + _TINT_WOBBLE, size=3
    )

    # Zero-luminance grating: random hue, frequency, orientation, phase.
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    theta = rng.uniform(0.0, np.pi)
    freq = rng.uniform(*_CARRIER_FREQ)
    amp = rng.uniform(*_CARRIER_AMP)
    phi = rng.uniform(0.0, 2 * np.pi)
    t = (np.cos(theta) * xx + np.sin(theta) * yy) / max(h, w)
    carrier = amp * np.sin(2 * np.pi * freq * t + rng.uniform(0.0, 2 * np.pi))
    hue = np.cos(phi) * _CHROMA_A + np.sin(phi) * _CHROMA_B

    gamma = rng.uniform(*_GAMMA_RANGE)
    grain = rng.uniform(*_GRAIN_RANGE)

    rgb = bg + delta[None] + carrier[None] * hue[:, None, None]
    rgb = np.clip(rgb, 0.0, 1.0) * tint[:, None, None]
    rgb = np.clip(rgb, 0.0, 1.0) ** gamma
    rgb = rgb + grain * rng.standard_normal(rgb.shape)
    return np.clip(rgb, 0.0, 1.0)


def _balanced_labels(count: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Exactly balanced labels (within integer division), shuffled."""
    labels = np.arange(count) % k
    rng.shuffle(labels)
    return labels


def _render_split(
    spec: BenchmarkSpec,
    count: int,
    style_of: callable,
    rng: np.random.Generator,
) -> LabeledBatch:
    _, h, w = spec.image_size
    labels = _balanced_labels(count, spec.num_classes, rng)
    images = np.zeros((count, 3, h, w))
    styles = np.zeros(count, dtype=np.int64)
    for i in range(count):
        cls = int(labels[i])
        style = style_of(cls, rng)
        mask = _motif_mask(_MOTIFS[cls], h, w, rng)
        contrast = rng.uniform(*_CONTRAST_RANGE)
        images[i] = _apply_style(contrast * (mask - 0.5), style, rng)
        styles[i] = style
    return LabeledBatch(Tensor(images), labels, styles)


def generate_benchmark(spec: BenchmarkSpec) -> tuple[LabeledBatch, dict[str, LabeledBatch]]:
    """Build the train split and the named test domains.

    Train style is the class-matched one with probability rho, otherwise
    uniform over the remaining seen styles. The first test domain draws
    styles uniformly from the seen set, independent of class; each further
    domain uses one entirely unseen style regime.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    ns = spec.num_styles

    def train_style(cls: int, r: np.random.Generator) -> int:
        matched = cls % ns
        if ns == 1 or r.random() < spec.train_correlation:
            return matched
        others = [s for s in range(ns) if s != matched]
        return int(others[r.integers(len(others))])

    train = _render_split(spec, spec.train_count, train_style, rng)

    tests: dict[str, LabeledBatch] = {}
    decorr_style = lambda cls, r: int(r.integers(ns))
    tests["decorrelated"] = _render_split(spec, spec.test_count, decorr_style, rng)
    for d in range(1, spec.num_test_domains):
        held = ns + d - 1
        name = "heldout" if d == 1 else f"heldout{d}"
        tests[name] = _render_split(spec, spec.test_count, lambda c, r: held, rng)
    return train, tests


def style_jitter(batch: LabeledBatch, strength: float, seed: int) -> LabeledBatch:
    """Photometric twin of a batch: random tint, gamma, and grain per sample.

    Labels and style ids are untouched. Strength scales every perturbation;
    zero strength returns a bit-identical copy.
    """
    if strength < 0:
        raise ConfigError("jitter_strength", f"negative strength {strength}")
    imgs = batch.images.data
    if strength == 0.0:
        return LabeledBatch(Tensor(imgs.copy()), batch.labels.copy(), batch.style_ids.copy())
    rng = np.random.default_rng(seed)
    n, c, h, w = imgs.shape
    tint = 1.0 + strength * rng.uniform(-0.6, 0.6, size=(n, c, 1, 1))
    gamma = np.exp(strength * rng.uniform(-0.7, 0.7, size=(n, 1, 1, 1)))
    grain = strength * 0.12 * rng.random(size=(n, 1, 1, 1))
    noise = rng.standard_normal(imgs.shape)
    out = np.clip(imgs * tint, 0.0, 1.0) ** gamma + grain * noise
    out = np.clip(out, 0.0, 1.0)
    return LabeledBatch(Tensor(out), batch.labels.copy(), batch.style_ids.copy())


def export_split(batch: LabeledBatch, out_dir: str) -> None:
    """Write one split as a raw little-endian float64 array plus a manifest."""
    os.makedirs(out_dir, exist_ok=True)
    arr = batch.images.data.astype("<f8")
    with open(os.path.join(out_dir, "images.f64"), "wb") as fh:
        fh.write(arr.tobytes())
    manifest = {
        "dtype": "<f8",
        "shape": list(arr.shape),
        "labels": batch.labels.tolist(),
        "style_ids": batch.style_ids.tolist(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh)


def load_split(in_dir: str) -> LabeledBatch:
    """Inverse of :func:`export_split`."""
    with open(os.path.join(in_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    raw = np.fromfile(os.path.join(in_dir, "images.f64"), dtype=manifest["dtype"])
    images = raw.reshape(manifest["shape"]).astype(np.float64)
    return LabeledBatch(
        Tensor(images),
        np.array(manifest["labels"], dtype=np.int64),
        np.array(manifest["style_ids"], dtype=np.int64),
    )
