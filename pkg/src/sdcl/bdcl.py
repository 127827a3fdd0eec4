"""Back-door intervention over style strata via moment transfer.

Restyling normalizes a feature map by its own channel moments and rescales
it with a stored stratum's moments (optionally perturbed by multiplicative
channel noise). The fusion layer blends the original features with the
uniform average of the map restyled to every initialized stratum, which is
the plug-in back-door sum under a uniform stratum prior, with the
expectation moved inside the downstream softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, ShapeError
from .sgem import ConfounderSet

# Instrumentation for tests: fusion must never run during pure inference,
# and fusing against an empty confounder set is flagged, not fatal.
counters = {"fuse_calls": 0, "empty_confounder_set": 0}


@dataclass
class NoisePolicy:
    """How the per-channel style scale is perturbed during restyling.

    ``off`` uses a unit scale. ``bounded`` draws 1 + scale * N(0, 1) and
    clips it into ``bounds``, keeping the scale positive. ``paper_literal``
    draws raw standard normals, which can flip or kill channels; it is kept
    for fidelity experiments.
    """

    mode: str = "bounded"
    scale: float = 0.1
    bounds: tuple[float, float] = (0.5, 1.5)

    def validate(self) -> None:
        if self.mode not in ("off", "bounded", "paper_literal"):
            raise ConfigError("noise.mode", f"unknown mode {self.mode!r}")
        if self.scale < 0:
            raise ConfigError("noise.scale", f"negative scale {self.scale}")
        lo, hi = self.bounds
        if not lo <= hi:
            raise ConfigError("noise.bounds", f"empty interval {self.bounds}")

    def sample(self, channels: int, rng: np.random.Generator) -> np.ndarray:
        self.validate()
        if self.mode == "off":
            return np.ones(channels)
        if self.mode == "bounded":
            draw = 1.0 + self.scale * rng.standard_normal(channels)
            return np.clip(draw, self.bounds[0], self.bounds[1])
        return rng.standard_normal(channels)


@dataclass
class FusionConfig:
    """Blend weight between original features and the restyled average."""

    alpha: float = 0.7

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha", f"{self.alpha} outside [0, 1]")


def _normalized(f_e: Tensor) -> Tensor:
    """(f_e - mu) / max(sigma, floor), per sample and channel."""
    stats = ad.channel_stats(f_e)
    mu = ad.broadcast_spatial(stats.mu, f_e.shape)
    sigma = ad.broadcast_spatial(ad.clamp_min(stats.sigma, ad.STD_FLOOR), f_e.shape)
    return (f_e - mu) / sigma


def _restyle(f_e: Tensor, scale_c: np.ndarray, shift_c: np.ndarray) -> Tensor:
    return _normalized(f_e) * scale_c[None, :, None, None] + shift_c[None, :, None, None]


def adain_transfer(
    f_e: Tensor,
    style: tuple[np.ndarray, np.ndarray],
    noise: NoisePolicy,
    seed: int,
) -> Tensor:
    """Re-express features under a stored style's channel moments.

    The target moments and the noise draw are constants; gradients flow only
    through the input features (including through their own moments).
    """
    mu_s, sigma_s = (np.asarray(style[0], dtype=np.float64),
                     np.asarray(style[1], dtype=np.float64))
    if f_e.data.ndim != 4:
        raise ShapeError(f"adain_transfer expects (B, C, H, W), got {f_e.data.shape}")
    c = f_e.data.shape[1]
    if mu_s.shape != (c,) or sigma_s.shape != (c,):
        raise ShapeError(
            f"adain_transfer: style moments {mu_s.shape}/{sigma_s.shape} vs {c} channels"
        )
    eps = noise.sample(c, np.random.default_rng(seed))
    return _restyle(f_e, sigma_s * eps, mu_s)


def causal_fuse(
    f_e: Tensor,
    conf: ConfounderSet,
    cfg: FusionConfig,
    noise: NoisePolicy,
    seed: int,
) -> Tensor:
    """alpha * f_e + (1 - alpha) * mean over initialized strata of restyled f_e.

    Only initialized strata enter the average, each with weight 1/m. With no
    initialized strata the input is returned unchanged and a warning counter
    is bumped. Per-stratum noise draws come from one seeded stream, in
    ascending stratum order.
    """
    cfg.validate()
    counters["fuse_calls"] += 1
    if f_e.data.ndim != 4 or f_e.data.shape[1] != conf.channels:
        raise ShapeError(
            f"causal_fuse: features {f_e.data.shape} vs {conf.channels} channels"
        )
    strata = conf.initialized_strata()
    if not strata:
        counters["empty_confounder_set"] += 1
        return f_e
    if cfg.alpha == 1.0:
        # Degenerate blend: the restyled average has weight zero.
        return f_e

    rng = np.random.default_rng(seed)
    scales = []
    shifts = []
    for s in strata:
        eps = noise.sample(conf.channels, rng)
        scales.append(conf.sigma[s] * eps)
        shifts.append(conf.mu[s])
    # Restyling is affine in the stratum moments, so averaging the moments
    # first equals averaging the per-stratum restyled maps.
    mean_scale = np.mean(scales, axis=0)
    mean_shift = np.mean(shifts, axis=0)
    mixture = _restyle(f_e, mean_scale, mean_shift)
    return f_e * cfg.alpha + mixture * (1.0 - cfg.alpha)


@dataclass
class GapReport:
    """Total-variation gap between averaged softmax and softmax of averages."""

    max_tv: float
    mean_tv: float
    per_sample: np.ndarray


def nwgm_gap_report(logit_fn, f_e: Tensor, conf: ConfounderSet,
                    cfg: FusionConfig | None = None) -> GapReport:
    """Measure the cost of moving the stratum expectation inside the softmax.

    Compares the stratum-average of Softmax(logit_fn(single-stratum blend))
    against Softmax(logit_fn(stratum-averaged blend)), per sample, with unit
    noise so the comparison is deterministic. Requires at least two
    initialized strata.
    """
    if cfg is None:
        cfg = FusionConfig()
    cfg.validate()
    strata = conf.initialized_strata()
    if len(strata) < 2:
        raise ContractError("nwgm_gap_report requires at least two initialized strata")
    off = NoisePolicy(mode="off")

    probs = []
    restyled_maps = []
    for s in strata:
        f_s = adain_transfer(f_e, (conf.mu[s], conf.sigma[s]), off, seed=0)
        restyled_maps.append(f_s.data)
        blended = f_e * cfg.alpha + f_s * (1.0 - cfg.alpha)
        probs.append(ad.softmax(logit_fn(blended)).data)
    outside = np.mean(probs, axis=0)

    mean_map = Tensor(np.mean(restyled_maps, axis=0))
    blended_mean = f_e * cfg.alpha + mean_map * (1.0 - cfg.alpha)
    inside = ad.softmax(logit_fn(blended_mean)).data

    per_sample = 0.5 * np.abs(outside - inside).sum(axis=-1)
    return GapReport(
        max_tv=float(per_sample.max()),
        mean_tv=float(per_sample.mean()),
        per_sample=per_sample,
    )
