"""Parameterized layers composing the encoders, experts, router, and head."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Layer:
    def __call__(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def params(self) -> list[tuple[str, Tensor]]:
        return []


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.w = Tensor(he_normal(rng, (out_dim, in_dim), in_dim), requires_grad=True)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.w, self.b)

    def params(self) -> list[tuple[str, Tensor]]:
        return [("w", self.w), ("b", self.b)]


class Conv3x3(Layer):
    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator):
        self.w = Tensor(
            he_normal(rng, (out_ch, in_ch, 3, 3), in_ch * 9), requires_grad=True
        )
        self.b = Tensor(np.zeros(out_ch), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv3x3(x, self.w, self.b)

    def params(self) -> list[tuple[str, Tensor]]:
        return [("w", self.w), ("b", self.b)]


class ReLU(Layer):
    def __call__(self, x: Tensor) -> Tensor:
        return ad.relu(x)


class AvgPool2(Layer):
    def __call__(self, x: Tensor) -> Tensor:
        return ad.avgpool2(x)


class GlobalAvgPool(Layer):
    """Collapse (B, C, H, W) to (B, C) by spatial averaging."""

    def __call__(self, x: Tensor) -> Tensor:
        return ad.spatial_mean(x)


class ResidualConv3x3(Layer):
    """x + conv(x): starts near identity so expert mixtures preserve signal.

    The delta is linear on purpose. A per-stratum affine cleanup (gain,
    channel unmixing, axis rotation) is exactly what a style-specialized
    expert needs to express, and leaving the nonlinearity to the encoder
    blocks keeps the mixture of experts well-behaved early in training.
    """

    def __init__(self, ch: int, rng: np.random.Generator):
        self.conv = Conv3x3(ch, ch, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.conv(x)

    def params(self) -> list[tuple[str, Tensor]]:
        return [(f"conv.{n}", p) for n, p in self.conv.params()]


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def params(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            for name, p in layer.params():
                out.append((f"{i}.{name}", p))
        return out
