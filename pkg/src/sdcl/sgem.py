"""Style-routed expert mixing and the confounder statistics it maintains.

A sample's style signature is the pair of per-channel moments of its
shallow features. The router maps that signature to expert logits; top-k
gating turns the logits into a sparse convex mixture over the expert bank.
Per-expert running means of the mixed features' moments form the
confounder set that the intervention layer later marginalizes over.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, ShapeError
from .layers import ResidualConv3x3, Sequential


def style_embedding(features: Tensor) -> Tensor:
    """Per-sample style signature: concat of channel mean and std, shape (B, 2C).

    Differentiable in the features; the second half is nonnegative since it
    holds standard deviations.
    """
    stats = ad.channel_stats(features)
    return ad.concat_cols(stats.mu, stats.sigma)


@dataclass
class GatingDecision:
    """Routing outcome for a batch.

    weights: (B, n) tensor; each row sums to one with exactly k nonzeros.
    selected: (B, k) int array of chosen expert ids, ascending per row.
    argmax_expert: (B,) int array, the top expert by raw router output.
    raw_router_output: (B, n) detached copy of the pre-gating logits.
    """

    weights: Tensor
    selected: np.ndarray
    argmax_expert: np.ndarray
    raw_router_output: np.ndarray


def route(
    router: Sequential,
    z: Tensor,
    n: int,
    k: int,
    mode: str = "default",
) -> GatingDecision:
    """Top-k gate the router's logits for a batch of style embeddings.

    ``default`` softmaxes the k selected raw logits. ``literal`` first
    softmaxes all logits, keeps the top k of those probabilities, and
    softmaxes the kept values again. Ties select the lower expert index.
    """
    if k > n:
        raise ConfigError("k", f"top-k {k} exceeds expert count {n}")
    if k < 1:
        raise ConfigError("k", f"top-k must be positive, got {k}")
    logits = router(z)
    if logits.data.ndim != 2 or logits.data.shape[1] != n:
        raise ShapeError(f"route: router produced {logits.data.shape}, expected (B, {n})")
    if mode == "default":
        weights = ad.topk_softmax(logits, k)
    elif mode == "literal":
        weights = ad.topk_softmax(ad.softmax(logits), k)
    else:
        raise ConfigError("routing_mode", f"unknown mode {mode!r}")

    raw = logits.data.copy()
    order = np.argsort(-raw, axis=1, kind="stable")
    selected = np.sort(order[:, :k], axis=1)
    argmax = order[:, 0].copy()
    return GatingDecision(weights, selected, argmax, raw)


def _residual_bank(
    experts: list[Sequential],
) -> tuple[list[Tensor], list[Tensor]] | None:
    """Kernel/bias tensors when every expert is a lone residual 3x3 conv."""
    ws, bs = [], []
    for expert in experts:
        if not (
            isinstance(expert, Sequential)
            and len(expert.layers) == 1
            and isinstance(expert.layers[0], ResidualConv3x3)
        ):
            return None
        ws.append(expert.layers[0].conv.w)
        bs.append(expert.layers[0].conv.b)
    return ws, bs


def moe_forward(
    experts: list[Sequential],
    features: Tensor,
    gating: GatingDecision | None,
    branch: str,
) -> Tensor:
    """Run features through the expert bank.

    The original branch is pinned to expert 0. The augmented branch is the
    gating-weighted sum of the selected experts' outputs. A bank of lone
    residual 3x3 convs (the default expert shape) is mixed in one fused
    pass; any other expert architecture falls back to a per-expert loop
    that skips experts no sample selected.
    """
    if branch == "original":
        return experts[0](features)
    if branch != "augmented":
        raise ContractError(f"unknown branch {branch!r}")
    if gating is None:
        raise ContractError("augmented branch requires a gating decision")

    bank = _residual_bank(experts)
    if bank is not None:
        return ad.residual_mixture_conv3x3(features, gating.weights, *bank)

    mixed: Tensor | None = None
    w = gating.weights.data
    for i, expert in enumerate(experts):
        if not np.any(w[:, i] > 0):
            continue
        term = ad.scale_rows(expert(features), ad.take_col(gating.weights, i))
        mixed = term if mixed is None else mixed + term
    if mixed is None:
        raise ContractError("gating selected no experts")
    return mixed


class ConfounderSet:
    """Per-expert running style moments (the discrete confounder strata).

    Entries start uninitialized; the first observed batch statistic is taken
    verbatim, after which updates blend ``(1 - tau) * batch + tau * previous``.
    The buffers are constants with respect to differentiation.
    """

    def __init__(self, n: int, channels: int, tau: float = 0.9):
        if n < 1:
            raise ConfigError("n", f"need at least one stratum, got {n}")
        if channels < 1:
            raise ConfigError("channels", f"invalid channel count {channels}")
        if not 0.0 <= tau < 1.0:
            raise ConfigError("tau", f"{tau} outside [0, 1)")
        self.n = n
        self.channels = channels
        self.tau = tau
        self.mu = np.zeros((n, channels), dtype=np.float64)
        self.sigma = np.zeros((n, channels), dtype=np.float64)
        self.initialized = np.zeros(n, dtype=bool)

    @property
    def prior(self) -> float:
        """Uniform stratum prior 1/n used by the intervention layer."""
        return 1.0 / self.n

    def initialized_strata(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.initialized)]

    def snapshot(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "initialized": [bool(v) for v in self.initialized],
        }

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self.mu.tobytes())
        h.update(self.sigma.tobytes())
        h.update(self.initialized.tobytes())
        return h.hexdigest()


def update_confounder_set(
    conf: ConfounderSet, f_e: Tensor, gating: GatingDecision
) -> ConfounderSet:
    """Fold a batch of mixed expert features into the running strata.

    Samples are grouped by their argmax expert; each group's mean channel
    moments update that expert's entry. Experts with no samples this batch
    are untouched. Statistics are read from the raw array, so no gradient
    reaches the buffers.
    """
    if f_e.data.ndim != 4 or f_e.data.shape[1] != conf.channels:
        raise ShapeError(
            f"update_confounder_set: features {f_e.data.shape} vs "
            f"{conf.channels} channels"
        )
    arr = f_e.data
    mu_b = arr.mean(axis=(2, 3))
    sigma_b = arr.std(axis=(2, 3))
    for s in range(conf.n):
        mask = gating.argmax_expert == s
        if not mask.any():
            continue
        m = mu_b[mask].mean(axis=0)
        sd = sigma_b[mask].mean(axis=0)
        if conf.initialized[s]:
            conf.mu[s] = (1.0 - conf.tau) * m + conf.tau * conf.mu[s]
            conf.sigma[s] = (1.0 - conf.tau) * sd + conf.tau * conf.sigma[s]
        else:
            conf.mu[s] = m
            conf.sigma[s] = sd
            conf.initialized[s] = True
    return conf


def load_balance_loss(gating: GatingDecision) -> Tensor:
    """Squared coefficient of variation of per-expert importance.

    Importance is the column sum of post-gating weights. Uniform importance
    gives zero; the loss is invariant to rescaling all importances.
    """
    importance = ad.sum_axis0(gating.weights)
    if not np.any(importance.data > 0):
        return Tensor(0.0)
    mean = ad.mean_all(importance)
    centered = importance - mean
    variance = ad.mean_all(centered * centered)
    return variance / (mean * mean)
