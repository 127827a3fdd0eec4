"""Network skeleton: shallow encoder, expert bank, deep encoder, classifier head.

The backbone is a stack of conv blocks (3x3 conv, ReLU, 2x2 average pool
while the spatial extent allows it). ``expert_point`` picks the block
after which the expert bank sits, so sweeping it moves the expert bank
through an otherwise identical architecture. Global average pooling feeds
the linear head; there is no batch normalization anywhere, which keeps a
sample's features independent of its batch companions and reruns exactly
reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .layers import (
    AvgPool2,
    Conv3x3,
    Dense,
    GlobalAvgPool,
    ReLU,
    ResidualConv3x3,
    Sequential,
)
from .rng import stream_rng

CHECKPOINT_FORMAT = "sdcl-checkpoint-v1"


@dataclass
class ModelSpec:
    """Architecture description; the parameter count is a pure function of it."""

    input_shape: tuple[int, int, int] = (3, 16, 16)
    stem_blocks: int = 2
    expert_point: int = 1
    deep_blocks: int = 2
    channels: tuple[int, ...] = (16, 32, 32, 64)
    num_classes: int = 4
    n_experts: int = 6
    top_k: int = 4
    use_sgem: bool = True
    routing_mode: str = "default"

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        self.channels = tuple(self.channels)

    @property
    def total_blocks(self) -> int:
        return self.stem_blocks + self.deep_blocks

    def validate(self) -> None:
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise ConfigError("model.input_shape", f"invalid {self.input_shape}")
        if self.stem_blocks < 0 or self.deep_blocks < 0 or self.total_blocks < 1:
            raise ConfigError("model.stem_blocks", "need at least one conv block")
        if not 1 <= self.expert_point <= self.total_blocks:
            raise ConfigError(
                "model.expert_point",
                f"{self.expert_point} outside [1, {self.total_blocks}]",
            )
        if len(self.channels) != self.total_blocks:
            raise ConfigError(
                "model.channels",
                f"{len(self.channels)} entries for {self.total_blocks} blocks",
            )
        if any(c < 1 for c in self.channels):
            raise ConfigError("model.channels", "channel counts must be positive")
        if self.num_classes < 2:
            raise ConfigError("model.num_classes", "need at least two classes")
        if self.n_experts < 1:
            raise ConfigError("n", "need at least one expert")
        if not 1 <= self.top_k <= self.n_experts:
            raise ConfigError("k", f"{self.top_k} outside [1, {self.n_experts}]")
        if self.routing_mode not in ("default", "literal"):
            raise ConfigError("routing_mode", f"unknown mode {self.routing_mode!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["channels"] = list(self.channels)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        known = {f for f in ModelSpec.__dataclass_fields__}
        for key in d:
            if key not in known:
                raise ConfigError(f"model.{key}", "unknown field")
        return ModelSpec(**d)

    def expert_channels(self) -> int:
        return self.channels[self.expert_point - 1]

    def block_pool_plan(self) -> list[bool]:
        """Whether each block ends in a 2x2 pool, given the input extent."""
        _, h, w = self.input_shape
        plan = []
        for _ in range(self.total_blocks):
            pool = h >= 2 and w >= 2 and h % 2 == 0 and w % 2 == 0
            plan.append(pool)
            if pool:
                h, w = h // 2, w // 2
        return plan


class Model:
    """Holds the four trainable stages plus the expert bank and router."""

    def __init__(
        self,
        spec: ModelSpec,
        shallow: Sequential,
        experts: list[Sequential],
        router: Sequential | None,
        deep: Sequential,
        head: Dense,
    ):
        self.spec = spec
        self.shallow = shallow
        self.experts = experts
        self.router = router
        self.deep = deep
        self.head = head
        self.confounders = None  # set by the trainer when SGEM is enabled

    def named_params(self) -> list[tuple[str, Tensor]]:
        groups: list[tuple[str, list[tuple[str, Tensor]]]] = [
            ("shallow", self.shallow.params())
        ]
        for i, expert in enumerate(self.experts):
            groups.append((f"experts.{i}", expert.params()))
        if self.router is not None:
            groups.append(("router", self.router.params()))
        groups.append(("deep", self.deep.params()))
        groups.append(("head", self.head.params()))
        return [(f"{g}.{n}", p) for g, items in groups for n, p in items]

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_params()]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def deep_logits(self, features: Tensor) -> Tensor:
        """Run expert-level features through the deep encoder and head."""
        return self.head(self.deep(features))


def build_model(spec: ModelSpec, seed: int) -> Model:
    """Deterministically initialize a model from its spec and a seed.

    Weights use fan-in-scaled normal draws, biases start at zero, and the
    draw order is fixed (blocks, experts, router, head) so equal seeds give
    bit-identical parameters.
    """
    spec.validate()
    rng = stream_rng(seed, "params")
    pool_plan = spec.block_pool_plan()

    blocks: list[Sequential] = []
    prev = spec.input_shape[0]
    for i in range(spec.total_blocks):
        stages: list = [Conv3x3(prev, spec.channels[i], rng), ReLU()]
        if pool_plan[i]:
            stages.append(AvgPool2())
        blocks.append(Sequential(stages))
        prev = spec.channels[i]

    shallow = Sequential(blocks[: spec.expert_point])
    deep = Sequential(blocks[spec.expert_point :] + [GlobalAvgPool()])

    c_e = spec.expert_channels()
    n = spec.n_experts if spec.use_sgem else 1
    experts = [Sequential([ResidualConv3x3(c_e, rng)]) for _ in range(n)]

    router = None
    if spec.use_sgem:
        hidden = 4 * spec.n_experts
        router = Sequential(
            [Dense(2 * c_e, hidden, rng), ReLU(), Dense(hidden, spec.n_experts, rng)]
        )

    head = Dense(spec.channels[-1], spec.num_classes, rng)
    return Model(spec, shallow, experts, router, deep, head)


def forward_inference(model: Model, images: Tensor) -> Tensor:
    """Pure inference: shallow encoder, routed expert mixing, deep encoder, head.

    No confounder update and no fusion happen here; repeated calls on the
    same input return bit-identical logits.
    """
    from . import sgem  # late import; sgem depends on nets types in its API

    if images.data.ndim != 4 or images.data.shape[1:] != model.spec.input_shape:
        raise ShapeError(
            f"forward_inference: batch {images.data.shape} does not match "
            f"input shape {model.spec.input_shape}"
        )
    f = model.shallow(images)
    if model.spec.use_sgem:
        z = sgem.style_embedding(f)
        gating = sgem.route(
            model.router, z, model.spec.n_experts, model.spec.top_k,
            model.spec.routing_mode,
        )
        f_e = sgem.moe_forward(model.experts, f, gating, "augmented")
    else:
        f_e = model.experts[0](f)
    return model.deep_logits(f_e)


# -- checkpoint wire format ----------------------------------------------------
#
# One file: a single JSON header line, then the concatenation of all
# parameter arrays as little-endian float64. The header carries the model
# spec, a manifest of (name, shape, offset-in-elements), and any confounder
# state (its arrays live in the same payload under reserved names).


def save_checkpoint(model: Model, path: str, confounders=None) -> None:
    entries = list(model.named_params())
    arrays: list[np.ndarray] = []
    manifest = []
    offset = 0
    for name, p in entries:
        manifest.append({"name": name, "shape": list(p.shape), "offset": offset})
        arrays.append(p.data.reshape(-1))
        offset += p.size

    conf_meta = None
    if confounders is None:
        confounders = model.confounders
    if confounders is not None:
        for name, arr in (("confounders.mu", confounders.mu),
                          ("confounders.sigma", confounders.sigma)):
            manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
            arrays.append(arr.reshape(-1).astype(np.float64))
            offset += arr.size
        conf_meta = {
            "n": confounders.n,
            "channels": confounders.channels,
            "tau": confounders.tau,
            "initialized": [bool(v) for v in confounders.initialized],
        }

    header = {
        "format": CHECKPOINT_FORMAT,
        "spec": model.spec.to_dict(),
        "manifest": manifest,
        "confounders": conf_meta,
    }
    payload = np.concatenate(arrays) if arrays else np.zeros(0)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode())
        fh.write(b"\n")
        fh.write(payload.astype("<f8").tobytes())


def load_checkpoint(path: str):
    """Rebuild a model (and confounder state, if saved) from a checkpoint.

    Returns (model, confounders-or-None). Parameters are restored byte for
    byte, so a round trip preserves outputs exactly.
    """
    from .sgem import ConfounderSet

    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    header = json.loads(header_line.decode())
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError("checkpoint", f"unrecognized format in {path}")
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)

    spec = ModelSpec.from_dict(header["spec"])
    model = build_model(spec, seed=0)
    by_name = {e["name"]: e for e in header["manifest"]}
    for name, p in model.named_params():
        entry = by_name.get(name)
        if entry is None or tuple(entry["shape"]) != p.shape:
            raise ConfigError("checkpoint", f"parameter {name} missing or mismatched")
        start = entry["offset"]
        p.data = flat[start : start + p.size].reshape(p.shape).copy()

    conf = None
    meta = header.get("confounders")
    if meta is not None:
        conf = ConfounderSet(meta["n"], meta["channels"], tau=meta["tau"])
        for name, target in (("confounders.mu", conf.mu), ("confounders.sigma", conf.sigma)):
            entry = by_name[name]
            start = entry["offset"]
            target[...] = flat[start : start + target.size].reshape(target.shape)
        conf.initialized[...] = np.array(meta["initialized"], dtype=bool)
        model.confounders = conf
    return model, conf
