"""Run configuration: parsing, validation, and dotted-path overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .bdcl import NoisePolicy
from .data import BenchmarkSpec
from .errors import ConfigError
from .nets import ModelSpec

# JSON spelling of attributes that cannot be Python identifiers.
_JSON_ALIASES = {"lambda": "reg_lambda"}
_ATTR_TO_JSON = {v: k for k, v in _JSON_ALIASES.items()}


@dataclass
class OptimizerConfig:
    name: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    betas: tuple[float, float] = (0.9, 0.999)

    def __post_init__(self):
        self.betas = tuple(self.betas)

    def validate(self) -> None:
        if self.name not in ("adam", "sgd"):
            raise ConfigError("optimizer.name", f"unknown optimizer {self.name!r}")
        if self.lr <= 0:
            raise ConfigError("optimizer.lr", f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("optimizer.momentum", f"{self.momentum} outside [0, 1)")
        b1, b2 = self.betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ConfigError("optimizer.betas", f"{self.betas} outside [0, 1)")


@dataclass
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    benchmark: BenchmarkSpec = field(default_factory=BenchmarkSpec)
    n: int = 6
    k: int = 4
    alpha: float = 0.7
    tau: float = 0.9
    reg_lambda: float = 1.0
    noise: NoisePolicy = field(default_factory=NoisePolicy)
    routing_mode: str = "default"
    aug_loss: str = "cau"
    enable_sgem: bool = True
    enable_bdcl: bool = True
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    epochs: int = 13
    batch_size: int = 64
    seed: int = 0
    jitter_strength: float = 0.15
    output_dir: str = "runs/out"

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError("n", f"need at least one expert, got {self.n}")
        if not 1 <= self.k <= self.n:
            raise ConfigError("k", f"{self.k} outside [1, {self.n}]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha", f"{self.alpha} outside [0, 1]")
        if not 0.0 <= self.tau < 1.0:
            raise ConfigError("tau", f"{self.tau} outside [0, 1)")
        if self.reg_lambda < 0:
            raise ConfigError("lambda", f"negative weight {self.reg_lambda}")
        if self.routing_mode not in ("default", "literal"):
            raise ConfigError("routing_mode", f"unknown mode {self.routing_mode!r}")
        if self.aug_loss not in ("cau", "raw"):
            raise ConfigError("aug_loss", f"unknown value {self.aug_loss!r}")
        if self.epochs < 0:
            raise ConfigError("epochs", f"negative epoch count {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError("batch_size", f"batch size must be positive, got {self.batch_size}")
        if self.jitter_strength < 0:
            raise ConfigError("jitter_strength", f"negative strength {self.jitter_strength}")
        if not self.output_dir:
            raise ConfigError("output_dir", "must not be empty")
        self.noise.validate()
        self.optimizer.validate()
        if self.model.num_classes != self.benchmark.num_classes:
            raise ConfigError(
                "model.num_classes",
                f"{self.model.num_classes} != benchmark.num_classes "
                f"{self.benchmark.num_classes}",
            )
        if self.model.input_shape != self.benchmark.image_size:
            raise ConfigError(
                "model.input_shape",
                f"{self.model.input_shape} != benchmark.image_size "
                f"{self.benchmark.image_size}",
            )
        self.resolved_model_spec().validate()
        self.benchmark.validate()

    def effective_bdcl(self) -> bool:
        # Fusion has nothing to marginalize over without the expert strata.
        return self.enable_bdcl and self.enable_sgem

    def resolved_model_spec(self) -> ModelSpec:
        """The model spec with expert wiring filled in from the run level."""
        return replace(
            self.model,
            n_experts=self.n,
            top_k=self.k,
            use_sgem=self.enable_sgem,
            routing_mode=self.routing_mode,
        )

    def to_dict(self) -> dict:
        out = {}
        for name in RunConfig.__dataclass_fields__:
            value = getattr(self, name)
            key = _ATTR_TO_JSON.get(name, name)
            if name == "model":
                out[key] = value.to_dict()
            elif name == "benchmark":
                out[key] = value.to_dict()
            elif name == "noise":
                out[key] = {"mode": value.mode, "scale": value.scale,
                            "bounds": list(value.bounds)}
            elif name == "optimizer":
                out[key] = {"name": value.name, "lr": value.lr,
                            "momentum": value.momentum, "betas": list(value.betas)}
            else:
                out[key] = value
        return out

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        known = set(RunConfig.__dataclass_fields__)
        kwargs = {}
        for key, value in d.items():
            attr = _JSON_ALIASES.get(key, key)
            if attr not in known:
                raise ConfigError(key, "unknown config key")
            if attr == "model":
                value = ModelSpec.from_dict(value)
            elif attr == "benchmark":
                value = BenchmarkSpec.from_dict(value)
            elif attr == "noise":
                extra = set(value) - {"mode", "scale", "bounds"}
                if extra:
                    raise ConfigError(f"noise.{sorted(extra)[0]}", "unknown field")
                value = NoisePolicy(
                    mode=value.get("mode", "bounded"),
                    scale=value.get("scale", 0.1),
                    bounds=tuple(value.get("bounds", (0.5, 1.5))),
                )
            elif attr == "optimizer":
                extra = set(value) - {"name", "lr", "momentum", "betas"}
                if extra:
                    raise ConfigError(f"optimizer.{sorted(extra)[0]}", "unknown field")
                value = OptimizerConfig(
                    name=value.get("name", "adam"),
                    lr=value.get("lr", 1e-3),
                    momentum=value.get("momentum", 0.9),
                    betas=tuple(value.get("betas", (0.9, 0.999))),
                )
            kwargs[attr] = value
        return RunConfig(**kwargs)

    @staticmethod
    def from_json(path: str) -> "RunConfig":
        with open(path) as fh:
            payload = json.load(fh)
        # A manifest written by a previous run is accepted directly, so any
        # command can be replayed from its manifest.
        if "resolved_config" in payload:
            payload = payload["resolved_config"]
        return RunConfig.from_dict(payload)


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: RunConfig, pairs: list[str]) -> RunConfig:
    """Apply dotted-path key=value overrides on top of a parsed config."""
    data = cfg.to_dict()
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(pair, "override must look like key=value")
        key, _, raw = pair.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(pair, "override must name a key")
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(key, "unknown config key")
            node = node[part]
        leaf = parts[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(key, "unknown config key")
        node[leaf] = _parse_override_value(raw)
    return RunConfig.from_dict(data)
