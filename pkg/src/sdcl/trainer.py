"""Two-branch training loop, evaluation, ablations, and parameter sweeps.

Each step draws a batch, builds its photometric twin, encodes both with
the shallow stage, pins the original branch to expert 0 while routing the
twin by style, folds the twin's mixed features into the confounder set,
optionally replaces the twin's pathway with the fused intervention
features, and optimizes cross-entropy on both branches plus the balance
regularizer. The total loss is exactly task_ori + task_aug + lambda * reg
at every step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .bdcl import FusionConfig, causal_fuse
from .config import RunConfig
from .data import LabeledBatch, generate_benchmark, style_jitter
from .errors import ConfigError, DomainError, NumericError
from .nets import Model, build_model, forward_inference
from .rng import stream_rng, stream_seed
from .sgem import (
    ConfounderSet,
    load_balance_loss,
    moe_forward,
    route,
    style_embedding,
    update_confounder_set,
)

SWEEPABLE = ("n", "k", "alpha", "expert_point")


# -- optimizers -----------------------------------------------------------------


class SGD:
    def __init__(self, params: list[Tensor], lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data = p.data - self.lr * v


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1 ** self.t)
            vhat = v / (1 - self.b2 ** self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(params: list[Tensor], cfg) -> "Adam | SGD":
    if cfg.name == "adam":
        return Adam(params, lr=cfg.lr, betas=cfg.betas)
    return SGD(params, lr=cfg.lr, momentum=cfg.momentum)


# -- reports ---------------------------------------------------------------------


@dataclass
class DomainMetrics:
    accuracy: float
    per_class: list[float]
    spread: dict

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "per_class": self.per_class,
                "spread": self.spread}


@dataclass
class TrainReport:
    epoch_losses: list[dict]
    step_losses: list[dict]
    domain_metrics: dict[str, DomainMetrics]
    confounder_snapshots: list[dict]
    wall_time_s: float
    config: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "epoch_losses": self.epoch_losses,
            "step_losses": self.step_losses,
            "domains": {k: m.to_dict() for k, m in self.domain_metrics.items()},
            "confounder_snapshots": self.confounder_snapshots,
            "wall_time_s": self.wall_time_s,
        }

    def comparable_dict(self) -> dict:
        """The report without its timing field, for determinism checks."""
        d = self.to_dict()
        d.pop("wall_time_s")
        return d


# -- the step ---------------------------------------------------------------------


def training_step_loss(
    model: Model,
    conf: ConfounderSet | None,
    x_ori: Tensor,
    x_aug: Tensor,
    labels: np.ndarray,
    cfg: RunConfig,
    noise_seed: int,
    update_confounders: bool = True,
):
    """One step's loss graph. Returns (total, parts, gating).

    The confounder update reads detached statistics and happens before
    fusion, so fusion always sees this batch folded in. With
    ``update_confounders`` false the stored strata are used as-is, which
    makes the loss a fixed differentiable function of the parameters.
    """
    f_ori = model.shallow(x_ori)
    f_aug = model.shallow(x_aug)
    fe_ori = moe_forward(model.experts, f_ori, None, "original")

    gating = None
    if cfg.enable_sgem:
        z = style_embedding(f_aug)
        gating = route(model.router, z, cfg.n, cfg.k, cfg.routing_mode)
        fe_aug = moe_forward(model.experts, f_aug, gating, "augmented")
        if update_confounders:
            update_confounder_set(conf, fe_aug, gating)
    else:
        fe_aug = moe_forward(model.experts, f_aug, None, "original")

    aug_path = fe_aug
    if cfg.effective_bdcl() and cfg.aug_loss == "cau":
        aug_path = causal_fuse(
            fe_aug, conf, FusionConfig(cfg.alpha), cfg.noise, noise_seed
        )

    logits_ori = model.deep_logits(fe_ori)
    logits_aug = model.deep_logits(aug_path)
    task_ori = ad.cross_entropy(logits_ori, labels)
    task_aug = ad.cross_entropy(logits_aug, labels)
    if cfg.enable_sgem:
        reg = load_balance_loss(gating)
    else:
        reg = Tensor(0.0)
    total = task_ori + task_aug + reg * cfg.reg_lambda
    parts = {
        "task_ori": task_ori.item(),
        "task_aug": task_aug.item(),
        "reg": reg.item(),
        "total": total.item(),
    }
    return total, parts, gating


def train(
    cfg: RunConfig,
    datasets: tuple[LabeledBatch, dict[str, LabeledBatch]] | None = None,
) -> tuple[Model, TrainReport]:
    """Train a model under the config; returns it with its report.

    Everything random is derived from ``cfg.seed`` through named streams,
    so two calls with equal configs produce bit-identical models and
    reports (timing aside). ``datasets`` may carry a pre-generated
    benchmark for the config's data stream; generation is deterministic
    per seed, so multi-variant studies reuse one copy per seed without
    changing any result.
    """
    cfg.validate()
    started = time.perf_counter()

    if datasets is None:
        bench_spec = replace(cfg.benchmark, seed=stream_seed(cfg.seed, "data"))
        datasets = generate_benchmark(bench_spec)
    train_split, test_splits = datasets

    model = build_model(cfg.resolved_model_spec(), cfg.seed)
    conf = None
    if cfg.enable_sgem:
        conf = ConfounderSet(cfg.n, model.spec.expert_channels(), cfg.tau)
        model.confounders = conf

    optimizer = make_optimizer(model.parameters(), cfg.optimizer)
    order_rng = stream_rng(cfg.seed, "data-order")

    step_losses: list[dict] = []
    epoch_losses: list[dict] = []
    snapshots: list[dict] = []
    count = len(train_split)
    step_index = 0
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(count)
        sums = {"task_ori": 0.0, "task_aug": 0.0, "reg": 0.0, "total": 0.0}
        steps_here = 0
        for start in range(0, count, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = train_split.subset(idx)
            twin = style_jitter(
                batch, cfg.jitter_strength, stream_seed(cfg.seed, f"jitter/{step_index}")
            )
            noise_seed = stream_seed(cfg.seed, f"noise/{step_index}")
            try:
                total, parts, _ = training_step_loss(
                    model, conf, batch.images, twin.images, batch.labels,
                    cfg, noise_seed,
                )
            except NumericError as err:
                last = step_losses[-1] if step_losses else None
                raise NumericError(
                    f"non-finite value at epoch {epoch}, step {step_index} "
                    f"(batch of {len(idx)}, jitter {cfg.jitter_strength}, "
                    f"previous step losses {last}): {err}"
                ) from err
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            parts["epoch"] = epoch
            parts["step"] = step_index
            step_losses.append(parts)
            for key in sums:
                sums[key] += parts[key]
            steps_here += 1
            step_index += 1
        epoch_losses.append(
            {"epoch": epoch, **{k: v / max(1, steps_here) for k, v in sums.items()}}
        )
        if conf is not None:
            snapshots.append(conf.snapshot())

    metrics = evaluate(model, test_splits)
    report = TrainReport(
        epoch_losses=epoch_losses,
        step_losses=step_losses,
        domain_metrics=metrics,
        confounder_snapshots=snapshots,
        wall_time_s=time.perf_counter() - started,
        config=cfg.to_dict(),
    )
    return model, report


def evaluate(
    model: Model, splits: dict[str, LabeledBatch], batch_size: int = 256
) -> dict[str, DomainMetrics]:
    """Pure-inference metrics per domain: accuracy, per-class, class spread."""
    out: dict[str, DomainMetrics] = {}
    for name, split in splits.items():
        if len(split) == 0:
            raise DomainError(f"evaluation split {name!r} is empty")
        preds = np.zeros(len(split), dtype=np.int64)
        for start in range(0, len(split), batch_size):
            idx = np.arange(start, min(start + batch_size, len(split)))
            logits = forward_inference(model, Tensor(split.images.data[idx]))
            preds[idx] = np.argmax(logits.data, axis=1)
        correct = preds == split.labels
        k = model.spec.num_classes
        per_class = []
        for c in range(k):
            mask = split.labels == c
            per_class.append(float(correct[mask].mean()) if mask.any() else 0.0)
        arr = np.array(per_class)
        spread = {
            "min": float(arr.min()),
            "q1": float(np.percentile(arr, 25)),
            "median": float(np.percentile(arr, 50)),
            "q3": float(np.percentile(arr, 75)),
            "max": float(arr.max()),
            "width": float(arr.max() - arr.min()),
        }
        out[name] = DomainMetrics(
            accuracy=float(correct.mean()), per_class=per_class, spread=spread
        )
    return out


# -- study designs ------------------------------------------------------------------


VARIANTS = (
    ("base", False, False),
    ("base_sg", True, False),
    ("sdcl", True, True),
)


@dataclass
class AblationResult:
    runs: list[dict]      # one row per (variant, seed)
    summary: list[dict]   # one row per variant

    def mean_accuracy(self, variant: str, domain: str = "decorrelated") -> float:
        rows = [r for r in self.runs if r["variant"] == variant and r["domain"] == domain]
        return float(np.mean([r["accuracy"] for r in rows]))


def ablate(cfg: RunConfig, seeds: list[int]) -> AblationResult:
    """Train base, base+routing, and the full pipeline on shared seeds."""
    if not seeds:
        raise ConfigError("seeds", "ablation needs at least one seed")
    runs: list[dict] = []
    data_cache: dict[int, tuple] = {}
    for name, sgem_on, bdcl_on in VARIANTS:
        for seed in seeds:
            variant_cfg = replace(
                cfg, seed=seed, enable_sgem=sgem_on, enable_bdcl=bdcl_on
            )
            if seed not in data_cache:
                data_cache[seed] = generate_benchmark(
                    replace(cfg.benchmark, seed=stream_seed(seed, "data"))
                )
            _, report = train(variant_cfg, datasets=data_cache[seed])
            for domain, m in report.domain_metrics.items():
                runs.append({
                    "variant": name,
                    "seed": seed,
                    "domain": domain,
                    "accuracy": m.accuracy,
                    "spread_width": m.spread["width"],
                })
    summary = []
    for name, _, _ in VARIANTS:
        accs = [r["accuracy"] for r in runs
                if r["variant"] == name and r["domain"] == "decorrelated"]
        summary.append({
            "variant": name,
            "mean_accuracy": float(np.mean(accs)),
            "std_accuracy": float(np.std(accs)),
            "seeds": len(accs),
        })
    return AblationResult(runs=runs, summary=summary)


@dataclass
class SweepResult:
    param: str
    rows: list[dict]


def _with_param(cfg: RunConfig, param: str, value) -> RunConfig:
    if param == "n":
        return replace(cfg, n=int(value))
    if param == "k":
        return replace(cfg, k=int(value))
    if param == "alpha":
        return replace(cfg, alpha=float(value))
    if param == "expert_point":
        return replace(cfg, model=replace(cfg.model, expert_point=int(value)))
    raise ConfigError("param", f"sweepable parameters are {SWEEPABLE}, got {param!r}")


def sweep(cfg: RunConfig, param: str, values: list, seeds: list[int]) -> SweepResult:
    """Mean and std accuracy per parameter value, over shared seeds."""
    if param not in SWEEPABLE:
        raise ConfigError("param", f"sweepable parameters are {SWEEPABLE}, got {param!r}")
    if not values:
        raise ConfigError("values", "sweep needs at least one value")
    if not seeds:
        raise ConfigError("seeds", "sweep needs at least one seed")
    rows = []
    data_cache: dict[int, tuple] = {}
    for value in values:
        swept = _with_param(cfg, param, value)
        swept.validate()
        per_domain: dict[str, list[float]] = {}
        for seed in seeds:
            if seed not in data_cache:
                data_cache[seed] = generate_benchmark(
                    replace(cfg.benchmark, seed=stream_seed(seed, "data"))
                )
            _, report = train(replace(swept, seed=seed), datasets=data_cache[seed])
            for domain, m in report.domain_metrics.items():
                per_domain.setdefault(domain, []).append(m.accuracy)
        for domain, accs in per_domain.items():
            rows.append({
                "param": param,
                "value": value,
                "domain": domain,
                "mean_accuracy": float(np.mean(accs)),
                "std_accuracy": float(np.std(accs)),
                "seeds": len(accs),
            })
    return SweepResult(param=param, rows=rows)
