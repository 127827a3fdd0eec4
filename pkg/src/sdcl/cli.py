"""Command-line entry point.

Verbs: train, eval, oracle, ablate, sweep, dump-styles, export-data.
Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid config.
Every successful command writes a manifest.json into its output directory
echoing the fully resolved configuration; passing that manifest back as
--config (or --scm for oracle) replays the command bit-identically. No
command writes outside its output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import scm as scm_mod
from .autodiff import Tensor
from .config import RunConfig, apply_overrides
from .data import export_split, generate_benchmark
from .errors import ConfigError, SdclError
from .nets import load_checkpoint, save_checkpoint
from .rng import stream_seed
from .sgem import route, style_embedding
from .trainer import ablate, evaluate, sweep, train


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdcl",
        description="Style-deconfounded expert routing: training, oracles, studies.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_config_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="JSON config or a manifest.json")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-path config override, repeatable")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--routing", choices=["default", "literal"], default=None)
        p.add_argument("--aug-loss", choices=["cau", "raw"], default=None)
        p.add_argument("--noise", choices=["off", "bounded", "literal"], default=None)

    p_train = sub.add_parser("train", help="train one model")
    add_config_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the benchmark")
    add_config_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)

    p_oracle = sub.add_parser("oracle", help="exact tables for a discrete SCM")
    p_oracle.add_argument("--scm", required=True, help="SCM spec JSON or a manifest.json")
    p_oracle.add_argument("--out", default="runs/oracle")

    p_ablate = sub.add_parser("ablate", help="base / routing-only / full pipeline study")
    add_config_flags(p_ablate)
    p_ablate.add_argument("--seeds", default="0,1,2,3,4",
                          help="comma-separated master seeds")

    p_sweep = sub.add_parser("sweep", help="sweep one parameter over values and seeds")
    add_config_flags(p_sweep)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--seeds", default="0,1,2")

    p_dump = sub.add_parser("dump-styles", help="per-sample style embeddings as CSV")
    add_config_flags(p_dump)
    p_dump.add_argument("--checkpoint", required=True)
    p_dump.add_argument("--split", default="train",
                        help="train or a test domain name")

    p_export = sub.add_parser("export-data", help="write the benchmark splits to disk")
    add_config_flags(p_export)

    return parser


def _load_config(args) -> RunConfig:
    try:
        cfg = RunConfig.from_json(args.config)
    except json.JSONDecodeError as err:
        raise ConfigError(args.config, f"not valid JSON: {err}") from err
    pairs = list(args.override)
    if args.seed is not None:
        pairs.append(f"seed={args.seed}")
    if args.routing is not None:
        pairs.append(f"routing_mode={args.routing}")
    if getattr(args, "aug_loss", None) is not None:
        pairs.append(f"aug_loss={args.aug_loss}")
    if args.noise is not None:
        mode = "paper_literal" if args.noise == "literal" else args.noise
        pairs.append(f"noise.mode={mode}")
    cfg = apply_overrides(cfg, pairs)
    if args.out is not None:
        cfg.output_dir = args.out
    cfg.validate()
    return cfg


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_manifest(out_dir: str, verb: str, cfg: RunConfig | None,
                    outputs: list[str], extra: dict | None = None) -> None:
    manifest = {"verb": verb, "outputs": outputs}
    if cfg is not None:
        resolved = cfg.to_dict()
        resolved["output_dir"] = out_dir
        manifest["resolved_config"] = resolved
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def _metrics_rows(metrics) -> tuple[list[list], list[list]]:
    summary = []
    per_class = []
    for domain in sorted(metrics):
        m = metrics[domain]
        s = m.spread
        summary.append([domain, f"{m.accuracy:.10f}", f"{s['min']:.10f}",
                        f"{s['q1']:.10f}", f"{s['median']:.10f}", f"{s['q3']:.10f}",
                        f"{s['max']:.10f}", f"{s['width']:.10f}"])
        for c, acc in enumerate(m.per_class):
            per_class.append([domain, c, f"{acc:.10f}"])
    return summary, per_class


_METRIC_HEADER = ["domain", "accuracy", "spread_min", "spread_q1",
                  "spread_median", "spread_q3", "spread_max", "spread_width"]


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    model, report = train(cfg)
    save_checkpoint(model, os.path.join(out, "model.ckpt"))
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
    _write_csv(
        os.path.join(out, "losses.csv"),
        ["epoch", "task_ori", "task_aug", "reg", "total"],
        [[e["epoch"], f"{e['task_ori']:.10f}", f"{e['task_aug']:.10f}",
          f"{e['reg']:.10f}", f"{e['total']:.10f}"] for e in report.epoch_losses],
    )
    summary, per_class = _metrics_rows(report.domain_metrics)
    _write_csv(os.path.join(out, "metrics.csv"), _METRIC_HEADER, summary)
    _write_csv(os.path.join(out, "per_class.csv"), ["domain", "class", "accuracy"], per_class)
    _write_manifest(out, "train", cfg,
                    ["model.ckpt", "report.json", "losses.csv", "metrics.csv",
                     "per_class.csv"])
    for row in summary:
        print(f"{row[0]}: accuracy {row[1]}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    model, _ = load_checkpoint(args.checkpoint)
    bench_spec_seeded = _seeded_benchmark(cfg)
    _, test_splits = generate_benchmark(bench_spec_seeded)
    metrics = evaluate(model, test_splits)
    summary, per_class = _metrics_rows(metrics)
    _write_csv(os.path.join(out, "metrics.csv"), _METRIC_HEADER, summary)
    _write_csv(os.path.join(out, "per_class.csv"), ["domain", "class", "accuracy"], per_class)
    _write_manifest(out, "eval", cfg, ["metrics.csv", "per_class.csv"],
                    {"checkpoint": args.checkpoint})
    for row in summary:
        print(f"{row[0]}: accuracy {row[1]}")
    return 0


def _seeded_benchmark(cfg: RunConfig):
    from dataclasses import replace
    return replace(cfg.benchmark, seed=stream_seed(cfg.seed, "data"))


def _cmd_oracle(args) -> int:
    with open(args.scm) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(args.scm, f"not valid JSON: {err}") from err
    if "scm" in payload and "verb" in payload:
        payload = payload["scm"]
    spec = scm_mod.SCMSpec.from_dict(payload)
    obs = scm_mod.observational_conditional(spec)
    do = scm_mod.interventional_distribution(spec)
    gaps = scm_mod.tv_gap(obs, do)

    table_rows = []
    for i, x in enumerate(spec.x_vals):
        for j, y in enumerate(spec.y_vals):
            table_rows.append([x, y, f"{obs.probs[i, j]:.12f}", f"{do.probs[i, j]:.12f}"])
    gap_rows = [[x, f"{g:.12f}"] for x, g in gaps.items()]

    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "tables.csv"),
               ["x", "y", "p_conditional", "p_interventional"], table_rows)
    _write_csv(os.path.join(args.out, "gap.csv"), ["x", "tv_gap"], gap_rows)
    _write_manifest(args.out, "oracle", None, ["tables.csv", "gap.csv"],
                    {"scm": spec.to_dict()})

    writer = csv.writer(sys.stdout)
    writer.writerow(["x", "y", "p_conditional", "p_interventional"])
    writer.writerows(table_rows)
    print()
    writer.writerow(["x", "tv_gap"])
    writer.writerows(gap_rows)
    return 0


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError as err:
        raise ConfigError("seeds", f"not a comma-separated int list: {text!r}") from err


def _cmd_ablate(args) -> int:
    cfg = _load_config(args)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    seeds = _parse_seeds(args.seeds)
    result = ablate(cfg, seeds)
    _write_csv(
        os.path.join(out, "ablation_runs.csv"),
        ["variant", "seed", "domain", "accuracy", "spread_width"],
        [[r["variant"], r["seed"], r["domain"], f"{r['accuracy']:.10f}",
          f"{r['spread_width']:.10f}"] for r in result.runs],
    )
    _write_csv(
        os.path.join(out, "ablation_summary.csv"),
        ["variant", "mean_accuracy", "std_accuracy", "seeds"],
        [[r["variant"], f"{r['mean_accuracy']:.10f}", f"{r['std_accuracy']:.10f}",
          r["seeds"]] for r in result.summary],
    )
    _write_manifest(out, "ablate", cfg, ["ablation_runs.csv", "ablation_summary.csv"],
                    {"seeds": seeds})
    for r in result.summary:
        print(f"{r['variant']}: {r['mean_accuracy']:.4f} +/- {r['std_accuracy']:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    seeds = _parse_seeds(args.seeds)
    values = [json.loads(v) for v in args.values.split(",") if v.strip() != ""]
    result = sweep(cfg, args.param, values, seeds)
    _write_csv(
        os.path.join(out, "sweep.csv"),
        ["param", "value", "domain", "mean_accuracy", "std_accuracy", "seeds"],
        [[r["param"], r["value"], r["domain"], f"{r['mean_accuracy']:.10f}",
          f"{r['std_accuracy']:.10f}", r["seeds"]] for r in result.rows],
    )
    _write_manifest(out, "sweep", cfg, ["sweep.csv"],
                    {"param": args.param, "values": values, "seeds": seeds})
    for r in result.rows:
        if r["domain"] == "decorrelated":
            print(f"{args.param}={r['value']}: {r['mean_accuracy']:.4f}")
    return 0


def _cmd_dump_styles(args) -> int:
    cfg = _load_config(args)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    model, _ = load_checkpoint(args.checkpoint)
    if not model.spec.use_sgem:
        raise ConfigError("enable_sgem", "checkpoint was trained without routing")
    train_split, test_splits = generate_benchmark(_seeded_benchmark(cfg))
    if args.split == "train":
        split = train_split
    elif args.split in test_splits:
        split = test_splits[args.split]
    else:
        raise ConfigError("split", f"unknown split {args.split!r}")

    rows = []
    batch = 256
    for start in range(0, len(split), batch):
        idx = np.arange(start, min(start + batch, len(split)))
        f = model.shallow(Tensor(split.images.data[idx]))
        z = style_embedding(f)
        gating = route(model.router, z, model.spec.n_experts, model.spec.top_k,
                       model.spec.routing_mode)
        for row_i, sample_id in enumerate(idx):
            rows.append([int(sample_id), int(gating.argmax_expert[row_i])]
                        + [f"{v:.10f}" for v in z.data[row_i]])
    width = z.data.shape[1]
    header = ["sample_id", "argmax_expert"] + [f"z_{i}" for i in range(width)]
    _write_csv(os.path.join(out, "styles.csv"), header, rows)
    _write_manifest(out, "dump-styles", cfg, ["styles.csv"],
                    {"checkpoint": args.checkpoint, "split": args.split})
    print(f"wrote {len(rows)} style rows")
    return 0


def _cmd_export_data(args) -> int:
    cfg = _load_config(args)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    train_split, test_splits = generate_benchmark(_seeded_benchmark(cfg))
    outputs = []
    export_split(train_split, os.path.join(out, "train"))
    outputs.append("train")
    for name, split in test_splits.items():
        export_split(split, os.path.join(out, name))
        outputs.append(name)
    _write_manifest(out, "export-data", cfg, outputs)
    print(f"exported splits: {', '.join(outputs)}")
    return 0


_DISPATCH = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "oracle": _cmd_oracle,
    "ablate": _cmd_ablate,
    "sweep": _cmd_sweep,
    "dump-styles": _cmd_dump_styles,
    "export-data": _cmd_export_data,
}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _DISPATCH[args.verb](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 3
    except (SdclError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
