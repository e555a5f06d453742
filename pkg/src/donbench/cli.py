"""Command-line interface.

Subcommands: gen-data, train, evaluate, compare, bench-runtime, constitutive.
Every subcommand accepts --config (JSON file with defaults), --seed,
--out-dir and --threads.  On failure the process exits nonzero after
printing a machine-readable error JSON to stderr.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .constitutive import ConstitutiveState, coefficients, inelastic_strain_rate
from .dataset import BENCHMARKS, DatasetContainer, generate_dataset
from .errors import DonbenchError
from .harness import (
    ARCHITECTURES,
    bench_runtime,
    evaluate,
    run_comparison,
    train_on_container,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .training import TrainConfig


def _common_flags(parser):
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with option defaults")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", type=Path, default=Path("."))
    parser.add_argument("--threads", type=int, default=1)


def _load_config(args) -> dict:
    if args.config is None:
        return {}
    return json.loads(Path(args.config).read_text())


def _train_config(args, cfg: dict) -> TrainConfig:
    merged = {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "lr_decay": args.lr_decay,
        "queries_per_step": args.queries_per_step,
        "seed": args.seed,
        "split_seed": args.split_seed,
        "log_every": args.log_every,
    }
    merged.update(cfg.get("train", {}))
    return TrainConfig(**merged)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="donbench",
        description="PDE benchmark suite for operator networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a benchmark dataset")
    _common_flags(p)
    p.add_argument("--benchmark", required=True, choices=BENCHMARKS)
    p.add_argument("--n-samples", type=int, required=True)
    p.add_argument("--overrides", type=str, default=None,
                   help="JSON string merged into the benchmark defaults")

    p = sub.add_parser("train", help="train one architecture on a dataset")
    _common_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--arch", required=True, choices=ARCHITECTURES)
    p.add_argument("--epochs", type=int, default=20000)
    p.add_argument("--batch-size", type=int, default=48)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--lr-decay", type=float, default=0.0)
    p.add_argument("--queries-per-step", type=int, default=1024)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--log-every", type=int, default=200)
    p.add_argument("--hidden-dim", type=int, default=64)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    _common_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split-seed", type=int, default=0)

    p = sub.add_parser("compare", help="multi-seed architecture comparison")
    _common_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--archs", required=True,
                   help="comma-separated architecture ids")
    p.add_argument("--seeds", default="0,1,2",
                   help="comma-separated training seeds")
    p.add_argument("--epochs", type=int, default=20000)
    p.add_argument("--batch-size", type=int, default=48)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--lr-decay", type=float, default=0.0)
    p.add_argument("--queries-per-step", type=int, default=1024)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--log-every", type=int, default=200)
    p.add_argument("--hidden-dim", type=int, default=64)

    p = sub.add_parser("bench-runtime",
                       help="compare FEM solve vs model inference time")
    _common_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--n-trials", type=int, default=10)

    p = sub.add_parser("constitutive", help="material-law utilities")
    const_sub = p.add_subparsers(dest="constitutive_command", required=True)
    pe = const_sub.add_parser("eval", help="evaluate the viscoplastic law")
    _common_flags(pe)
    pe.add_argument("--sigma", type=float, required=True,
                    help="effective stress, MPa")
    pe.add_argument("--eps", type=float, required=True,
                    help="accumulated inelastic strain")
    pe.add_argument("--temp", type=float, required=True,
                    help="temperature, kelvin")
    pe.add_argument("--carbon", type=float, required=True,
                    help="carbon content, weight percent")
    return parser


def _cmd_gen_data(args):
    overrides = json.loads(args.overrides) if args.overrides else None
    cfg = _load_config(args)
    if "overrides" in cfg:
        overrides = cfg["overrides"] if overrides is None else {
            **cfg["overrides"], **overrides
        }
    container = generate_dataset(
        args.benchmark, args.n_samples, args.seed,
        overrides=overrides, threads=args.threads,
    )
    out = container.save(args.out_dir)
    print(f"wrote {args.n_samples} samples to {out}")
    return 0


def _cmd_train(args):
    cfg = _load_config(args)
    container = DatasetContainer.load(args.dataset)
    config = _train_config(args, cfg)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    config.checkpoint_path = None
    model, history = train_on_container(
        container, args.arch, config, hidden_dim=args.hidden_dim
    )
    prefix = args.out_dir / "model"
    save_checkpoint(
        model, prefix, benchmark=container.benchmark,
        train_config=config.to_dict(), split_seed=config.split_seed,
    )
    (args.out_dir / "loss_history.csv").write_text(
        "epoch,loss\n" + "\n".join(f"{e},{v!r}" for e, v in history) + "\n"
    )
    print(
        f"trained {args.arch} for {config.epochs} epochs; "
        f"loss {history[0][1]:.3e} -> {history[-1][1]:.3e}; "
        f"checkpoint at {prefix}.json"
    )
    return 0


def _cmd_evaluate(args):
    container = DatasetContainer.load(args.dataset)
    model, _ = load_checkpoint(args.checkpoint)
    report = evaluate(model, container, args.split_seed, out_dir=args.out_dir)
    for name in report.field_names:
        agg = report.aggregates[name]
        print(
            f"{name}: mean L2 {agg['mean_l2']:.4%} | mean MAE "
            f"{agg['mean_mae']:.4e} | degenerate {agg['n_degenerate']}"
        )
    print(f"report written to {args.out_dir}")
    return 0


def _cmd_compare(args):
    cfg = _load_config(args)
    arch_ids = [a.strip() for a in args.archs.split(",") if a.strip()]
    seeds = [int(s) for s in args.seeds.split(",")]
    config = _train_config(args, cfg)
    table = run_comparison(
        args.dataset, arch_ids, config, seeds=seeds,
        workers=args.threads, out_dir=args.out_dir,
        hidden_dim=args.hidden_dim,
    )
    for arch in arch_ids:
        cell = table["cells"][arch]
        if "error" in cell:
            print(f"{arch}: FAILED ({cell['error']})")
            continue
        parts = ", ".join(
            f"{name} {cell[name]['median']:.4%}" for name in table["fields"]
        )
        print(f"{arch}: {parts}")
    print(f"winners: {table['winners']}")
    return 0


def _cmd_bench_runtime(args):
    container = DatasetContainer.load(args.dataset)
    model, _ = load_checkpoint(args.checkpoint)
    result = bench_runtime(container, model, n_trials=args.n_trials)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "runtime.json").write_text(json.dumps(result, indent=2))
    print(
        f"FEM {result['fem_solve_per_sample_s']:.4f} s/sample vs inference "
        f"{result['inference_per_sample_s']:.6f} s/sample "
        f"(x{result['speedup_ratio']:.0f} speedup)"
    )
    return 0


def _cmd_constitutive_eval(args):
    state = ConstitutiveState(
        stress=args.sigma, strain=args.eps,
        temperature_k=args.temp, pct_c=args.carbon,
    )
    rate = inelastic_strain_rate(state)
    coeff = coefficients(args.temp, args.carbon)
    print(f"inelastic_strain_rate_per_s {rate!r}")
    print(f"f1 {coeff.f1!r}")
    print(f"f2 {coeff.f2!r}")
    print(f"f3 {coeff.f3!r}")
    print(f"fc {coeff.fc!r}")
    print(f"Q_kelvin {coeff.q!r}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen-data": _cmd_gen_data,
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "compare": _cmd_compare,
        "bench-runtime": _cmd_bench_runtime,
    }
    try:
        if args.command == "constitutive":
            return _cmd_constitutive_eval(args)
        return handlers[args.command](args)
    except (DonbenchError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(
            json.dumps(
                {"error": {"type": type(exc).__name__, "message": str(exc)}}
            ),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
