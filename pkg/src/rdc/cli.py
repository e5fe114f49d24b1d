"""Command-line entry point: ``rdc run`` and ``rdc generate``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from rdc.embedding_store import save_embeddings
from rdc.errors import RDCError
from rdc.harness import (
    BENCHMARK,
    MODES,
    build_run_config,
    generate_synthetic,
    parse_config_text,
    run,
)

# flag dest -> settings key used by build_run_config
_RUN_FLAGS = {
    "mode": "mode",
    "input": "input",
    "out": "output",
    "episodes": "episodes",
    "way": "C",
    "shot": "K",
    "query": "Q",
    "seed": "seed",
    "k": "k",
    "k2": "k2",
    "lam": "lam",
    "p": "p",
    "alpha": "alpha",
    "tau": "tau",
    "epochs": "T",
    "lr": "beta",
    "loss": "loss",
    "optimizer": "optimizer",
    "soften_sign": "soften_sign",
}


def _add_run(sub) -> None:
    p = sub.add_parser("run", help="evaluate a mode over seeded episodes")
    p.add_argument("--config", type=Path, help="key=value file; flags override it")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--input", help="embeddings (.csv or packed binary)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--way", type=int)
    p.add_argument("--shot", type=int)
    p.add_argument("--query", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="per-episode report CSV")
    p.add_argument("--k", type=int)
    p.add_argument("--k2", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--p", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--loss", choices=("kl", "mse"))
    p.add_argument("--optimizer", choices=("sgd", "adaptive-moments"))
    p.add_argument("--soften-sign", choices=("paper", "negated"))
    p.add_argument("--no-attention", action="store_true", default=None)
    p.add_argument("--no-subspace", action="store_true", default=None)
    p.add_argument("--qe-plain-knn", action="store_true", default=None)
    p.add_argument("--workers", type=int, default=1)


def _add_generate(sub) -> None:
    p = sub.add_parser("generate", help="write a synthetic Gaussian-cluster embedding set")
    p.add_argument("--classes", type=int, default=BENCHMARK["classes"])
    p.add_argument("--per-class", type=int, default=BENCHMARK["per_class"])
    p.add_argument("--dim", type=int, default=BENCHMARK["m"])
    p.add_argument("--sigma", type=float, default=BENCHMARK["sigma"])
    p.add_argument("--seed", type=int, default=BENCHMARK["seed"])
    p.add_argument("--format", choices=("packed-binary", "csv"), default="packed-binary")
    p.add_argument("--out", required=True)


def settings_from_args(args: argparse.Namespace) -> dict[str, object]:
    settings: dict[str, object] = {}
    if args.config is not None:
        settings.update(parse_config_text(args.config.read_text()))
    for dest, key in _RUN_FLAGS.items():
        value = getattr(args, dest)
        if value is not None:
            settings[key] = value
    if args.no_attention:
        settings["use_attention"] = False
    if args.no_subspace:
        settings["use_subspace"] = False
    if args.qe_plain_knn:
        settings["qe_plain_knn"] = True
    return settings


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rdc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_generate(sub)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    try:
        if args.command == "generate":
            emb = generate_synthetic(args.classes, args.per_class, args.dim, args.sigma, args.seed)
            save_embeddings(emb, args.out, args.format)
            print(f"wrote {emb.n} x {emb.dim} embeddings to {args.out}")
            return 0
        config = build_run_config(settings_from_args(args))
        if config.input is None:
            parser.error("--input is required (or input= in the config file)")
        report = run(config, workers=args.workers)
    except (RDCError, ValueError, OSError) as exc:
        print(f"rdc: error: {exc}", file=sys.stderr)
        return 2
    print(report.summary())
    return 0


if __name__ == "__main__":
    sys.exit(main())
