"""Command-line entry point: ``mixerscope <stage> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .pipeline import STAGES, StageError, make_config, read_config, run_pipeline, run_stage, write_manifest
from .synth import SynthSpec, generate, write_corpus


def _eps_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="key = value config file; flags override it")
    p.add_argument("--transactions", metavar="PATH")
    p.add_argument("--labels", metavar="PATH")
    p.add_argument("--seeds", metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--n", type=int, help="exploration steps (default 2)")
    p.add_argument("--max-nodes", type=int, dest="max_nodes")
    p.add_argument("--resolution", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--min-pts", type=int, dest="min_pts")
    p.add_argument("--eps", type=_eps_list, metavar="LIST", help="comma-separated eps sweep")
    p.add_argument("--theta", type=float, help="pass-through dominance threshold (default 0.8)")
    p.add_argument("--threads", type=int, help="worker cap; never changes results")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixerscope", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic corpus with planted motifs")
    s.add_argument("--out", metavar="DIR", required=True)
    defaults = SynthSpec()
    for name in ("rng_seed", "n_passthrough", "n_peeling_chains", "peeling_length", "n_noise_txs", "exchange_pool", "amount_min", "amount_max"):
        s.add_argument("--" + name.replace("_", "-"), dest=name, type=int, default=getattr(defaults, name))

    for name in STAGES:
        _pipeline_args(sub.add_parser(name, help=f"run the {name} stage"))
    _pipeline_args(sub.add_parser("run", help="run every stage and write the manifest"))
    return parser


def _config(args: argparse.Namespace):
    file_values = read_config(args.config) if args.config else {}
    keys = ("transactions", "labels", "seeds", "out", "n", "max_nodes", "resolution", "threshold", "min_pts", "eps", "theta", "threads")
    return make_config(file_values, **{k: getattr(args, k) for k in keys})


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "synth":
        fields = ("rng_seed", "n_passthrough", "n_peeling_chains", "peeling_length", "n_noise_txs", "exchange_pool", "amount_min", "amount_max")
        try:
            spec = SynthSpec(**{f: getattr(args, f) for f in fields})
        except ValueError as exc:
            print(f"mixerscope: synth: {exc}", file=sys.stderr)
            return 2
        paths = write_corpus(generate(spec), args.out)
        for p in paths.values():
            print(p)
        return 0

    try:
        cfg = _config(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"mixerscope: config: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "run":
            run_pipeline(cfg)
        else:
            run_stage(args.command, cfg)
            if args.command == "report":
                write_manifest(cfg)
    except StageError as exc:
        print(f"mixerscope: stage {exc}", file=sys.stderr)
        return 1
    print(Path(cfg.out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
