"""Command-line entry point: ``nclearn <subcommand> --config C --seed S --out DIR``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..errors import ContractError, FormatError, InfeasibleError, NumericError
from ..model import NeuralComplexity
from . import experiments as ex
from .config import ExperimentConfig, load_config
from .metrics import write_json

log = logging.getLogger("nclearn")

COMMANDS = ("meta-train", "eval-fit", "compare-regularizers", "ood-sweep", "single-task", "bound")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nclearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment config (defaults if omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        if name != "meta-train" and name != "single-task":
            p.add_argument("--checkpoint", type=Path,
                           help="trained NC checkpoint (falls back to config 'checkpoint')")
        if name == "meta-train":
            p.add_argument("--workers", type=int, choices=(1, 2), default=1)
            p.add_argument("--episodes", type=int, help="override budget.episodes")
            p.add_argument("--no-eval", action="store_true", help="skip the held-out gap fit")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "episodes", None) is not None:
        cfg = replace(cfg, budget=replace(cfg.budget, episodes=args.episodes))
    return cfg


def _checkpoint(args, cfg: ExperimentConfig) -> NeuralComplexity:
    path = args.checkpoint or cfg.checkpoint
    if path is None:
        raise ContractError("this command needs a trained NC: pass --checkpoint")
    return NeuralComplexity.load(path)


def run(args) -> dict:
    cfg = _config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    cmd = args.command
    if cmd == "meta-train":
        res = ex.run_meta_training(cfg, out, workers=args.workers, evaluate=not args.no_eval,
                                   log=log.info)
        return {"episodes": res.episodes, "meta_steps": res.meta_steps,
                "checkpoint": str(out / "nc.ckpt"), "fit": res.fit}
    if cmd == "single-task":
        return ex.run_single_task(cfg, out, log=log.info)
    nc = _checkpoint(args, cfg)
    if cmd == "eval-fit":
        report = ex.gap_fit_report(cfg, nc)
        write_json(out / "gap_fit.json", report)
        return report
    if cmd == "compare-regularizers":
        table = ex.run_regularizer_comparison(cfg, nc, out)
        print(table.format())
        return {"rows": table.rows}
    if cmd == "ood-sweep":
        return {"rows": ex.run_ood_sweep(cfg, nc, out)}
    report = ex.run_bound(cfg, nc, out)
    return report.to_record()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        summary = run(args)
    except (ContractError, FormatError, InfeasibleError, NumericError, ValueError, OSError) as err:
        print(f"nclearn {args.command}: error: {err}", file=sys.stderr)
        return 2
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
