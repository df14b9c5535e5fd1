"""Command line entry point: ``hhlpc run|scaling|pareto|validate``.

Exit codes: 0 ok, 2 configuration error, 3 simulation divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from ..pcore import MODES
from .config import ConfigError, ExperimentConfig, config_from_dict, config_to_dict, load_config
from .experiments import pareto_sweep, scaling_experiment
from .outputs import emit_outputs, write_table
from .runner import run_repetitions

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file (or a summary JSON)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", metavar="DIR", help="override the output directory")
    common.add_argument("--policy", choices=MODES, help="override the predictor-corrector mode")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    p = argparse.ArgumentParser(prog="hhlpc", description="HHL-emulating predictor-corrector experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one case (all repetitions)")
    sub.add_parser("scaling", parents=[common], help="sample-count scaling study on the vortex")
    sub.add_parser("pareto", parents=[common], help="H-PC sample size / threshold sweep")
    sub.add_parser("validate", parents=[common], help="check a config and print it normalised")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    if args.policy is not None:
        try:
            cfg = replace(cfg, pc=replace(cfg.pc, mode=args.policy))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def cmd_run(args, cfg: ExperimentConfig) -> int:
    results = run_repetitions(cfg)
    emit_outputs(results, cfg.output_dir)
    diverged = False
    for r in results:
        s = r.summary
        errs = " ".join(f"{k}={v:.4g}" for k, v in s.errors.items())
        status = "completed" if not s.failed else f"diverged at step {s.failure_step} ({s.failure_reason})"
        _say(args, f"{s.case} {s.mode} seed={s.seed}: {status}; steps={s.total_steps} "
                   f"skip_fraction={s.skip_fraction:.3f} samples={s.samples_spent} {errs}")
        diverged |= s.failed
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_scaling(args, cfg: ExperimentConfig) -> int:
    if cfg.case != "tgv":
        raise ConfigError("the scaling study runs on the tgv case")
    res = scaling_experiment(cfg)
    out = Path(cfg.output_dir)
    write_table(out / f"tgv_scaling_{cfg.master_seed}.table.csv", res.header, res.rows)
    (out / f"tgv_scaling_{cfg.master_seed}.slopes.json").write_text(
        json.dumps({"slopes": res.slopes, "failures": res.failures, "config": config_to_dict(cfg)},
                   indent=2, sort_keys=True) + "\n")
    for row in res.rows:
        _say(args, "N={1:5d} dfs={2:.1f} hpc={3:.1f} qpc={4:.0f}".format(*row))
    for n_side, col, why in res.failures:
        _say(args, f"n_side={n_side}: {col} omitted ({why})")
    _say(args, "slopes " + " ".join(f"{k}={v:.3f}" for k, v in res.slopes.items()))
    return EXIT_OK


def cmd_pareto(args, cfg: ExperimentConfig) -> int:
    res = pareto_sweep(cfg)
    out = Path(cfg.output_dir)
    write_table(out / f"tgv_pareto_{cfg.master_seed}.grid.csv", res.header, res.grid)
    write_table(out / f"tgv_pareto_{cfg.master_seed}.front.csv", res.header, res.front)
    for row in res.grid:
        _say(args, "n={0} p<{1}: skip={2:.3f} error={3:.4f} failures={4}/{5}".format(*row))
    return EXIT_OK


def cmd_validate(args, cfg: ExperimentConfig) -> int:
    _say(args, json.dumps(config_to_dict(cfg), indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "scaling": cmd_scaling, "pareto": cmd_pareto, "validate": cmd_validate}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
