"""``market-rl`` command line: train, eval, baseline, replicate, compare.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
The ``MARKET_RL_OUTPUT_ROOT`` environment variable replaces the config's
output directory when ``--out`` is not given.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .env import ConfigError
from .harness import experiment as ex
from .harness.config import ALGORITHMS, ExperimentConfig, TrainSection, preset

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common(p):
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="market-rl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one agent")
    _common(p)
    p.add_argument("--algo", help=f"one of {sorted(ALGORITHMS)}")
    p.add_argument("--steps", type=int, help="total environment steps")

    p = sub.add_parser("eval", help="evaluate a checkpoint or a baseline")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint")
    src.add_argument("--baseline", help="fixed:K or random")
    p.add_argument("--horizon", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--label")

    p = sub.add_parser("baseline", help="evaluate every fixed quantity and the random agents")
    _common(p)

    p = sub.add_parser("replicate", help="full experiment: train roster, evaluate, compare")
    _common(p)
    p.add_argument("--preset", choices=("desk", "full"))
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("compare", help="statistical comparison of evaluation reports")
    _common(p)
    p.add_argument("reports", nargs="+", help="EvalReport JSON files")
    p.add_argument("--drl-group", default="ppo")
    p.add_argument("--random-group", default="random")
    p.add_argument("--default-group", default="fixed")
    p.add_argument("--group", action="append", default=[], metavar="NAME=LABEL,LABEL",
                   help="explicit grouping (repeatable); default groups by each report's group field")
    p.add_argument("--mu0", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--unit", choices=("agent", "episode"), default="agent")
    return parser


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "preset", None) and args.config:
        raise UsageError("--preset and --config are mutually exclusive")
    if getattr(args, "preset", None):
        return preset(args.preset)
    if args.config:
        return ExperimentConfig.load(args.config)
    return ExperimentConfig()


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    return Path(ex.output_root(cfg.output_dir)) / args.command


def _parse_groups(items):
    if not items:
        return None
    groups = {}
    for item in items:
        name, sep, labels = item.partition("=")
        if not sep or not name or not labels:
            raise UsageError(f"bad --group {item!r}; expected NAME=LABEL,LABEL")
        groups[name] = [l for l in labels.split(",") if l]
    return groups


def run(args) -> int:
    cfg = _load_config(args)
    if args.seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    seed = cfg.train.seed
    out = _out_dir(args, cfg)

    if args.command == "train":
        if args.algo:
            cfg = cfg.with_algorithm(args.algo)
        if args.steps is not None:
            cfg = replace(cfg, train=TrainSection(args.steps, cfg.train.n_envs, seed,
                                                  cfg.train.checkpoint_every))
        info = ex.run_training(cfg, out, seed)
        print(info["checkpoint"])
    elif args.command == "eval":
        horizon = cfg.eval.horizon if args.horizon is None else args.horizon
        episodes = cfg.eval.episodes if args.episodes is None else args.episodes
        if horizon < 0 or episodes < 1:
            raise UsageError("--horizon must be >= 0 and --episodes >= 1")
        eval_seed = cfg.eval.seed if args.seed is None else args.seed
        source = args.checkpoint or args.baseline
        report = ex.run_eval(source, cfg.env, horizon, episodes, eval_seed, out, label=args.label,
                             randomization=cfg.randomization)
        print(out / f"{report['label']}.json")
    elif args.command == "baseline":
        reports = ex.run_baselines(cfg, out, seed)
        print(f"{len(reports)} reports in {out}")
    elif args.command == "replicate":
        if args.jobs is not None:
            cfg = replace(cfg, replicate=replace(cfg.replicate, jobs=args.jobs))
        manifest = ex.replicate(cfg, out, seed, dry_run=args.dry_run)
        print(f"manifest: {out / 'manifest.json'} ({len(manifest['files'])} files)")
    elif args.command == "compare":
        reports = [ex.load_report(p) for p in args.reports]
        result = ex.compare(reports, out, groups=_parse_groups(args.group), drl_group=args.drl_group,
                            random_group=args.random_group, default_group=args.default_group,
                            mu0=args.mu0, alpha=args.alpha, unit=args.unit)
        for name, t in result["tests"].items():
            print(f"{name}: t={t['t_statistic']:.4g} dof={t['degrees_of_freedom']:.4g} "
                  f"p={t['p_value']:.3g}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (UsageError, ConfigError) as exc:
        print(f"market-rl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"market-rl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        logging.getLogger("market_rl").debug("failure", exc_info=True)
        print(f"market-rl: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
