"""Command-line entry point.

Exit codes: 0 ok, 1 usage, 2 configuration, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

import yaml

from .config import ConfigError, default_config, load_config

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _load(args) -> "ExperimentConfig":  # noqa: F821
    cfg = load_config(args.config, seed=args.seed) if args.config else default_config()
    if args.seed is not None and not args.config:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "episodes", None) is not None:
        cfg = cfg.replace(**{"learner.episodes": args.episodes, "baselines.ga_generations": args.episodes})
    return cfg


def _seeds(args, cfg) -> list[int]:
    return list(args.seeds) if getattr(args, "seeds", None) else [cfg.seed]


def _print_summaries(summaries) -> None:
    for s in summaries:
        agg = ", ".join(f"{k}={v:.4g}" for k, v in sorted(s.aggregates.items()))
        print(f"{s.run_id} {s.algorithm} seeds={s.seeds} episodes={s.episodes} {agg}")


def cmd_run(args) -> int:
    from .harness import run_experiment
    cfg = _load(args)
    algos = args.algo or ["mo-maddpg"]
    summaries = run_experiment(cfg, algos, _seeds(args, cfg), args.out, run_id=args.run_id,
                               checkpoint=args.checkpoint, dump_embeddings=args.dump_embeddings)
    _print_summaries(summaries)
    return EXIT_OK


def cmd_train(args) -> int:
    from .harness import run_experiment
    cfg = _load(args)
    summaries = run_experiment(cfg, [args.algo], _seeds(args, cfg), args.out, run_id=args.run_id,
                               checkpoint=True, dump_embeddings=args.dump_embeddings)
    _print_summaries(summaries)
    return EXIT_OK


def cmd_baseline(args) -> int:
    from .harness import run_experiment
    cfg = _load(args)
    summaries = run_experiment(cfg, [args.name], _seeds(args, cfg), args.out, run_id=args.run_id)
    _print_summaries(summaries)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .harness import evaluate
    cfg = _load(args)
    s = evaluate(cfg, args.checkpoint, cfg.seed, args.eval_episodes, args.out, run_id=args.run_id)
    _print_summaries([s])
    return EXIT_OK


def cmd_summarize(args) -> int:
    from .harness import summarize
    summaries, path = summarize(args.dir, final_window=args.final_window)
    _print_summaries(summaries)
    print(f"table written to {path}")
    return EXIT_OK


def cmd_emit_plots(args) -> int:
    from .harness import emit_plots_data
    written, _ = emit_plots_data(args.dir, args.out)  # gaps are logged as warnings
    for p in written:
        print(p)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .stackelberg import GameSpec, InfeasibleGame, backward_induction, verify_se
    try:
        with open(args.spec, encoding="utf-8") as fh:
            spec = GameSpec.from_dict(yaml.safe_load(fh))
    except (OSError, yaml.YAMLError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read game spec {args.spec}: {exc}") from exc
    try:
        outcome = backward_induction(spec)
    except InfeasibleGame as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report = verify_se(outcome, spec, grid_step=args.grid_step)
    print(json.dumps({"outcome": outcome.as_dict(),
                      "report": {"is_se": report.is_se, "worst_gain": report.worst_gain,
                                 "deviator": report.deviator, "deviators": list(report.deviators)}},
                     indent=2))
    return EXIT_OK if report.is_se else EXIT_RUNTIME


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    ok = run_selftest(quick=not args.full)
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_snapshot(args) -> int:
    from ._rng import derive_rng
    from .scenario import build_world, dump_snapshot, step_mobility
    cfg = _load(args)
    world = build_world(cfg, derive_rng(cfg.seed, "world"))
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        n = 0
        for _ in range(args.steps + 1):
            n += dump_snapshot(world, out)
            world = step_mobility(world, cfg.world.dt_s)
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"{n} records", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from .harness import ALGORITHMS
    p = _Parser(prog="vtmig", description="Vehicular twin migration: simulator, game solver and learners.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_default="runs"):
        sp.add_argument("--config", help="YAML configuration file (defaults built in)")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--seeds", type=int, nargs="+", help="run each of these seeds")
        sp.add_argument("--episodes", type=int, help="override the episode (or generation) count")
        sp.add_argument("--out", default=out_default, help="metrics directory")
        sp.add_argument("--run-id", default="run")

    sp = sub.add_parser("run", help="run one or more algorithms")
    common(sp)
    sp.add_argument("--algo", action="append", choices=ALGORITHMS)
    sp.add_argument("--checkpoint", action="store_true", help="save learner parameters")
    sp.add_argument("--dump-embeddings", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("train", help="train one learner and save checkpoints")
    common(sp)
    sp.add_argument("--algo", default="mo-maddpg", choices=("mo-maddpg", "maddpg"))
    sp.add_argument("--dump-embeddings", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="greedy rollouts of a checkpoint")
    common(sp, out_default="runs/eval")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--eval-episodes", type=int, default=10)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("baseline", help="run one baseline")
    sp.add_argument("name", choices=("maddpg", "madqn", "ga", "random"))
    common(sp)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("summarize", help="aggregate a metrics directory into a table")
    sp.add_argument("dir")
    sp.add_argument("--final-window", type=int, default=50)
    sp.set_defaults(func=cmd_summarize)

    sp = sub.add_parser("emit-plots", help="write per-figure data files")
    sp.add_argument("dir")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_emit_plots)

    sp = sub.add_parser("verify-equilibrium", help="solve a pricing game and check the equilibrium")
    sp.add_argument("spec")
    sp.add_argument("--grid-step", type=float, default=1e-3)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("selftest", help="run the oracle battery")
    sp.add_argument("--full", action="store_true", help="use the full event counts")
    sp.set_defaults(func=cmd_selftest)

    sp = sub.add_parser("snapshot", help="dump the world as line-delimited JSON")
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--steps", type=int, default=0, help="also dump this many mobility steps")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_snapshot)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # surfaced as a runtime failure
        logging.getLogger("vtmig").debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
