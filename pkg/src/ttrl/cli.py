"""Command-line entry point: ``ttrl <train|search|compare|evaluate|print-config>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness as H


def _load(args) -> tuple[H.ExperimentConfig, dict]:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    search = data.pop("search", {})
    if args.scenario:
        data["scenario"] = args.scenario
    cfg = H.config_from_dict(data)
    if getattr(args, "mode", None):
        cfg = replace(cfg, agent=replace(cfg.agent, mode=args.mode))
    seeds = getattr(args, "seeds", None)
    if seeds:
        cfg = replace(cfg, seeds=tuple(seeds))
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=args.out)
    return cfg, search


def _print_summary(s: H.TrialSummary):
    for seed in s.seeds:
        print(f"seed {seed.seed}: last-{s.tail} mean {1000 * seed.last_mean_error:.1f} mm "
              f"(x {1000 * seed.last_x_error:.1f}, y {1000 * seed.last_y_error:.1f})")
    print(f"{s.mode} on {s.scenario}: mean {1000 * s.mean_error:.1f} mm, "
          f"median over seeds {1000 * s.median_error:.1f} mm")


def cmd_print_config(args):
    cfg, _ = _load(args)
    print(H.dump_config(cfg))


def cmd_train(args):
    cfg, _ = _load(args)
    _print_summary(H.run_experiment(cfg))


def cmd_compare(args):
    cfg, _ = _load(args)
    for row in H.compare_modes(cfg, args.modes):
        print(f"{row['mode']:>7}: mean {1000 * row['mean_error']:.1f} mm, "
              f"median {1000 * row['median_error']:.1f} mm")


def cmd_search(args):
    cfg, search = _load(args)
    space = H.SearchSpace.from_dict(search)
    if args.trials:
        space = replace(space, trials=args.trials)
    if args.seeds_per_trial:
        space = replace(space, seeds_per_trial=args.seeds_per_trial)
    table = H.run_search(space, cfg, args.master_seed)
    for row in table[:10]:
        print(f"#{row['rank']:<3} trial {row['trial']:<3} {1000 * row['mean_error']:.1f} mm")


def cmd_evaluate(args):
    out = Path(args.out)
    cfg = H.load_config(out / "config.json")
    rows = H.evaluate(cfg, out, args.seed, args.n)
    for r in rows:
        print(f"serve {int(r['serve'])}: action ({r['alpha']:.3f}, {r['beta']:.3f}, {r['vx']:.3f}) "
              f"error {1000 * r['goal_error']:.1f} mm")
    mean = sum(r["goal_error"] for r in rows) / len(rows)
    print(f"mean goal error {1000 * mean:.1f} mm over {len(rows)} serves")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ttrl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=True, mode=True):
        sp.add_argument("--config", help="JSON experiment config (partial trees allowed)")
        sp.add_argument("--scenario", help="scenario preset name")
        sp.add_argument("--out", help="output directory")
        if seeds:
            sp.add_argument("--seeds", "--seed", type=int, nargs="+", dest="seeds")
        if mode:
            sp.add_argument("--mode", choices=["aprg", "prg", "scalar"])

    sp = sub.add_parser("print-config", help="dump the resolved configuration")
    common(sp)
    sp.set_defaults(func=cmd_print_config)

    sp = sub.add_parser("train", help="run one experiment (all seeds)")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("compare", help="run several modes on the same seeds")
    common(sp, mode=False)
    sp.add_argument("--modes", nargs="+", default=["aprg", "prg", "scalar"],
                    choices=["aprg", "prg", "scalar"])
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("search", help="random hyperparameter search")
    common(sp, seeds=False)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seeds-per-trial", type=int)
    sp.add_argument("--master-seed", type=int, default=0)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("evaluate", help="reload a trained agent and run evaluation serves")
    sp.add_argument("--out", required=True, help="directory written by `train`")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, help="number of serves (default from config)")
    sp.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - any failure is a nonzero exit
        print(f"ttrl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
