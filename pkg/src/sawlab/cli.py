"""Command-line entry points: gen-data, train, finetune, eval, report."""

import argparse
import json
import sys
from pathlib import Path

from . import data, envs, harness


def _split_overrides(extras):
    pairs = []
    for item in extras:
        if not item.startswith("--") or "=" not in item:
            raise ValueError(f"overrides must look like --key=value, got {item!r}")
        key, value = item[2:].split("=", 1)
        pairs.append((key, value))
    return pairs


def cmd_gen_data(args):
    env = envs.make_env(args.env)
    dataset = envs.generate_dataset(env, args.kind, args.n, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    data.save(dataset, args.out)
    print(f"wrote {len(dataset)} transitions to {args.out}")


def cmd_train(args, extras):
    config = harness.load_config(args.config, _split_overrides(extras))
    report = harness.run_offline(config)
    print(harness.format_report_table([report]), end="")
    if report["failed"]:
        print(f"error: seeds failed: {report['failed']}", file=sys.stderr)
        return 1
    return 0


def cmd_finetune(args, extras):
    config = harness.load_config(args.config, _split_overrides(extras))
    report = harness.run_offline_to_online(config, args.checkpoint)
    print(harness.format_report_table([report]), end="")
    if report["failed"]:
        print(f"error: seeds failed: {report['failed']}", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args):
    agent, _ = harness._load_agent(args.checkpoint)
    env = envs.make_env(args.env)
    mean_return, score = harness.evaluate(agent, env, args.episodes, args.seed)
    print(json.dumps({"env": args.env, "episodes": args.episodes,
                      "mean_return": mean_return, "normalized_score": score}))


def cmd_report(args):
    reports = harness.collect_report(args.metrics_dir)
    if not reports:
        raise ValueError(f"no metrics CSVs found under {args.metrics_dir}")
    table = harness.format_report_table(reports)
    print(table, end="")
    out_dir = Path(args.metrics_dir)
    (out_dir / "aggregate.json").write_text(
        json.dumps(reports, indent=2, sort_keys=True) + "\n")
    (out_dir / "aggregate.txt").write_text(table)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sawlab",
        description="Desk-scale offline RL experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate an offline dataset file")
    p.add_argument("--env", required=True, choices=("pointmass2d", "gridmaze8x8"))
    p.add_argument("--kind", required=True, choices=envs.DATASET_KINDS)
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="run offline training from a config file")
    p.add_argument("config", help="path to a key = value config file")

    p = sub.add_parser("finetune", help="offline-to-online fine-tuning")
    p.add_argument("checkpoint", help="offline-trained agent checkpoint")
    p.add_argument("config", help="path to a key = value config file")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--env", required=True, choices=("pointmass2d", "gridmaze8x8"))
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="aggregate metrics CSVs into a table")
    p.add_argument("metrics_dir")
    return parser


def main(argv=None):
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        if args.command == "gen-data":
            if extras:
                raise ValueError(f"unrecognized arguments: {extras}")
            cmd_gen_data(args)
            return 0
        if args.command == "train":
            return cmd_train(args, extras)
        if args.command == "finetune":
            return cmd_finetune(args, extras)
        if args.command == "eval":
            if extras:
                raise ValueError(f"unrecognized arguments: {extras}")
            cmd_eval(args)
            return 0
        if args.command == "report":
            if extras:
                raise ValueError(f"unrecognized arguments: {extras}")
            cmd_report(args)
            return 0
        raise ValueError(f"unknown command {args.command!r}")
    except (ValueError, OSError, data.DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
