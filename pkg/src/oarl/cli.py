"""Command-line front end: ``train``, ``evaluate`` and ``report``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .agents import AGENTS
from .exceptions import ConfigurationError
from .kinematics import MODES


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _pair(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oarl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train one configuration over several seeds")
    tr.add_argument("--env", choices=sorted(harness.ENVS), default=None)
    tr.add_argument("--mode", choices=MODES, default=None)
    tr.add_argument("--agent", choices=AGENTS, default=None)
    tr.add_argument("--steps", type=int, default=None)
    tr.add_argument("--seeds", type=_seeds, default=None)
    tr.add_argument("--out", default=None)
    tr.add_argument("--config", help="flat key = value file applied before other options")
    tr.add_argument("--override", type=_pair, action="append", default=[],
                    metavar="KEY=VALUE")

    ev = sub.add_parser("evaluate", help="evaluate a checkpoint with exploration off")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=None)

    rp = sub.add_parser("report", help="aggregate run directories into CSV and SVG")
    rp.add_argument("--runs", nargs="+", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--smooth", type=float, default=0.9)
    return parser


def config_from_args(args, environ=None) -> harness.RunConfig:
    """Layering, lowest first: defaults, config file, OARL_* variables, flags, overrides."""
    pairs = {}
    if args.config:
        pairs.update(harness.read_config_file(args.config))
    pairs.update(harness.env_var_overrides(environ))
    for name in ("env", "mode", "agent", "steps", "out"):
        value = getattr(args, name)
        if value is not None:
            pairs[name] = value
    if args.seeds is not None:
        pairs["seeds"] = args.seeds
    pairs.update(dict(args.override))
    return harness.apply_overrides(harness.RunConfig(), pairs)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        if args.command == "train":
            manifest = harness.train(config_from_args(args))
            print(json.dumps(manifest["seeds"], indent=2))
            return 0 if all(s["status"] == "complete" for s in manifest["seeds"].values()) else 1
        if args.command == "evaluate":
            rec = harness.evaluate_checkpoint(args.checkpoint, args.episodes, args.seed)
            print(json.dumps({"step": rec.step, "seed": rec.seed, "returns": rec.returns,
                              "mean_return": rec.mean}))
            return 0
        results = harness.report(args.runs, args.out, args.smooth)
        for name, agg in results.items():
            print(f"{name}: final mean {agg['mean'][-1]:.2f} over {agg['n']} runs")
        return 0
    except (ConfigurationError, harness.ReportError) as err:
        print(f"oarl: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
