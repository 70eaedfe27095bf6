"""Command line: ``gmwsgd train | compare | export-trace``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ALGORITHMS, RunConfig, load_config
from .errors import ConfigError, GmwError
from .experiment import compare, load_result, run, run_repeated, trace_export

# flag -> parameter name, per algorithm
OVERRIDES = {
    "gmw-sgd": {"np": "np", "ngen": "n_gen", "nevol": "n_evol", "nepoch": "n_epoch", "lr": "lr0",
                "pmut": "p_mut", "patience": "patience", "eta_m": "eta_m"},
    "sgd": {"lr": "lr"},
    "slpso": {"np": "np", "nevol": "n_evol"},
}
OVERRIDES["gmw-sgd-moo"] = OVERRIDES["gmw-sgd"]
_INT_FLAGS = ("np", "ngen", "nevol", "nepoch", "patience")
_FLOAT_FLAGS = ("lr", "pmut", "eta_m")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmwsgd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one configuration")
    t.add_argument("--config", help="INI-style or JSON run configuration")
    t.add_argument("--algorithm", help=f"one of {', '.join(ALGORITHMS)}")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="output directory (default runs/<algorithm>)")
    t.add_argument("--budget", type=int, help="fitness-evaluation cap (SGD: epochs + 1)")
    for flag in _INT_FLAGS:
        t.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=int)
    for flag in _FLOAT_FLAGS:
        t.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=float)
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any algorithm parameter")
    t.add_argument("--data", choices=("blobs", "cifar10"))
    t.add_argument("--cifar-dir", help="directory with the extracted CIFAR-10 binary files")
    t.add_argument("--classes", help="comma-separated CIFAR-10 class subset, e.g. 0,1,2")
    t.add_argument("--repeat", type=int, default=1, help="run N consecutive seeds and summarise")

    c = sub.add_parser("compare", help="tabulate result.json files")
    c.add_argument("results", nargs="+", help="result.json files or run directories")
    c.add_argument("--out", help="directory for comparison.txt and comparison.csv")

    e = sub.add_parser("export-trace", help="write the convergence trace of a result as CSV")
    e.add_argument("result", help="result.json file or run directory")
    e.add_argument("--out", default="trace.csv")
    return parser


def config_from_args(args) -> RunConfig:
    raw = load_config(args.config) if args.config else {}
    if args.algorithm:
        raw["algorithm"] = args.algorithm
    if "algorithm" not in raw:
        raise ConfigError(f"no algorithm given; choose one of {', '.join(ALGORITHMS)}")
    algorithm = raw["algorithm"]
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm {algorithm!r} is not one of: {', '.join(ALGORITHMS)}")
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.budget is not None:
        raw["eval_budget"] = args.budget
    raw.setdefault("out_dir", f"runs/{algorithm}")
    if args.out:
        raw["out_dir"] = args.out

    data = dict(raw.get("data", {}))
    if args.data:
        data["kind"] = args.data
    if args.cifar_dir:
        data.setdefault("kind", "cifar10")
        data["path"] = args.cifar_dir
    if args.classes:
        data["classes"] = args.classes
    raw["data"] = data

    overrides = {}
    for flag in _INT_FLAGS + _FLOAT_FLAGS:
        value = getattr(args, flag)
        if value is None:
            continue
        if flag not in OVERRIDES[algorithm]:
            raise ConfigError(f"--{flag.replace('_', '-')} does not apply to {algorithm}")
        overrides[OVERRIDES[algorithm][flag]] = value
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    per_alg = raw.pop("algorithm_params", {})
    raw["params"] = {**raw.get("params", {}), **per_alg.get(algorithm, {}), **overrides}
    return RunConfig.from_dict(raw)


def _progress(event: dict) -> None:
    logging.getLogger("gmwsgd").info(json.dumps(event))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "train":
            cfg = config_from_args(args)
            if args.repeat > 1:
                _, summary = run_repeated(cfg, args.repeat, _progress)
                print(json.dumps(summary, indent=2))
            else:
                result = run(cfg, _progress)
                text, _ = compare([result])
                print(text, end="")
                print(f"wrote {Path(cfg.out_dir) / 'result.json'}")
        elif args.command == "compare":
            text, csv_text = compare([load_result(p) for p in args.results])
            print(text, end="")
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                (out / "comparison.txt").write_text(text)
                (out / "comparison.csv").write_text(csv_text)
        else:
            trace_export(load_result(args.result), args.out)
    except GmwError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
