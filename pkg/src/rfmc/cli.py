"""Command line entry point.

Subcommands::

    rfmc run <config.ini | experiment-name> [--seed N] [--threads N] [--out DIR]
             [--variant NAME] [--start N] [--budget N] [--set key=value ...]
    rfmc validate-oracles
    rfmc list-experiments

Exit codes: 0 on success, 2 for bad input or config, 3 when a run fails or
an oracle check does not pass.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, RfmcError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURE = 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rfmc", description="Rejection-free Markov chain experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file or by name")
    run.add_argument("config", help="path to an INI config, or a registered experiment name")
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--out")
    run.add_argument("--variant", action="append", help="restrict to this variant (repeatable)")
    run.add_argument("--start", help="shortcut for --set start=N")
    run.add_argument("--budget", help="shortcut for --set budget=N")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a parameter (repeatable)")

    sub.add_parser("validate-oracles", help="check closed-form oracles against exact linear algebra")
    sub.add_parser("list-experiments", help="list experiments, variants and default parameters")
    return ap


def _build_config(args):
    from . import experiments as ex

    if Path(args.config).is_file():
        cfg = ex.parse_config(args.config)
    elif args.config in ex.REGISTRY:
        cfg = ex.default_config(args.config)
    else:
        raise ConfigError(f"no such file or experiment: {args.config!r}")
    if args.seed is not None:
        cfg.seed = ex._seed(args.seed)
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("must be positive", "threads")
        cfg.threads = args.threads
    if args.out is not None:
        cfg.out = args.out
    if args.variant:
        cfg = ex.with_variants(cfg, ",".join(args.variant))
    overrides = list(args.set)
    if args.start is not None:
        overrides.append(f"start={args.start}")
    if args.budget is not None:
        overrides.append(f"budget={args.budget}")
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected KEY=VALUE, got {item!r}", "set")
        cfg = ex.with_param(cfg, key, value)
    return cfg


def _cmd_run(args) -> int:
    from . import experiments as ex

    cfg = _build_config(args)
    summary = ex.run_experiment(cfg)
    print(f"wrote {Path(cfg.out) / cfg.name}")
    print(json.dumps(summary.get("comparison", {}), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_validate(args) -> int:
    from . import experiments as ex

    rows = ex.oracle_rows()
    print(ex.format_oracle_table(rows))
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAILURE


def _cmd_list(args) -> int:
    from . import experiments as ex

    for name, exp in ex.REGISTRY.items():
        print(f"{name}: {exp.description}")
        print(f"  variants: {', '.join(exp.variants)}")
        params = ", ".join(f"{k}={v}" for k, v in exp.defaults.items())
        print(f"  defaults: {params}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "validate-oracles": _cmd_validate, "list-experiments": _cmd_list}
    try:
        return handler[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RfmcError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
