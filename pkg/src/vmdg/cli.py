"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 step failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .driver import (
    SCENARIOS,
    OutputSinks,
    build_initial_state,
    build_scenario,
    run_simulation,
)
from .integrators import StepFailure
from .state import METHODS, ConfigError, load_config


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vmdg",
        description="Hermite-DG Vlasov-Maxwell solver: run a benchmark scenario "
        "or a TOML-configured simulation.",
    )
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--scenario", choices=SCENARIOS, help="built-in benchmark preset")
    p.add_argument("--method", choices=METHODS, help="time integrator / Maxwell flux")
    p.add_argument("--dt", type=float, help="time step override")
    p.add_argument("--t-end", type=float, dest="t_end", help="final time override")
    p.add_argument("--out-dir", default="out", help="output directory (default: ./out)")
    p.add_argument("--output-every", type=int, help="diagnostics cadence in steps")
    p.add_argument("--snapshot-every", type=int, help="field snapshot cadence in steps")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for key in ("method", "dt", "t_end", "output_every", "snapshot_every"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val

    try:
        if args.scenario:
            config, state = build_scenario(args.scenario, overrides)
        elif args.config:
            config = load_config(args.config)
            if overrides:
                config = config.with_overrides(**overrides)
            if config.scenario not in SCENARIOS:
                raise ConfigError(
                    "config files need a built-in scenario id for the initial "
                    f"state; set [scenario] id to one of {SCENARIOS}"
                )
            state = build_initial_state(config)
        else:
            print("error: provide --scenario or --config", file=sys.stderr)
            return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    try:
        sinks = OutputSinks(args.out_dir)
    except (IOError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4

    try:
        result = run_simulation(config, state, sinks)
    except StepFailure as exc:
        print(f"step failure: {exc}", file=sys.stderr)
        return 3
    except (IOError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4

    last = result.records[-1]
    print(
        f"done: {config.scenario} method={config.method} t={last.t:g} "
        f"dE_tot_rel={last.de_tot_rel:.3e} -> {args.out_dir}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
