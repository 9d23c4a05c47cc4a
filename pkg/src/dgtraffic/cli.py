"""Command line entry point.

    dgtraffic run <scenario> [--tau T] [--elements-per-unit N] [--t-end T]
                             [--flux weighted|maxflux] [--right-of-way Q]
                             [--tvb-m M] [--out DIR] [--snapshots t1,t2,...]
                             [--no-figures]
    dgtraffic list-scenarios
    dgtraffic validate <scenario>

<scenario> is a file path or the name of a built-in scenario.

Exit codes: 0 success, 1 invalid scenario, 2 run aborted by a clamp event,
64 usage error, 74 output could not be written.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

from .network import FluxStrategy, NetworkError
from .output import OutputError, OutputPlan, write_outputs
from .scenario import BUILTIN, ScenarioError, load_scenario
from .simulation import SimulationAbort, Simulator

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ABORT = 2
EXIT_USAGE = 64
EXIT_IO = 74


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _times(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"snapshot times must be numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dgtraffic", description="DG simulation of LWR traffic on road networks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", help="run a scenario and write its outputs")
    r.add_argument("scenario", help="scenario file or built-in name")
    r.add_argument("--tau", type=_positive, help="time step")
    r.add_argument("--elements-per-unit", type=_positive, help="elements per unit road length")
    r.add_argument("--t-end", type=_positive, help="final time")
    r.add_argument("--flux", choices=[s.value for s in FluxStrategy], help="junction coupling for all junctions")
    r.add_argument("--right-of-way", type=float, metavar="Q", help="priority q of the first incoming road")
    r.add_argument("--tvb-m", type=float, metavar="M", help="TVB limiter constant")
    r.add_argument("--out", help="output directory (default: out/<scenario name>)")
    r.add_argument("--snapshots", type=_times, help="comma-separated snapshot times; empty for none")
    r.add_argument("--no-figures", action="store_true", help="skip the PNG figures")

    sub.add_parser("list-scenarios", help="print the built-in scenario names")

    v = sub.add_parser("validate", help="parse and validate a scenario without running it")
    v.add_argument("scenario", help="scenario file or built-in name")
    return p


def _load(args):
    s = load_scenario(args.scenario)
    if args.command != "run":
        return s
    return s.with_options(tau=args.tau, t_end=args.t_end, elements_per_unit=args.elements_per_unit,
                          flux=None if args.flux is None else FluxStrategy(args.flux),
                          right_of_way=args.right_of_way, tvb_m=args.tvb_m,
                          snapshots=args.snapshots, output_dir=args.out)


def _run(args, out) -> int:
    s = _load(args)
    directory = Path(s.output_dir or Path("out") / s.name)
    plan = OutputPlan(directory, figures=not args.no_figures)
    sim = Simulator(s.network, s.numerics, s.boundary)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            bundle = sim.run(s.initial_functions(), s.snapshots, progress=args.verbose)
        except SimulationAbort as e:
            print(f"run aborted: {e}", file=sys.stderr)
            for ev in e.events[:10]:
                print(f"  t={ev.time:.6g} road {ev.road} element {ev.element}: mean {ev.mean:.6g}",
                      file=sys.stderr)
            if e.bundle is not None:
                write_outputs(e.bundle, plan)
                print(f"partial results written to {directory}", file=sys.stderr)
            return EXIT_ABORT
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    paths = write_outputs(bundle, plan)
    drift = float(abs(bundle.conservation_residual).max())
    print(f"{s.name}: {bundle.steps_done} steps to t={bundle.times[-1]:g}, "
          f"mass {bundle.total_mass[0]:.10g} -> {bundle.total_mass[-1]:.10g} "
          f"(balance residual {drift:.2e})", file=out)
    print(f"wrote {len(paths)} files to {directory}", file=out)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")

    if args.command == "list-scenarios":
        for name in BUILTIN:
            print(name, file=out)
        return EXIT_OK
    try:
        if args.command == "validate":
            s = _load(args)
            print(f"{s.name}: ok ({len(s.network.roads)} roads, {len(s.network.junctions)} junctions)",
                  file=out)
            return EXIT_OK
        return _run(args, out)
    except (ScenarioError, NetworkError, ValueError) as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OutputError as e:
        print(f"output error: {e}", file=sys.stderr)
        return EXIT_IO


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
