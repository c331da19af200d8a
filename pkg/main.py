"""Main entry point for RLCk MOR."""
import argparse
import sys
from typing import List, Optional, Union

from core.branding import Branding
from core.commands import CommandRunner, EXIT_VALIDATION
from core.errors import ValidationError
from core.logger import Logger
from core.settings import AUTO, METHODS, SPACINGS, Settings
from services.generator_service import KINDS


def _fmax_value(text: str) -> Union[float, str]:
    if text.strip().lower() == AUTO:
        return AUTO
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a frequency in Hz or '{AUTO}', got {text!r}")


def _add_run_options(parser: argparse.ArgumentParser):
    """Flags shared by every command; None means "not given"."""
    group = parser.add_argument_group("run configuration")
    group.add_argument("--config", help="YAML config file (flags win over it)")
    group.add_argument("--tol", type=float, help="EKSM convergence tolerance (default 1e-2)")
    group.add_argument("--target-error", type=float, help="relative HSV-tail target (default 1e-2)")
    group.add_argument("--fmin", type=float, dest="f_min", help="lowest grid frequency in Hz")
    group.add_argument("--fmax", type=_fmax_value, dest="f_max",
                       help="highest grid frequency in Hz, or 'auto' for twice the dominant resonance (default)")
    group.add_argument("--points", type=int, help="number of grid frequencies (default 20)")
    group.add_argument("--spacing", choices=SPACINGS, help="grid spacing")
    group.add_argument("--maxiter", type=int, help="EKSM iteration limit (default 50)")
    group.add_argument("--basis-cap", type=int, help="EKSM basis width limit per side")
    group.add_argument("--z0", type=float, help="reference impedance in ohm (default 50)")
    group.add_argument("--method", choices=METHODS, help="reduction method (default eksm)")
    group.add_argument("--seed", type=int, help="generator seed")
    group.add_argument("--out-dir", help="output directory")
    group.add_argument("--c-min", type=float, help="capacitance added to capacitor-free nodes")
    group.add_argument("--no-regularize", dest="regularize", action="store_const", const=False,
                       help="do not patch capacitor-free nodes")
    group.add_argument("--no-timing", dest="record_timing", action="store_const", const=False,
                       help="leave wall time out of the summary")
    group.add_argument("--verbose", "-v", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=Branding.APP_ID, description=Branding.get_description())
    parser.add_argument("--version", action="version", version=Branding.get_banner())
    commands = parser.add_subparsers(dest="command", required=True)

    reduce_cmd = commands.add_parser("reduce", help="reduce a netlist or matrix bundle")
    reduce_cmd.add_argument("input", help="netlist file or Matrix Market bundle directory")

    compare_cmd = commands.add_parser("compare", help="max relative error between two models")
    compare_cmd.add_argument("model_a", help="reference model")
    compare_cmd.add_argument("model_b", help="model or ROM bundle under test")

    hsv_cmd = commands.add_parser("hsv", help="Hankel singular values and tail bounds")
    hsv_cmd.add_argument("input")

    gen_cmd = commands.add_parser("gen", help="write a synthetic benchmark netlist")
    gen_cmd.add_argument("kind", choices=KINDS)
    gen_cmd.add_argument("--size", type=int, required=True,
                         help="sections (ladder), grid side (mesh) or segments per line (coupled_lines)")
    gen_cmd.add_argument("--ports", type=int, default=1, help="ports (lines for coupled_lines)")
    gen_cmd.add_argument("--density", type=float, default=0.3, help="mutual coupling density")
    gen_cmd.add_argument("--output", "-o", help="netlist path (default inside --out-dir)")

    sweep_cmd = commands.add_parser("sweep", help="evaluate a model on the frequency grid")
    sweep_cmd.add_argument("input")
    sweep_cmd.add_argument("--format", dest="formats", action="append",
                           choices=("csv", "plot", "touchstone"),
                           help="output format, repeatable (default all)")

    for sub in (reduce_cmd, compare_cmd, hsv_cmd, gen_cmd, sweep_cmd):
        _add_run_options(sub)
    return parser


CONFIG_KEYS = ("tol", "target_error", "f_min", "f_max", "points", "spacing", "maxiter", "basis_cap",
               "z0", "method", "seed", "out_dir", "c_min", "regularize", "record_timing")


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logger = Logger()

    overrides = {key: getattr(args, key, None) for key in CONFIG_KEYS}
    if args.verbose:
        overrides["log_level"] = "DEBUG"
    try:
        config = Settings(args.config).load(overrides).validate()
    except ValidationError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    logger.set_log_level(config.log_level)
    logger.info(f"Starting {Branding.get_banner()}: {args.command}")

    runner = CommandRunner(config)
    if args.command == "reduce":
        return runner.run(runner.cmd_reduce, args.input)
    if args.command == "compare":
        return runner.run(runner.cmd_compare, args.model_a, args.model_b)
    if args.command == "hsv":
        return runner.run(runner.cmd_hsv, args.input)
    if args.command == "gen":
        return runner.run(runner.cmd_gen, args.kind, args.size, ports=args.ports,
                          density=args.density, output=args.output)
    return runner.run(runner.cmd_sweep, args.input, formats=args.formats)


if __name__ == "__main__":
    sys.exit(main())
