"""Command-line entry point ``scomqaoa``.

Exit codes: 0 success, 1 configuration error, 2 convergence failure,
3 numerical failure.  Failures print a one-line JSON error document to
stderr; successes print a JSON summary to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from scomqaoa import harness
from scomqaoa.config import ConfigError, RunConfig
from scomqaoa.qng import NumericalFailure, SectorMismatch

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CONVERGENCE = 2
EXIT_NUMERICAL = 3

COMMANDS = {
    "prepare": harness.cmd_prepare,
    "sweep-layers": harness.cmd_sweep_layers,
    "sweep-size": harness.cmd_sweep_size,
    "sweep-coupling": harness.cmd_sweep_coupling,
    "spectrum": harness.cmd_spectrum,
}

# flag -> RunConfig field
FLAGS = {
    "--model": ("model", str),
    "--size": ("size", str),
    "--lambda-x": ("lambda_x", str),
    "--lambda-z": ("lambda_z", float),
    "--lambda-zxx": ("lambda_zxx", float),
    "--gamma": ("gamma", float),
    "--grouping": ("grouping", str),
    "--sector": ("sector", str),
    "--state-index": ("state_index", int),
    "--layers": ("layers", str),
    "--eta": ("eta", float),
    "--epsilon": ("epsilon", float),
    "--cutoff": ("cutoff", float),
    "--max-iters": ("max_iters", int),
    "--init-angle": ("init_angle", float),
    "--cost": ("cost", str),
    "--restart": ("restart", str),
    "--restarts": ("restarts", int),
    "--trotter-order": ("trotter_order", int),
    "--seed": ("seed", int),
    "--k": ("k", int),
    "--jobs": ("jobs", int),
    "--out": ("out", str),
}

HELP = {
    "--size": "chain length; comma list or range (e.g. 6,8,10) for sweep-size",
    "--lambda-x": "longitudinal field; comma list for sweep-coupling",
    "--layers": "layer count N, or a range such as 1-6 for sweeps",
    "--sector": "prod Z sector: +1, -1 or none (default: +1 when conserved)",
    "--k": "levels per sector for spectrum",
    "--jobs": "worker processes for sweep-layers",
    "--restart": "auto (random restarts for excited states), none or random",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    for flag, (dest, typ) in FLAGS.items():
        common.add_argument(flag, dest=dest, type=typ, default=None, help=HELP.get(flag))
    common.add_argument("--until-converged", dest="until_converged", action="store_const", const=True,
                        default=None, help="stop sweep-layers at the first converged N")
    common.add_argument("--tied", dest="tied", action="store_const", const=True, default=None,
                        help="share one angle per sublayer (translation-invariant ansatz)")
    common.add_argument("--config", default=None, help="JSON file with RunConfig fields")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="scomqaoa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__.splitlines()[0])
    return parser


def _fail(code: int, exc: BaseException) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {dest: getattr(args, dest) for dest, _ in FLAGS.values()}
    overrides["until_converged"] = args.until_converged
    overrides["tied"] = args.tied
    try:
        cfg = RunConfig.from_sources(args.config, overrides)
        result = COMMANDS[args.command](cfg)
    except (ConfigError, SectorMismatch) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (NumericalFailure, ArithmeticError, MemoryError) as exc:
        return _fail(EXIT_NUMERICAL, exc)
    print(json.dumps(result.summary, indent=2, sort_keys=True, default=str))
    if not result.ok:
        return _fail(EXIT_CONVERGENCE, RuntimeError("fidelity cutoff not reached"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
