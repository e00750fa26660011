"""Command line interface.

Verbs: validate, solve, simulate, verify-equivalence, decompose,
export-net.  Results go to stdout or --out in the format chosen by
--format (or the HFLCA_FORMAT environment variable).  Exit codes:
0 success, 1 validation error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Any, Mapping, Sequence

from .equivalence import (
    DOMINANCE_THRESHOLD,
    decompose_conversion_transportation,
    transportation_dominance,
    verify_equivalence,
)
from .errors import ModelValidationError, NumericalError
from .esn import MODE_DURATION, MODE_INSTANTANEOUS, build_net, simulate
from .files import (
    load_demand,
    load_firing,
    load_model,
    load_problem,
    load_scenario,
    parse_capability_key,
    realize_scenario,
)
from .incidence import build_incidence
from .lca import assemble_lca, solve
from .model import enumerate_capabilities
from .report import FORMATS, emit_report, export_net_dot

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

FORMAT_ENV = "HFLCA_FORMAT"


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors follow the validation exit code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _add_output_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format", choices=FORMATS, default=None,
        help=f"output format (default: ${FORMAT_ENV} or table)",
    )
    parser.add_argument(
        "--out", default="-", metavar="PATH",
        help="output destination ('-' for stdout)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hflca",
        description=(
            "Process-based life-cycle inventory over engineering-system "
            "nets: solve demands, simulate dynamics, check the classical "
            "reduction, and split conversion from transportation."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file and summarize it")
    p.add_argument("--model", required=True, metavar="FILE")
    _add_output_args(p)

    p = sub.add_parser("solve", help="solve a demand against a model or matrices")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", metavar="FILE")
    group.add_argument("--problem", metavar="FILE",
                       help="flat A/B matrices (JSON, may reference CSV)")
    p.add_argument("--demand", metavar="FILE",
                   help="demand file (JSON mapping/vector, or CSV vector)")
    _add_output_args(p)

    p = sub.add_parser("simulate", help="run a firing scenario over the net")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--scenario", "--schedule", dest="scenario", required=True,
                   metavar="FILE")
    p.add_argument("--horizon", type=int, default=None, metavar="K")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--mode", choices=[MODE_INSTANTANEOUS, MODE_DURATION],
                   default=None)
    p.add_argument("--enforce-nonnegative", action="store_true",
                   help="error when a buffer marking goes negative")
    _add_output_args(p)

    p = sub.add_parser("verify-equivalence",
                       help="check the one-step reduction against a demand")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--demand", required=True, metavar="FILE")
    _add_output_args(p)

    p = sub.add_parser("decompose",
                       help="split a firing's effect into conversion and "
                            "transportation parts")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--firing", required=True, metavar="FILE")
    p.add_argument("--threshold", type=float, default=DOMINANCE_THRESHOLD,
                   help="dominance ratio threshold (default %(default)s)")
    _add_output_args(p)

    p = sub.add_parser("export-net",
                       help="emit a DOT description of the net")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--out", default="-", metavar="PATH")

    return parser


def _resolve_format(args: argparse.Namespace) -> str:
    fmt = getattr(args, "format", None) or os.environ.get(FORMAT_ENV) or "table"
    if fmt not in FORMATS:
        raise ModelValidationError(
            f"{FORMAT_ENV}={fmt!r} is not a valid format "
            f"(choose from {', '.join(FORMATS)})"
        )
    return fmt


def _write_text(text: str, destination: str) -> None:
    if destination == "-":
        sys.stdout.write(text)
    else:
        with open(destination, "w") as handle:
            handle.write(text)


def _cmd_validate(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    capabilities = enumerate_capabilities(model)
    structure = build_incidence(model, capabilities)
    reduced = structure.reduced()
    fields = [
        ("operands", len(model.operands)),
        ("processes", len(model.processes)),
        ("resources", len(model.resources)),
        ("buffers", len(model.buffers)),
        ("capabilities", len(capabilities)),
        ("places", structure.minus.shape[0]),
        ("active places", reduced.n_rows),
    ]
    fmt = _resolve_format(args)
    if fmt == "json":
        text = json.dumps(
            {"kind": "validation", "schema_version": 1, "valid": True,
             "model": model.name, **{k.replace(" ", "_"): v for k, v in fields}},
            indent=2,
        ) + "\n"
    elif fmt == "csv":
        lines = ["item,count"] + [f"{k},{v}" for k, v in fields]
        text = "\n".join(lines) + "\n"
    else:
        name = f" '{model.name}'" if model.name else ""
        lines = [f"model{name} is valid"] + [
            f"  {k}: {v}" for k, v in fields
        ]
        text = "\n".join(lines) + "\n"
    _write_text(text, args.out)
    return EXIT_OK


def _cmd_solve(args: argparse.Namespace) -> int:
    if args.model:
        model = load_model(args.model)
        matrices = assemble_lca(model)
        if not args.demand:
            raise ModelValidationError("solve with --model needs --demand")
        demand = load_demand(args.demand)
    else:
        matrices, embedded = load_problem(args.problem)
        demand = load_demand(args.demand) if args.demand else embedded
        if demand is None:
            raise ModelValidationError(
                "the problem file embeds no demand; pass --demand"
            )
    solution = solve(matrices, demand)
    emit_report(solution, _resolve_format(args), args.out)
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    net = build_net(build_incidence(model))
    spec = load_scenario(args.scenario)
    changes: dict[str, Any] = {}
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.mode is not None:
        changes["mode"] = args.mode
    if args.enforce_nonnegative:
        changes["options"] = dataclasses.replace(
            spec.options, enforce_nonnegative=True
        )
    if changes:
        spec = dataclasses.replace(spec, **changes)
    realized = realize_scenario(spec, net)
    trajectory = simulate(
        net, realized.state, realized.schedule,
        options=realized.options, overrides=realized.overrides,
    )
    emit_report(trajectory, _resolve_format(args), args.out)
    return EXIT_OK


def _cmd_verify_equivalence(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    demand = load_demand(args.demand)
    report = verify_equivalence(model, demand)
    emit_report(report, _resolve_format(args), args.out)
    return EXIT_OK


def _cmd_decompose(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    structure = build_incidence(model)
    firing = load_firing(args.firing)
    if isinstance(firing, Mapping):
        firing = {parse_capability_key(k): v for k, v in firing.items()}
    report = decompose_conversion_transportation(structure, firing)
    verdicts = transportation_dominance(report, args.threshold)
    emit_report(report, _resolve_format(args), args.out, verdicts=verdicts)
    return EXIT_OK


def _cmd_export_net(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    net = build_net(build_incidence(model))
    _write_text(export_net_dot(net), args.out)
    return EXIT_OK


_HANDLERS = {
    "validate": _cmd_validate,
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "verify-equivalence": _cmd_verify_equivalence,
    "decompose": _cmd_decompose,
    "export-net": _cmd_export_net,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ModelValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
