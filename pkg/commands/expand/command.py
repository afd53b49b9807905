"""
expand: expansion coefficients of E(lambda) about one point.
Writes a SeriesData document, or a RationalSeries document with --exact.
"""

from typing import Any

from commands.common import build_manifest, emit, run_command, shooting_config, solver_block
from mqra.asymptotics import asymptotic_series
from mqra.core import validate_family
from mqra.perturb import exact_harmonic_series, numeric_series
from utils.exceptions import InvalidInputError
from utils.structured_logger import RunContext


def parse_point(text: str):
    """'asymptotic' or a nonnegative alpha."""
    if text.strip().lower() == "asymptotic":
        return None
    try:
        alpha = float(text)
    except ValueError:
        raise InvalidInputError("--point must be a number or 'asymptotic'", field="point", value=text)
    if alpha < 0:
        raise InvalidInputError("--point must be nonnegative", field="point", value=text)
    return alpha


def command_handler(args: Any) -> int:
    """
    Compute and write one series.

    Args:
        args: Namespace with a, b, level, point, terms, exact, method, out
              and the shooting overrides

    Returns:
        Process exit code
    """

    def body(context: RunContext) -> None:
        family = validate_family(args.a, args.b)
        alpha = parse_point(args.point)
        if args.terms < 1:
            raise InvalidInputError("--terms must be at least 1", field="terms", value=args.terms)
        config = shooting_config(args)

        if args.exact:
            if family.a != 2 or alpha != 0.0:
                raise InvalidInputError("--exact needs a=2 and --point 0", field="exact")
            series = exact_harmonic_series(family.b, args.level, args.terms)
            manifest = build_manifest("expand", family, [args.level], solver={"method": "exact"},
                                      outputs=[args.out or "stdout"])
            data = series.to_json(manifest)
        else:
            if alpha is None:
                series = asymptotic_series(family, args.level, args.terms, config).to_series_data()
            else:
                series = numeric_series(family, args.level, alpha, args.terms, config, method=args.method)
            manifest = build_manifest("expand", family, [args.level],
                                      solver=solver_block(config, method=args.method),
                                      outputs=[args.out or "stdout"])
            data = series.to_json(manifest)

        emit(data, args.out)
        context.log_operation("expand", "Series written", level=args.level, point=args.point,
                              terms=args.terms, out=args.out or "stdout")

    return run_command("expand", args, body)
