"""
sweep: relative error of a stored approximant against the shooting oracle.
"""

from pathlib import Path
from typing import Any

from commands.common import build_manifest, csv_bytes, emit, run_command, shooting_config, solver_block
from mqra.approximant import Approximant, error_sweep
from utils.exceptions import InvalidInputError
from utils.structured_logger import RunContext
from utils.validation import parse_grid_spec

HEADER = ("lambda", "e_app", "e_shoot", "rel_err")


def command_handler(args: Any) -> int:
    """Write lambda,e_app,e_shoot,rel_err rows plus a max_rel_err summary row."""

    def body(context: RunContext) -> None:
        path = Path(args.approximant)
        if not path.is_file():
            raise InvalidInputError(f"Approximant file not found: {path}", field="approximant", value=str(path))
        approx = Approximant.from_json(path.read_bytes())
        grid = parse_grid_spec(args.grid)
        config = shooting_config(args)

        points = error_sweep(approx, approx.level, grid, config)
        worst = max(points, key=lambda p: p.rel_err)
        rows = [(p.coupling, p.e_app, p.e_shoot, p.rel_err) for p in points]
        rows.append(("max_rel_err", worst.coupling, None, worst.rel_err))

        manifest = build_manifest("sweep", approx.family, [approx.level], approx.constraints,
                                  solver_block(config, grid=args.grid, approximant=str(path)),
                                  [args.out or "stdout"])
        emit(csv_bytes(HEADER, rows, manifest), args.out)
        context.log_operation("sweep", "Error sweep written", points=len(points),
                              max_rel_err=worst.rel_err, argmax=worst.coupling)

    return run_command("sweep", args, body)
