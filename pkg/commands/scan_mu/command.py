"""
scan-mu: choose the auxiliary-function scale among candidate values.
"""

from typing import Any

from commands.common import (
    build_manifest,
    dump_json,
    emit,
    resolve_constraints,
    run_command,
    shooting_config,
    solver_block,
)
from mqra.approximant import check_constraints, prepare_bank, scan_mu, series_source
from utils.cache import SeriesBank
from utils.config import get_settings
from utils.structured_logger import RunContext
from utils.validation import parse_grid_spec, parse_positive_floats


def command_handler(args: Any) -> int:
    """Write the mu report: every candidate with its defect verdict and max error."""

    def body(context: RunContext) -> None:
        mus = parse_positive_floats(args.mus, "mus")
        family, N, _, constraints = resolve_constraints(args)
        check_constraints(family, N, constraints)
        audit = parse_grid_spec(args.audit_grid) if args.audit_grid else None

        config = shooting_config(args)
        series_dir = args.series_dir or get_settings().cache_dir
        bank = SeriesBank(family, cache_dir=series_dir, compute=series_source(family, config),
                          solver=config.snapshot())
        prepare_bank(bank, args.level, constraints)

        best_mu, report = scan_mu(family, args.level, N, constraints, bank, mus, audit, config)
        manifest = build_manifest("scan-mu", family, [args.level], constraints,
                                  solver_block(config, mus=mus), [args.out or "stdout"])
        emit(dump_json({**report.to_dict(), "manifest": manifest.model_dump(exclude_none=True)}), args.out)
        context.log_operation("scan_mu", "mu report written", best_mu=best_mu, candidates=len(mus))

    return run_command("scan-mu", args, body)
