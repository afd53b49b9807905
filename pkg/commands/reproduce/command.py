"""
reproduce: recompute published tables and compare them entry by entry.
Writes table_<id>.csv per table and summary.json into the output directory.
"""

from pathlib import Path
from typing import Any

from commands.common import build_manifest, csv_bytes, dump_json, run_command, shooting_config, solver_block
from mqra.reference import reproduce_table, resolve_tables
from utils.exceptions import ReproductionError
from utils.structured_logger import RunContext

HEADER = ("table", "level", "entry", "published", "computed", "abs_delta", "rel_delta", "tolerance",
          "judged", "passed")


def command_handler(args: Any) -> int:
    """Exit 3 when any judged entry falls outside its tolerance."""

    def body(context: RunContext) -> None:
        tables = resolve_tables(args.table)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        config = shooting_config(args)

        summaries = []
        failed = []
        for table_id in tables:
            report = reproduce_table(table_id, config)
            csv_path = out_dir / f"table_{table_id}.csv"
            manifest = build_manifest("reproduce", solver=solver_block(config, table=table_id,
                                                                        tolerance=report.tolerance),
                                      outputs=[str(csv_path)])
            rows = [(r.table, r.level, r.entry, r.published, r.computed, r.abs_delta, r.rel_delta,
                     r.tolerance, r.judged, r.passed) for r in report.rows]
            csv_path.write_bytes(csv_bytes(HEADER, rows, manifest))
            summaries.append(report.summary())
            if not report.verdict:
                failed.append(report)
            context.log_operation("reproduce", f"Table {table_id} compared",
                                  verdict=report.summary()["verdict"], failures=report.failures)

        manifest = build_manifest("reproduce", solver=solver_block(config, tables=tables),
                                  outputs=[str(out_dir / "summary.json")])
        (out_dir / "summary.json").write_bytes(dump_json({
            "tables": summaries,
            "verdict": "fail" if failed else "pass",
            "manifest": manifest.model_dump(exclude_none=True),
        }))
        if failed:
            raise ReproductionError(
                f"{len(failed)} of {len(tables)} tables outside tolerance",
                table=",".join(r.table for r in failed),
                failures=sum(r.failures for r in failed),
            )

    return run_command("reproduce", args, body)
