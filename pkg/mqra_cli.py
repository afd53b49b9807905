#!/usr/bin/env python3
"""
Command-line front end.

    python mqra_cli.py expand --a 2 --b 4 --level 0 --point 0 --terms 6 --exact
    python mqra_cli.py build --recipe quartic-n3 --level 0 --out q0.json
    python mqra_cli.py sweep --approximant q0.json --grid log:0.01:100:200
    python mqra_cli.py scan-mu --recipe quartic-n3 --level 0 --mus 0.5,1,2,3
    python mqra_cli.py reproduce --table all --out-dir reports/
"""

import argparse
import re
import sys
from typing import List, Optional

from dotenv import load_dotenv

from commands.build.command import command_handler as build_handler
from commands.expand.command import command_handler as expand_handler
from commands.reproduce.command import command_handler as reproduce_handler
from commands.scan_mu.command import command_handler as scan_mu_handler
from commands.sweep.command import command_handler as sweep_handler
from utils.config import reset_settings

REPLACE_FLAG = re.compile(r"^--replace-power-(\d+)-by(?:=(.*))?$")


def normalize_argv(argv: List[str]) -> List[str]:
    """Rewrite --replace-power-<K>-by TOKEN into --replace-power K=TOKEN."""
    out: List[str] = []
    i = 0
    while i < len(argv):
        match = REPLACE_FLAG.match(argv[i])
        if match:
            token = match.group(2)
            if token is None:
                token = argv[i + 1] if i + 1 < len(argv) else ""
                i += 1
            out.extend(["--replace-power", f"{match.group(1)}={token}"])
        else:
            out.append(argv[i])
        i += 1
    return out


def _add_shooting_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--h", type=float, help="Grid step (default MQRA_GRID_STEP)")
    parser.add_argument("--x-max", dest="x_max", type=float, help="Grid extent (default: from the turning point)")
    parser.add_argument("--tol-e", dest="tol_e", type=float, help="Relative eigenvalue tolerance")
    parser.add_argument("--decay-tol", dest="decay_tol", type=float, help="Decay/mismatch tolerance")


def _add_constraint_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--recipe", help="Named recipe from the reference data")
    parser.add_argument("--a", type=int, help="Base exponent")
    parser.add_argument("--b", type=int, help="Perturbation exponent")
    parser.add_argument("--level", type=int, required=True, help="Eigenvalue index")
    parser.add_argument("--N", type=int, help="Polynomial degree")
    parser.add_argument("--powers", type=int, help="lambda=0 orders 0..k-1")
    parser.add_argument("--asymptotic", type=int, help="Asymptotic terms E~_0..E~_{k-1}")
    parser.add_argument("--nodes", help="Comma list of alpha or d<k>@alpha tokens")
    parser.add_argument("--replace-power", dest="replace_power", action="append",
                        help=argparse.SUPPRESS)
    parser.add_argument("--series-dir", dest="series_dir", help="Directory of SeriesData documents")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mqra",
        description="Multi-point quasi-rational approximants for x^a + lambda x^b eigenvalues",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    expand = sub.add_parser("expand", help="Series about lambda=alpha or lambda=infinity")
    expand.add_argument("--a", type=int, required=True)
    expand.add_argument("--b", type=int, required=True)
    expand.add_argument("--level", type=int, required=True)
    expand.add_argument("--point", required=True, help="alpha >= 0 or 'asymptotic'")
    expand.add_argument("--terms", type=int, required=True)
    expand.add_argument("--exact", action="store_true", help="Rational series (a=2, point 0)")
    expand.add_argument("--method", choices=("projection", "shoot"), default="projection")
    expand.add_argument("--out")
    _add_shooting_flags(expand)
    expand.set_defaults(handler=expand_handler)

    build = sub.add_parser("build", help="Assemble and solve one approximant")
    _add_constraint_flags(build)
    build.add_argument("--mu", type=float)
    build.add_argument("--allow-defects", dest="allow_defects", action="store_true")
    build.add_argument("--no-compute", dest="no_compute", action="store_true",
                       help="Use only series found in --series-dir")
    build.add_argument("--out")
    build.add_argument("--physical", metavar="A,B",
                       help="Also report the eigenvalue of -d^2/dx^2 + A x^a + B x^b")
    _add_shooting_flags(build)
    build.set_defaults(handler=build_handler)

    sweep = sub.add_parser("sweep", help="Relative error against the shooting oracle")
    sweep.add_argument("--approximant", required=True)
    sweep.add_argument("--grid", required=True, help="log:a:b:n, linear:a:b:n or a comma list")
    sweep.add_argument("--out")
    _add_shooting_flags(sweep)
    sweep.set_defaults(handler=sweep_handler)

    scan = sub.add_parser("scan-mu", help="Choose mu by maximum relative error")
    _add_constraint_flags(scan)
    scan.add_argument("--mus", required=True, help="Comma list of positive candidates")
    scan.add_argument("--audit-grid", dest="audit_grid")
    scan.add_argument("--out")
    _add_shooting_flags(scan)
    scan.set_defaults(handler=scan_mu_handler)

    reproduce = sub.add_parser("reproduce", help="Recompute the published tables")
    reproduce.add_argument("--table", required=True, help="I..VIII or all")
    reproduce.add_argument("--out-dir", dest="out_dir", default="reports")
    _add_shooting_flags(reproduce)
    reproduce.set_defaults(handler=reproduce_handler)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv(override=False)
    reset_settings()
    parser = build_parser()
    try:
        args = parser.parse_args(normalize_argv(list(sys.argv[1:] if argv is None else argv)))
    except SystemExit as e:
        return 2 if e.code else 0
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
