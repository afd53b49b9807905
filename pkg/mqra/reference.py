"""
Published reference tables and construction recipes.

The tables live in data/reference_tables.json keyed by their captions;
tolerance policy lives next to the values. reproduce_table recomputes a
table from scratch and returns a side-by-side comparison with a verdict.
"""

import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import orjson
from pydantic import BaseModel, Field

from mqra.approximant import (
    Approximant,
    Recipe,
    build_approximant,
    constraint_residuals,
    evaluate,
    prepare_bank,
    series_source,
)
from mqra.asymptotics import asymptotic_series
from mqra.core import ProblemFamily, validate_family
from mqra.odesolve import ShootingConfig, solve_eigen
from mqra.perturb import SeriesData, asymptotic_point, exact_harmonic_series, finite_point
from utils.batch_processor import ParallelMapper
from utils.cache import SeriesBank
from utils.config import get_settings
from utils.exceptions import InvalidInputError
from utils.structured_logger import Stopwatch, get_logger

logger = get_logger(__name__)

DEFAULT_PATH = Path(__file__).resolve().parent.parent / "data" / "reference_tables.json"
TABLE_IDS = ("I", "II", "III", "IV", "V", "VI", "VII", "VIII")


class TableSpec(BaseModel):
    caption: str
    kind: str
    a: int
    b: int
    rows: List[str] = Field(default_factory=list)
    points: List[float] = Field(default_factory=list)
    values: Dict[str, Any]
    tolerance: Dict[str, Any]
    excluded: List[Dict[str, Any]] = Field(default_factory=list)
    source: Optional[str] = None
    inputs: Dict[str, str] = Field(default_factory=dict)
    recipes: Dict[str, str] = Field(default_factory=dict)
    informational_levels: List[int] = Field(default_factory=list)
    judge_coefficients: bool = True

    @property
    def family(self) -> ProblemFamily:
        return validate_family(self.a, self.b)

    @property
    def levels(self) -> List[int]:
        return sorted(int(k) for k in self.values)


class ReferenceData(BaseModel):
    recipes: Dict[str, Recipe]
    tables: Dict[str, TableSpec]


@lru_cache(maxsize=4)
def load_reference(path: Optional[str] = None) -> ReferenceData:
    """Parse the reference file (MQRA_REFERENCE_FILE overrides the bundled copy)."""
    location = Path(path or os.getenv("MQRA_REFERENCE_FILE") or DEFAULT_PATH)
    if not location.is_file():
        raise InvalidInputError(f"Reference file not found: {location}", field="reference", value=str(location))
    return ReferenceData.model_validate(orjson.loads(location.read_bytes()))


def get_recipe(name: str) -> Recipe:
    recipes = load_reference().recipes
    if name not in recipes:
        raise InvalidInputError(f"Unknown recipe {name!r}; known: {sorted(recipes)}", field="recipe", value=name)
    return recipes[name]


def get_table(table_id: str) -> TableSpec:
    tables = load_reference().tables
    if table_id not in tables:
        raise InvalidInputError(f"Unknown table {table_id!r}; known: {list(TABLE_IDS)}", field="table",
                                value=table_id)
    return tables[table_id]


def published_approximant(table_id: str, level: int) -> Approximant:
    """Approximant built from the printed coefficients of an approximant table."""
    table = get_table(table_id)
    if table.kind != "approximant":
        raise InvalidInputError(f"Table {table_id} does not hold approximants", field="table", value=table_id)
    recipe = get_recipe(table.recipes[str(level)])
    entry = table.values[str(level)]
    return Approximant(
        family=table.family,
        level=level,
        N=recipe.N,
        mu=recipe.mu,
        piece_coeffs=tuple(np.array(p) for p in entry["pieces"]),
        q=np.array(entry["q"]),
        constraints=tuple(recipe.constraints()),
        diagnostics={"source": f"table {table_id}"},
    )


def published_bank(table_id: str, level: int, bank: Optional[SeriesBank] = None) -> SeriesBank:
    """
    Bank holding the printed series data an approximant table was built from.

    Seeds an existing bank when one is given; printed entries replace
    whatever the bank held at those points. Tables that never printed their
    node eigenvalues list only "power" and "asymptotic" inputs.
    """
    table = get_table(table_id)
    family = table.family
    bank = bank if bank is not None else SeriesBank(family)

    def seed(point, coefficients, source: str) -> None:
        bank.invalidate(level, point)
        bank.put(SeriesData(family=family, level=level, point=point, coefficients=tuple(coefficients),
                            meta={"source": f"table {source}"}))

    if "power" in table.inputs:
        power = get_table(table.inputs["power"])
        seed(finite_point(0.0), (float(Fraction(v)) for v in power.values[str(level)]), table.inputs["power"])
    if "asymptotic" in table.inputs:
        asym = get_table(table.inputs["asymptotic"])
        seed(asymptotic_point(), asym.values[str(level)], table.inputs["asymptotic"])
    if "nodes" in table.inputs:
        nodes = get_table(table.inputs["nodes"])
        for alpha, value in zip(nodes.points, nodes.values[str(level)]):
            seed(finite_point(alpha), (value,), table.inputs["nodes"])
    return bank


@dataclass
class ComparisonRow:
    table: str
    level: int
    entry: str
    published: Union[float, str]
    computed: Union[float, str]
    abs_delta: float
    rel_delta: float
    tolerance: float
    judged: bool = True
    passed: bool = True


@dataclass
class TableReport:
    table: str
    caption: str
    rows: List[ComparisonRow] = field(default_factory=list)
    tolerance: Dict[str, Any] = field(default_factory=dict)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if r.judged and not r.passed)

    @property
    def verdict(self) -> bool:
        return self.failures == 0

    def summary(self) -> Dict[str, Any]:
        judged = [r for r in self.rows if r.judged]
        return {
            "table": self.table,
            "caption": self.caption,
            "entries": len(self.rows),
            "judged": len(judged),
            "failures": self.failures,
            "max_rel_delta": max((r.rel_delta for r in judged), default=0.0),
            "verdict": "pass" if self.verdict else "fail",
            "tolerance": self.tolerance,
        }

    def to_records(self) -> List[Dict[str, Any]]:
        return [asdict(r) for r in self.rows]


def _numeric_row(table_id: str, level: int, entry: str, published: float, computed: float,
                 tolerance: float, judged: bool = True) -> ComparisonRow:
    abs_delta = abs(computed - published)
    rel_delta = abs_delta / abs(published) if published != 0 else abs_delta
    return ComparisonRow(table=table_id, level=level, entry=entry, published=float(published), computed=float(computed),
                         abs_delta=abs_delta, rel_delta=rel_delta, tolerance=tolerance, judged=judged,
                         passed=bool(rel_delta <= tolerance))


def _excluded(table: TableSpec, level: int, row: int) -> bool:
    return any(e["level"] == level and e["row"] == row for e in table.excluded)


def _reproduce_exact(table_id: str, table: TableSpec, report: TableReport) -> None:
    for level in table.levels:
        expected = [Fraction(v) for v in table.values[str(level)]]
        series = exact_harmonic_series(table.b, level, len(expected))
        for label, published, computed in zip(table.rows, expected, series.coefficients):
            delta = abs(float(computed - published))
            report.rows.append(ComparisonRow(
                table=table_id, level=level, entry=label, published=str(published), computed=str(computed),
                abs_delta=delta, rel_delta=delta / abs(float(published)), tolerance=0.0,
                passed=computed == published,
            ))


def _reproduce_asymptotic(table_id: str, table: TableSpec, report: TableReport,
                          config: Optional[ShootingConfig]) -> None:
    tolerances = table.tolerance["rel"]

    def compute(level: int):
        return asymptotic_series(table.family, level, len(table.rows), config).coefficients

    computed_by_level = ParallelMapper(operation=f"reproduce_{table_id}").map(compute, table.levels)
    for level, computed in zip(table.levels, computed_by_level):
        for row, (label, published) in enumerate(zip(table.rows, table.values[str(level)])):
            report.rows.append(_numeric_row(table_id, level, label, published, computed[row], tolerances[row],
                                            judged=not _excluded(table, level, row)))


def _reproduce_eigenvalues(table_id: str, table: TableSpec, report: TableReport,
                           config: Optional[ShootingConfig]) -> None:
    tolerance = table.tolerance["rel"]
    jobs = [(level, alpha) for level in table.levels for alpha in table.points]
    energies = ParallelMapper(operation=f"reproduce_{table_id}").map(
        lambda job: solve_eigen(table.family.direct_potential(job[1]), job[0], config)[0], jobs)
    for (level, alpha), energy in zip(jobs, energies):
        published = table.values[str(level)][table.points.index(alpha)]
        report.rows.append(_numeric_row(table_id, level, f"E_0(lambda={alpha:g})", published, energy, tolerance))


def _coefficient_rows(table_id: str, level: int, built: Approximant, published: Approximant,
                      tolerance: float, judged: bool) -> List[ComparisonRow]:
    rows = []
    letters = "abcdefgh"
    for j, (mine, theirs) in enumerate(zip(built.piece_coeffs, published.piece_coeffs)):
        for k, (c, p) in enumerate(zip(mine, theirs)):
            rows.append(_numeric_row(table_id, level, f"{letters[j]}_{k}", p, c, tolerance, judged))
    for k, (c, p) in enumerate(zip(built.q, published.q), start=1):
        rows.append(_numeric_row(table_id, level, f"q_{k}", p, c, tolerance, judged))
    return rows


def _reproduce_approximant(table_id: str, table: TableSpec, report: TableReport,
                           config: Optional[ShootingConfig]) -> None:
    tolerance = table.tolerance["rel"]
    family = table.family
    shared_bank = None
    if table.source != "published":
        config = config or ShootingConfig.from_settings()
        shared_bank = SeriesBank(family, cache_dir=get_settings().cache_dir, compute=series_source(family, config),
                                 solver=config.snapshot())

    for level in table.levels:
        recipe = get_recipe(table.recipes[str(level)])
        constraints = recipe.constraints()
        if table.source == "published":
            bank = published_bank(table_id, level)
        else:
            # printed inputs first; only what the table never printed is computed
            bank = published_bank(table_id, level, shared_bank)
            prepare_bank(bank, level, constraints)
        built = build_approximant(family, level, recipe.N, recipe.mu, constraints, bank)
        published = published_approximant(table_id, level)
        judged = level not in table.informational_levels
        report.rows.extend(_coefficient_rows(table_id, level, built, published, tolerance,
                                             judged and table.judge_coefficients))

        if "residual" in table.tolerance:
            # printed coefficients against the recomputed constraint rows
            for token, residual in constraint_residuals(published, bank):
                report.rows.append(_numeric_row(table_id, level, f"residual[{token}]", 0.0, residual,
                                                table.tolerance["residual"], judged))

        if "evaluation_rel" in table.tolerance:
            # printed approximant against freshly computed node eigenvalues
            for constraint in constraints:
                if constraint.kind == "finite" and constraint.order == 0 and constraint.alpha > 0:
                    target = bank.finite(level, constraint.alpha, 0)
                    value = evaluate(published, constraint.alpha)
                    report.rows.append(_numeric_row(table_id, level, f"E_app(lambda={constraint.alpha:g})",
                                                    target, value, table.tolerance["evaluation_rel"], judged))


def reproduce_table(table_id: str, config: Optional[ShootingConfig] = None) -> TableReport:
    """
    Recompute one published table and compare entry by entry.

    Args:
        table_id: Roman numeral I..VIII
        config: Shooting configuration for every numeric solve

    Returns:
        TableReport with one ComparisonRow per entry and a verdict
    """
    table = get_table(table_id)
    report = TableReport(table=table_id, caption=table.caption, tolerance=table.tolerance)
    with Stopwatch(logger, "reproduce_table", table=table_id):
        if table.kind == "exact_series":
            _reproduce_exact(table_id, table, report)
        elif table.kind == "asymptotic_series":
            _reproduce_asymptotic(table_id, table, report, config)
        elif table.kind == "eigenvalues":
            _reproduce_eigenvalues(table_id, table, report, config)
        elif table.kind == "approximant":
            _reproduce_approximant(table_id, table, report, config)
        else:
            raise InvalidInputError(f"Unknown table kind {table.kind!r}", field="kind", value=table.kind)

    log = logger.info if report.verdict else logger.warning
    log(f"Table {table_id} reproduced", operation="reproduce_table", table=table_id,
        verdict=report.summary()["verdict"], failures=report.failures)
    return report


def resolve_tables(selection: str) -> List[str]:
    """'all' or one table id (case-insensitive)."""
    if selection.lower() == "all":
        return list(TABLE_IDS)
    table_id = selection.upper()
    if table_id not in TABLE_IDS:
        raise InvalidInputError(f"Table must be one of {list(TABLE_IDS)} or 'all'", field="table", value=selection)
    return [table_id]
