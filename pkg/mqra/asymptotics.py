"""
Large-coupling expansion.

In y = lambda^{1/(b+2)} x the problem becomes -d^2/dy^2 + y^b + lambda~ y^a
with lambda~ = lambda^{-(a+2)/(b+2)}, so E~(lambda~) is expanded by the same
chain as the finite points with the roles of the exponents swapped.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from mqra.core import AsymptoticStructure, ProblemFamily, asymptotic_structure
from mqra.odesolve import ShootingConfig, build_chain
from mqra.perturb import SeriesData, asymptotic_point
from utils.config import get_settings
from utils.exceptions import InvalidInputError
from utils.structured_logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class AsymptoticSeries:
    """E~_0..E~_{K-1} with their grouping into pieces."""
    family: ProblemFamily
    level: int
    coefficients: Tuple[float, ...]
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.coefficients:
            raise InvalidInputError("Asymptotic series needs at least one coefficient", field="coefficients")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @property
    def structure(self) -> AsymptoticStructure:
        return asymptotic_structure(self.family)

    @property
    def pieces(self) -> Tuple[Tuple[float, ...], ...]:
        """Piece j holds E~_j, E~_{m+j}, E~_{2m+j}, ..."""
        m = self.structure.m
        return tuple(self.coefficients[j::m] for j in range(m))

    def to_series_data(self) -> SeriesData:
        return SeriesData(family=self.family, level=self.level, point=asymptotic_point(),
                          coefficients=self.coefficients, meta=self.meta)

    @classmethod
    def from_series_data(cls, series: SeriesData) -> "AsymptoticSeries":
        if not series.is_asymptotic:
            raise InvalidInputError("Series is not an asymptotic expansion", field="point",
                                    value=series.point.type)
        return cls(family=series.family, level=series.level,
                   coefficients=series.coefficients, meta=dict(series.meta))


def flatten_pieces(pieces: Tuple[Tuple[float, ...], ...]) -> Tuple[float, ...]:
    """Inverse of AsymptoticSeries.pieces."""
    m = len(pieces)
    total = sum(len(p) for p in pieces)
    return tuple(pieces[i % m][i // m] for i in range(total))


def asymptotic_series(family: ProblemFamily, level: int, n_terms: int,
                      config: Optional[ShootingConfig] = None) -> AsymptoticSeries:
    """
    Coefficients E~_0..E~_{n_terms-1} of the large-coupling expansion.

    E~_0 is the eigenvalue of -d^2/dy^2 + y^b; higher terms come from the
    chain with perturbation y^a.
    """
    config = config or ShootingConfig.from_settings()
    budget = get_settings().max_terms
    meta: Dict[str, Any] = {}
    if n_terms > budget:
        message = f"{n_terms} terms requested beyond the precision budget of {budget}"
        meta["warnings"] = [message]
        logger.warning(message, operation="asymptotic_series", level=level)

    state = build_chain(family.scaled_potential(), family.a, level, n_terms, config)
    meta.update({
        "solver": "numerov",
        "method": "projection",
        "x_max": state.base.x_max,
        "h": config.h,
        "tol_e": config.tol_e,
        "decay_tol": config.decay_tol,
        "n_terms": n_terms,
    })
    logger.info("Asymptotic series computed", operation="asymptotic_series",
                family=family.label, level=level, n_terms=n_terms)
    return AsymptoticSeries(family=family, level=level, coefficients=state.energies, meta=meta)


def eval_asymptotic(series: AsymptoticSeries, coupling: float, n_terms: Optional[int] = None) -> float:
    """
    sum_{i<K} E~_i lambda^{e_j - s k} with i = m k + j.

    Raises:
        InvalidInputError: For lambda <= 0 or K beyond the available terms
    """
    if not coupling > 0:
        raise InvalidInputError("Asymptotic evaluation needs lambda > 0", field="lambda", value=coupling)
    count = len(series.coefficients) if n_terms is None else n_terms
    if not 1 <= count <= len(series.coefficients):
        raise InvalidInputError("Truncation beyond available terms", field="K", value=n_terms)

    structure = series.structure
    total = 0.0
    for i in range(count):
        j, r = structure.piece_of(i)
        total += series.coefficients[i] * coupling ** (float(structure.exponents[j]) - r)
    return total
