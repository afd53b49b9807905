"""
Expansion data of E(lambda) about finite points.

Numeric series come from the chain machinery in mqra.odesolve run on
W = x^a + alpha x^b with perturbation x^b. For the harmonic base (a = 2,
alpha = 0) the chain is solved exactly: psi_n = P_n(x) exp(-x^2/2) with
rational polynomial coefficients.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import orjson

from mqra.core import ProblemFamily, validate_family
from mqra.odesolve import ShootingConfig, build_chain, solve_eigen
from utils.config import get_settings
from utils.exceptions import InvalidInputError
from utils.structured_logger import get_logger
from utils.validation import (
    FamilyModel,
    PointModel,
    RationalSeriesDocument,
    RunManifest,
    SeriesDocument,
)

logger = get_logger(__name__)

FINITE = "finite"
ASYMPTOTIC = "asymptotic"


def finite_point(alpha: float) -> PointModel:
    return PointModel(type=FINITE, alpha=float(alpha))


def asymptotic_point() -> PointModel:
    return PointModel(type=ASYMPTOTIC)


def point_label(point: PointModel) -> str:
    return ASYMPTOTIC if point.type == ASYMPTOTIC else repr(float(point.alpha))


@dataclass(frozen=True)
class SeriesData:
    """Coefficients of E(lambda) about one point, with the settings that produced them."""
    family: ProblemFamily
    level: int
    point: PointModel
    coefficients: Tuple[float, ...]
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.coefficients:
            raise InvalidInputError("Series needs at least one coefficient", field="coefficients")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @property
    def is_asymptotic(self) -> bool:
        return self.point.type == ASYMPTOTIC

    @property
    def alpha(self) -> Optional[float]:
        return self.point.alpha

    def to_document(self, manifest: Optional[RunManifest] = None) -> SeriesDocument:
        return SeriesDocument(
            family=FamilyModel(a=self.family.a, b=self.family.b),
            level=self.level,
            point=self.point,
            coefficients=list(self.coefficients),
            meta=self.meta,
            manifest=manifest,
        )

    def to_json(self, manifest: Optional[RunManifest] = None) -> bytes:
        return orjson.dumps(self.to_document(manifest).model_dump(exclude_none=True),
                            option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)

    @classmethod
    def from_document(cls, document: SeriesDocument) -> "SeriesData":
        return cls(
            family=validate_family(document.family.a, document.family.b),
            level=document.level,
            point=document.point,
            coefficients=tuple(document.coefficients),
            meta=dict(document.meta),
        )

    @classmethod
    def from_json(cls, raw: bytes) -> "SeriesData":
        return cls.from_document(SeriesDocument.model_validate(orjson.loads(raw)))


@dataclass(frozen=True)
class RationalSeries:
    """Exact E_k and the polynomial parts P_k of psi_k for the harmonic base."""
    level: int
    b: int
    coefficients: Tuple[Fraction, ...]
    polys: Tuple[Tuple[Fraction, ...], ...]

    def to_series_data(self) -> SeriesData:
        return SeriesData(
            family=validate_family(2, self.b),
            level=self.level,
            point=finite_point(0.0),
            coefficients=tuple(float(c) for c in self.coefficients),
            meta={"method": "exact", "n_terms": len(self.coefficients)},
        )

    def to_document(self, manifest: Optional[RunManifest] = None) -> RationalSeriesDocument:
        return RationalSeriesDocument(
            family=FamilyModel(a=2, b=self.b),
            level=self.level,
            point=finite_point(0.0),
            coefficients=[str(c) for c in self.coefficients],
            polys=[[str(p) for p in poly] for poly in self.polys],
            manifest=manifest,
        )

    def to_json(self, manifest: Optional[RunManifest] = None) -> bytes:
        return orjson.dumps(self.to_document(manifest).model_dump(exclude_none=True),
                            option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)

    @classmethod
    def from_document(cls, document: RationalSeriesDocument) -> "RationalSeries":
        return cls(
            level=document.level,
            b=document.family.b,
            coefficients=tuple(Fraction(c) for c in document.coefficients),
            polys=tuple(tuple(Fraction(p) for p in poly) for poly in document.polys),
        )


def hermite(level: int) -> List[Fraction]:
    """Physicists' Hermite polynomial H_level as a coefficient list."""
    previous: List[Fraction] = [Fraction(1)]
    if level == 0:
        return previous
    current: List[Fraction] = [Fraction(0), Fraction(2)]
    for n in range(1, level):
        following = [Fraction(0)] * (n + 2)
        for j, c in enumerate(current):
            following[j + 1] += 2 * c
        for j, c in enumerate(previous):
            following[j] -= 2 * n * c
        previous, current = current, following
    return current


def _poly_axpy(target: List[Fraction], coeff: Fraction, poly: Sequence[Fraction], shift: int = 0) -> None:
    for j, c in enumerate(poly):
        if c:
            target[j + shift] += coeff * c


def exact_harmonic_series(b: int, level: int, n_terms: int) -> RationalSeries:
    """
    Exact chain for W = x^2 with perturbation x^b.

    With psi_n = P_n exp(-x^2/2) the chain equations become
    D P_n = R_n, where D x^j = -j(j-1) x^{j-2} + 2(j - level) x^j and
    R_n = sum_{k=1}^{n} E_k P_{n-k} - x^b P_{n-1}. Coefficients are solved
    from the top degree down; the x^level row fixes E_n and p_level = 0.

    Args:
        b: Even perturbation exponent >= 4
        level: Eigenvalue index
        n_terms: Number of energies E_0..E_{n_terms-1}

    Returns:
        RationalSeries with exact Fractions
    """
    validate_family(2, b)
    if level < 0:
        raise InvalidInputError("Level must be nonnegative", field="level", value=level)
    if n_terms < 1:
        raise InvalidInputError("n_terms must be at least 1", field="n_terms", value=n_terms)

    base = hermite(level)
    energies: List[Fraction] = [Fraction(2 * level + 1)]
    polys: List[List[Fraction]] = [base]
    pivot = base[level]

    for n in range(1, n_terms):
        degree = level + b * n
        rhs = [Fraction(0)] * (degree + 1)
        _poly_axpy(rhs, Fraction(-1), polys[n - 1], shift=b)
        for k in range(1, n):
            _poly_axpy(rhs, energies[k], polys[n - k])

        p = [Fraction(0)] * (degree + 3)
        for j in range(degree, level, -1):
            p[j] = (rhs[j] + (j + 2) * (j + 1) * p[j + 2]) / (2 * (j - level))

        # solvability row at x^level: 0 = rhs_level + E_n H_level + (level+2)(level+1) p_{level+2}
        e_n = -(rhs[level] + (level + 2) * (level + 1) * p[level + 2]) / pivot
        _poly_axpy(rhs, e_n, base)
        p[level] = Fraction(0)
        for j in range(level - 1, -1, -1):
            p[j] = (rhs[j] + (j + 2) * (j + 1) * p[j + 2]) / (2 * (j - level))

        energies.append(e_n)
        polys.append(p[:degree + 1])

    denominators = sorted({c.denominator for c in energies})
    logger.debug("Exact harmonic series", operation="exact_harmonic_series", b=b, level=level,
                 n_terms=n_terms, denominators=[str(d) for d in denominators])
    return RationalSeries(
        level=level,
        b=b,
        coefficients=tuple(energies),
        polys=tuple(tuple(p) for p in polys),
    )


def rational_series_polynomials(series: RationalSeries, x: np.ndarray) -> List[np.ndarray]:
    """Samples of psi_n = P_n(x) exp(-x^2/2) for every stored order."""
    x = np.asarray(x, dtype=float)
    envelope = np.exp(-0.5 * x * x)
    return [np.polynomial.polynomial.polyval(x, [float(c) for c in poly]) * envelope
            for poly in series.polys]


def _solver_meta(config: ShootingConfig, x_max: float, method: str, n_terms: int) -> Dict[str, Any]:
    return {
        "solver": "numerov",
        "method": method,
        "x_max": x_max,
        "h": config.h,
        "tol_e": config.tol_e,
        "decay_tol": config.decay_tol,
        "n_terms": n_terms,
    }


def numeric_series(family: ProblemFamily, level: int, alpha: float, n_terms: int,
                   config: Optional[ShootingConfig] = None, method: str = "projection") -> SeriesData:
    """
    Taylor coefficients E^alpha_0..E^alpha_{n_terms-1} of E(lambda) at lambda = alpha.

    Args:
        family: Exponent pair
        level: Eigenvalue index
        alpha: Expansion point (>= 0)
        n_terms: Number of coefficients
        config: Shooting configuration
        method: "projection" for the integral route, "shoot" for the
            boundary-mismatch route (cross-check)

    Returns:
        SeriesData at Finite(alpha); meta carries the solver settings and any
        precision-budget warning
    """
    if alpha < 0:
        raise InvalidInputError("Expansion point must be nonnegative", field="alpha", value=alpha)
    config = config or ShootingConfig.from_settings()
    meta_warnings: List[str] = []
    budget = get_settings().max_terms
    if n_terms > budget:
        message = f"{n_terms} terms requested beyond the precision budget of {budget}"
        meta_warnings.append(message)
        logger.warning(message, operation="numeric_series", level=level, alpha=alpha)

    state = build_chain(family.direct_potential(alpha), family.b, level, n_terms, config, method)
    meta = _solver_meta(config, state.base.x_max, method, n_terms)
    if meta_warnings:
        meta["warnings"] = meta_warnings
    logger.info("Numeric series computed", operation="numeric_series", family=family.label,
                level=level, alpha=alpha, n_terms=n_terms)
    return SeriesData(family=family, level=level, point=finite_point(alpha),
                      coefficients=state.energies, meta=meta)


def fd_derivative_oracle(family: ProblemFamily, level: int, alpha: float, eps: float,
                         config: Optional[ShootingConfig] = None) -> float:
    """
    Centered difference (E(alpha+eps) - E(alpha-eps)) / (2 eps).

    Both solves share the grid of the alpha solve.
    """
    if not (eps > 0 and alpha - eps > 0):
        raise InvalidInputError("Need eps > 0 and alpha - eps > 0", field="eps", value=eps)
    config = config or ShootingConfig.from_settings()
    _, psi = solve_eigen(family.direct_potential(alpha), level, config)
    pinned = config.model_copy(update={"x_max": psi.x_max})
    upper, _ = solve_eigen(family.direct_potential(alpha + eps), level, pinned)
    lower, _ = solve_eigen(family.direct_potential(alpha - eps), level, pinned)
    return (upper - lower) / (2.0 * eps)


def truncated_sum(series: SeriesData, coupling: float, n_terms: Optional[int] = None) -> float:
    """sum_{k<K} E_k (lambda - alpha)^k for a finite-point series."""
    if series.is_asymptotic:
        raise InvalidInputError("Use eval_asymptotic for asymptotic series", field="point", value="asymptotic")
    count = len(series.coefficients) if n_terms is None else n_terms
    if not 1 <= count <= len(series.coefficients):
        raise InvalidInputError("Truncation beyond available terms", field="n_terms", value=n_terms)
    shift = coupling - series.alpha
    return float(np.polynomial.polynomial.polyval(shift, series.coefficients[:count]))
