"""
Multi-point quasi-rational approximants.

E_app(lambda) = sum_j (1 + mu lambda)^{e_j} P_j(lambda) / Q(lambda), with
degree-N numerators P_j, a common denominator Q = 1 + q_1 lambda + ... +
q_N lambda^N and the exponents e_j of the large-coupling pieces. The
m(N+1) + N unknowns are fixed by linear matching conditions at finite
points and in lambda' = 1/lambda.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np
import orjson
from pydantic import BaseModel, Field, field_validator
from scipy.optimize import brentq

from mqra.asymptotics import asymptotic_series
from mqra.core import ProblemFamily, asymptotic_structure, physical_energy, reduce_potential, validate_family
from mqra.odesolve import ShootingConfig, solve_eigen
from mqra.perturb import SeriesData, asymptotic_point, exact_harmonic_series, finite_point, numeric_series
from utils.batch_processor import ParallelMapper
from utils.config import get_settings
from utils.exceptions import (
    ConstraintCountError,
    DefectError,
    DuplicateConstraintError,
    InvalidInputError,
    SingularSystemError,
)
from utils.structured_logger import Stopwatch, get_logger
from utils.validation import (
    ApproximantDocument,
    ConstraintModel,
    DefectModel,
    FamilyModel,
    PhysicalModel,
    PieceModel,
    PointModel,
    RunManifest,
    parse_node_token,
)

logger = get_logger(__name__)

CONDITION_WARNING = 1e12
TIE_FRACTION = 0.05
DEFAULT_AUDIT_GRID = tuple(float(v) for v in np.geomspace(0.01, 100.0, 41))


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    """FiniteMatch(alpha, order) or AsymptoticMatch(index)."""
    kind: str
    alpha: Optional[float] = None
    order: Optional[int] = None
    index: Optional[int] = None

    @classmethod
    def finite(cls, alpha: float, order: int = 0) -> "Constraint":
        if alpha < 0 or order < 0:
            raise InvalidInputError("FiniteMatch needs alpha >= 0 and order >= 0", field="constraint",
                                    value=(alpha, order))
        return cls(kind="finite", alpha=float(alpha), order=int(order))

    @classmethod
    def asymptotic(cls, index: int) -> "Constraint":
        if index < 0:
            raise InvalidInputError("AsymptoticMatch index must be nonnegative", field="constraint", value=index)
        return cls(kind="asymptotic", index=int(index))

    @property
    def token(self) -> str:
        if self.kind == "asymptotic":
            return f"asym{self.index}"
        return f"d{self.order}@{self.alpha!r}"

    def to_model(self) -> ConstraintModel:
        return ConstraintModel(kind=self.kind, alpha=self.alpha, order=self.order, index=self.index)

    @classmethod
    def from_model(cls, model: ConstraintModel) -> "Constraint":
        if model.kind == "asymptotic":
            return cls.asymptotic(model.index)
        return cls.finite(model.alpha, model.order)


def standard_constraints(powers: int, asymptotic: int, nodes: Sequence[Tuple[float, int]] = (),
                         replacements: Optional[Dict[int, Tuple[float, int]]] = None) -> List[Constraint]:
    """
    Constraint list: power-series orders 0..powers-1, E~_0..E~_{asymptotic-1}, then nodes.

    replacements maps the 1-based position K of a lambda=0 term to the
    (alpha, order) condition that takes its place.
    """
    replacements = replacements or {}
    for position in replacements:
        if not 1 <= position <= powers:
            raise InvalidInputError(f"Cannot replace power term {position} of {powers}",
                                    field="replace", value=position)
    constraints: List[Constraint] = []
    for k in range(powers):
        if k + 1 in replacements:
            alpha, order = replacements[k + 1]
            constraints.append(Constraint.finite(alpha, order))
        else:
            constraints.append(Constraint.finite(0.0, k))
    constraints.extend(Constraint.asymptotic(i) for i in range(asymptotic))
    constraints.extend(Constraint.finite(alpha, order) for alpha, order in nodes)
    return constraints


def unknown_count(family: ProblemFamily, N: int) -> int:
    return asymptotic_structure(family).m * (N + 1) + N


def check_constraints(family: ProblemFamily, N: int, constraints: Sequence[Constraint]) -> None:
    """
    Raises:
        DuplicateConstraintError: When a condition appears twice
        ConstraintCountError: When the count differs from m(N+1)+N
    """
    seen = set()
    for constraint in constraints:
        if constraint in seen:
            raise DuplicateConstraintError(f"Constraint {constraint.token} imposed twice",
                                           constraint=constraint.token)
        seen.add(constraint)
    unknowns = unknown_count(family, N)
    if len(constraints) != unknowns:
        raise ConstraintCountError(constraints=len(constraints), unknowns=unknowns)


def required_series(constraints: Sequence[Constraint]) -> Dict[Tuple[str, Optional[float]], int]:
    """Terms needed per point: FiniteMatch(alpha,k) needs E^alpha_0..E^alpha_k."""
    needs: Dict[Tuple[str, Optional[float]], int] = {}
    for c in constraints:
        key = ("asymptotic", None) if c.kind == "asymptotic" else ("finite", c.alpha)
        count = (c.index if c.kind == "asymptotic" else c.order) + 1
        needs[key] = max(needs.get(key, 0), count)
    return needs


class Recipe(BaseModel):
    """Named constraint recipe for one family and degree, shared by the listed levels."""
    name: str
    a: int
    b: int
    levels: List[int] = Field(..., min_length=1)
    description: str = ""
    N: int = Field(..., ge=0)
    mu: float = Field(..., gt=0)
    powers: int = Field(..., ge=0)
    asymptotic: int = Field(..., ge=0)
    nodes: List[str] = Field(default_factory=list)
    replacements: Dict[int, str] = Field(default_factory=dict)

    @field_validator('nodes')
    def validate_nodes(cls, v):
        for token in v:
            parse_node_token(token)
        return v

    @property
    def family(self) -> ProblemFamily:
        return validate_family(self.a, self.b)

    def constraints(self) -> List[Constraint]:
        return standard_constraints(
            self.powers,
            self.asymptotic,
            [parse_node_token(t) for t in self.nodes],
            {k: parse_node_token(v) for k, v in self.replacements.items()},
        )


# ---------------------------------------------------------------------------
# Approximant
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Approximant:
    """Piece numerators, common denominator and the ledger that produced them."""
    family: ProblemFamily
    level: int
    N: int
    mu: float
    piece_coeffs: Tuple[np.ndarray, ...]
    q: np.ndarray
    constraints: Tuple[Constraint, ...] = ()
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidInputError("mu must be positive", field="mu", value=self.mu)
        m = asymptotic_structure(self.family).m
        pieces = tuple(np.asarray(p, dtype=float) for p in self.piece_coeffs)
        if len(pieces) != m or any(p.shape != (self.N + 1,) for p in pieces):
            raise InvalidInputError(f"Expected {m} pieces of {self.N + 1} coefficients",
                                    field="piece_coeffs")
        q = np.asarray(self.q, dtype=float)
        if q.shape != (self.N,):
            raise InvalidInputError(f"Expected {self.N} denominator coefficients", field="q")
        object.__setattr__(self, "piece_coeffs", pieces)
        object.__setattr__(self, "q", q)

    @property
    def exponents(self) -> Tuple[Fraction, ...]:
        return asymptotic_structure(self.family).exponents

    @property
    def denominator(self) -> np.ndarray:
        """Q coefficients in ascending powers, q_0 = 1."""
        return np.concatenate(([1.0], self.q))

    def to_document(self, manifest: Optional[RunManifest] = None) -> ApproximantDocument:
        defect = self.diagnostics.get("defect")
        return ApproximantDocument(
            family=FamilyModel(a=self.family.a, b=self.family.b),
            level=self.level,
            N=self.N,
            mu=self.mu,
            pieces=[PieceModel(exponent=str(e), coeffs=[float(c) for c in p])
                    for e, p in zip(self.exponents, self.piece_coeffs)],
            q=[float(c) for c in self.q],
            constraints=[c.to_model() for c in self.constraints],
            residual=self.diagnostics.get("residual"),
            backward_error=self.diagnostics.get("backward_error"),
            condition=self.diagnostics.get("condition"),
            precision=self.diagnostics.get("precision", "double"),
            defect=DefectModel(**defect) if defect else None,
            physical=PhysicalModel(**self.diagnostics["physical"]) if self.diagnostics.get("physical") else None,
            manifest=manifest,
        )

    def to_json(self, manifest: Optional[RunManifest] = None) -> bytes:
        return orjson.dumps(self.to_document(manifest).model_dump(exclude_none=True),
                            option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)

    @classmethod
    def from_document(cls, document: ApproximantDocument) -> "Approximant":
        family = validate_family(document.family.a, document.family.b)
        expected = asymptotic_structure(family).exponent_strings()
        found = tuple(p.exponent for p in document.pieces)
        if found != expected:
            raise InvalidInputError(f"Piece exponents {found} do not match {expected}",
                                    field="pieces", value=found)
        diagnostics: Dict[str, Any] = {
            "residual": document.residual,
            "backward_error": document.backward_error,
            "condition": document.condition,
            "precision": document.precision,
        }
        if document.defect is not None:
            diagnostics["defect"] = document.defect.model_dump()
        if document.physical is not None:
            diagnostics["physical"] = document.physical.model_dump()
        return cls(
            family=family,
            level=document.level,
            N=document.N,
            mu=document.mu,
            piece_coeffs=tuple(np.array(p.coeffs) for p in document.pieces),
            q=np.array(document.q),
            constraints=tuple(Constraint.from_model(c) for c in document.constraints),
            diagnostics=diagnostics,
        )

    @classmethod
    def from_json(cls, raw: bytes) -> "Approximant":
        return cls.from_document(ApproximantDocument.model_validate(orjson.loads(raw)))


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def generalized_binomial(exponent, k: int, one=1.0):
    """
    prod_{i<k} (exponent - i) / (i + 1).

    Finite for every real exponent, negative integers included.
    """
    total = one
    for i in range(k):
        total = total * (exponent - i) / (i + 1)
    return total


class _Arithmetic:
    """Scalar operations in double or mpmath precision."""

    def __init__(self, extended: bool):
        self.extended = extended

    def num(self, value):
        if self.extended:
            if isinstance(value, Fraction):
                return mpmath.mpf(value.numerator) / value.denominator
            return mpmath.mpf(value)
        return float(value)

    def gbinom(self, exponent, k: int):
        """Generalized binomial (exponent choose k)."""
        return generalized_binomial(self.num(exponent), k, one=self.num(1))

    def zeros(self, rows: int, cols: int) -> np.ndarray:
        if self.extended:
            out = np.empty((rows, cols), dtype=object)
            out[:] = mpmath.mpf(0)
            return out
        return np.zeros((rows, cols))


def _finite_row(arith: _Arithmetic, exponents, N: int, mu, alpha: float, order: int,
                taylor: Sequence[float]):
    """Order-`order` Taylor coefficient at alpha of sum_j (1+mu l)^{e_j} P_j - Q E."""
    m = len(exponents)
    row = [arith.num(0)] * (m * (N + 1) + N)
    a = arith.num(alpha)
    base = 1 + mu * a
    for j, e in enumerate(exponents):
        e_num = arith.num(e)
        aux = [arith.gbinom(e, t) * base ** (e_num - t) * mu ** t for t in range(order + 1)]
        for l in range(N + 1):
            total = arith.num(0)
            for t in range(order + 1):
                u = order - t
                if u <= l:
                    total += aux[t] * math.comb(l, u) * a ** (l - u)
            row[j * (N + 1) + l] = total
    for l in range(1, N + 1):
        total = arith.num(0)
        for t in range(min(l, order) + 1):
            total += math.comb(l, t) * a ** (l - t) * arith.num(taylor[order - t])
        row[m * (N + 1) + l - 1] = -total
    return row, arith.num(taylor[order])


def _asymptotic_row(arith: _Arithmetic, structure, N: int, mu, index: int, tilde: Sequence[float]):
    """Coefficient of lambda'^r in (lambda'+mu)^{e_j} P^_j - Q^ S_j, with (j, r) the index-th matching order."""
    m, s = structure.m, structure.s
    j, r = structure.matching_order(index)
    e = structure.exponents[j]
    e_num = arith.num(e)
    row = [arith.num(0)] * (m * (N + 1) + N)

    def piece_series(u: int):
        if u < 0 or u % s != 0:
            return arith.num(0)
        k = u // s
        return arith.num(tilde[m * k + j])

    for l in range(N + 1):
        u = r - N + l
        if u >= 0:
            row[j * (N + 1) + l] = arith.gbinom(e, u) * mu ** (e_num - u)
    for l in range(1, N + 1):
        row[m * (N + 1) + l - 1] = -piece_series(r - N + l)
    return row, piece_series(r - N)


def _assemble(family: ProblemFamily, level: int, N: int, mu: float, constraints: Sequence[Constraint],
              bank, arith: _Arithmetic) -> Tuple[np.ndarray, np.ndarray]:
    check_constraints(family, N, constraints)
    return _assemble_rows(family, level, N, mu, constraints, bank, arith)


def _assemble_rows(family: ProblemFamily, level: int, N: int, mu: float, constraints: Sequence[Constraint],
                   bank, arith: _Arithmetic) -> Tuple[np.ndarray, np.ndarray]:
    """One row per constraint, square or not."""
    structure = asymptotic_structure(family)
    size = unknown_count(family, N)
    matrix = arith.zeros(len(constraints), size)
    rhs = arith.zeros(len(constraints), 1)[:, 0].copy()
    mu_num = arith.num(mu)

    tilde: List[float] = []
    max_index = max((c.index for c in constraints if c.kind == "asymptotic"), default=-1)
    for i in range(max_index + 1):
        tilde.append(bank.asymptotic(level, i))

    for row_index, constraint in enumerate(constraints):
        if constraint.kind == "finite":
            taylor = [bank.finite(level, constraint.alpha, k) for k in range(constraint.order + 1)]
            row, value = _finite_row(arith, structure.exponents, N, mu_num, constraint.alpha,
                                     constraint.order, taylor)
        else:
            row, value = _asymptotic_row(arith, structure, N, mu_num, constraint.index, tilde)
        for col, entry in enumerate(row):
            matrix[row_index, col] = entry
        rhs[row_index] = value
    return matrix, rhs


def assemble_system(family: ProblemFamily, level: int, N: int, mu: float, constraints: Sequence[Constraint],
                    series_bank) -> Tuple[np.ndarray, np.ndarray]:
    """
    Linear system for the approximant coefficients.

    Unknowns are ordered p_{0,0..N}, ..., p_{m-1,0..N}, q_1..q_N.
    FiniteMatch(alpha, k) is the order-k Taylor coefficient at alpha of
    sum_j (1+mu lambda)^{e_j} P_j(lambda) - Q(lambda) E(lambda);
    AsymptoticMatch(i) equates lambda'^r coefficients of
    (lambda'+mu)^{e_j} lambda'^N P_j(1/lambda') and lambda'^N Q(1/lambda') S_j(lambda'),
    where (j, r) is the i-th term of the expansion by descending power of
    lambda; S_j is zero at orders r that are not multiples of s.

    Raises:
        InvalidInputError: For mu <= 0
        DuplicateConstraintError, ConstraintCountError: For a bad ledger
        MissingSeriesError: When the bank lacks referenced data
    """
    if not mu > 0:
        raise InvalidInputError("mu must be positive", field="mu", value=mu)
    return _assemble(family, level, N, mu, constraints, series_bank, _Arithmetic(extended=False))


# ---------------------------------------------------------------------------
# Dense solve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearSolution:
    """Solution vector with its quality measures."""
    x: np.ndarray = field(repr=False)
    residual: float
    backward_error: float
    condition: float
    precision: str


def _full_pivot_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with complete pivoting; works for float and mpf object arrays."""
    n = b.shape[0]
    columns = list(range(n))
    for k in range(n):
        magnitudes = np.abs(a[k:, k:]).astype(float)
        p, q = np.unravel_index(int(np.argmax(magnitudes)), magnitudes.shape)
        p, q = int(p) + k, int(q) + k
        if a[p, q] == 0:
            raise SingularSystemError(f"Zero pivot at step {k}", size=n, pivot_index=k)
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        if q != k:
            a[:, [k, q]] = a[:, [q, k]]
            columns[k], columns[q] = columns[q], columns[k]
        for i in range(k + 1, n):
            if a[i, k] != 0:
                factor = a[i, k] / a[k, k]
                a[i, k + 1:] = a[i, k + 1:] - factor * a[k, k + 1:]
                a[i, k] = 0 * a[i, k]
                b[i] = b[i] - factor * b[k]

    y = b.copy()
    for k in range(n - 1, -1, -1):
        acc = b[k]
        for j in range(k + 1, n):
            acc = acc - a[k, j] * y[j]
        y[k] = acc / a[k, k]
    x = y.copy()
    for k in range(n):
        x[columns[k]] = y[k]
    return x


def _equilibrate(matrix: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    scales = np.abs(matrix).astype(float).max(axis=1)
    if np.any(scales == 0):
        row = int(np.argmin(scales))
        raise SingularSystemError(f"Row {row} is identically zero", size=rhs.shape[0], pivot_index=row)
    if matrix.dtype == object:
        scales = np.array([mpmath.mpf(1) / mpmath.mpf(s) for s in scales], dtype=object)
        return matrix * scales[:, None], rhs * scales
    return matrix / scales[:, None], rhs / scales


def solve_coefficients(matrix: np.ndarray, rhs: np.ndarray, precision: Optional[str] = None,
                       dps: Optional[int] = None) -> LinearSolution:
    """
    Solve A x = b by full pivoting after row equilibration.

    Args:
        matrix: Square system (float, or mpf objects from extended assembly)
        rhs: Right-hand side
        precision: "double" or "extended" (defaults to MQRA_PRECISION)
        dps: Decimal digits for the extended back end

    Returns:
        LinearSolution with residual ||Ax-b||/||b||, backward error
        ||Ax-b|| / (||A|| ||x|| + ||b||) and the condition number of the
        equilibrated matrix (infinity norms)

    Raises:
        InvalidInputError: For non-square or mismatched shapes
        SingularSystemError: For an exactly zero pivot
    """
    settings = get_settings()
    precision = precision or settings.precision
    dps = dps or settings.extended_dps
    matrix = np.asarray(matrix)
    rhs = np.asarray(rhs)
    n = rhs.shape[0]
    if matrix.shape != (n, n):
        raise InvalidInputError(f"System shape {matrix.shape} does not match rhs length {n}",
                                field="matrix", value=matrix.shape)

    with Stopwatch(logger, "solve_coefficients", size=n, precision=precision):
        if precision == "extended":
            with mpmath.workdps(dps):
                a = np.array([[mpmath.mpf(v) for v in row] for row in matrix], dtype=object)
                b = np.array([mpmath.mpf(v) for v in rhs], dtype=object)
                a_eq, b_eq = _equilibrate(a, b)
                x_mp = _full_pivot_solve(a_eq.copy(), b_eq.copy())
                r_mp = a.dot(x_mp) - b
                r_norm = float(max(abs(v) for v in r_mp))
                a_norm = float(max(sum(abs(v) for v in row) for row in a))
                x = np.array([float(v) for v in x_mp])
                a_eq_float = a_eq.astype(float)
        else:
            a = matrix.astype(float)
            b = rhs.astype(float)
            a_eq, b_eq = _equilibrate(a, b)
            x = _full_pivot_solve(a_eq.copy(), b_eq.copy())
            r_norm = float(np.max(np.abs(a @ x - b)))
            a_norm = float(np.max(np.sum(np.abs(a), axis=1)))
            a_eq_float = a_eq

    b_norm = float(np.max(np.abs(rhs.astype(float))))
    x_norm = float(np.max(np.abs(x)))
    residual = r_norm / b_norm if b_norm > 0 else r_norm
    backward_error = r_norm / (a_norm * x_norm + b_norm) if (a_norm * x_norm + b_norm) > 0 else 0.0
    with np.errstate(all="ignore"):
        condition = float(np.linalg.cond(a_eq_float, p=np.inf))

    logger.numeric_metric("system_condition", condition, size=n, precision=precision)
    if not condition < CONDITION_WARNING:
        logger.warning(
            f"Ill-conditioned approximant system (cond={condition:.3e}); solved anyway",
            operation="solve_coefficients", size=n, precision=precision
        )
    return LinearSolution(x=x, residual=residual, backward_error=backward_error,
                          condition=condition, precision=precision)


# ---------------------------------------------------------------------------
# Defect check
# ---------------------------------------------------------------------------

def _trim(poly: List[Fraction]) -> List[Fraction]:
    while len(poly) > 1 and poly[-1] == 0:
        poly = poly[:-1]
    return poly


def _poly_rem(num: List[Fraction], den: List[Fraction]) -> List[Fraction]:
    num = list(num)
    while len(num) >= len(den) and any(num):
        factor = num[-1] / den[-1]
        shift = len(num) - len(den)
        for i, c in enumerate(den):
            num[shift + i] -= factor * c
        num = _trim(num[:-1]) if len(num) > 1 else [Fraction(0)]
    return _trim(num)


def _sturm_sequence(poly: List[Fraction]) -> List[List[Fraction]]:
    sequence = [poly, _trim([k * c for k, c in enumerate(poly)][1:])]
    while len(sequence[-1]) > 1:
        rem = _poly_rem(sequence[-2], sequence[-1])
        if len(rem) == 1 and rem[0] == 0:
            break
        sequence.append([-c for c in rem])
    return sequence


def _eval_fraction(poly: List[Fraction], x: Fraction) -> Fraction:
    total = Fraction(0)
    for c in reversed(poly):
        total = total * x + c
    return total


def _sign_changes(sequence: List[List[Fraction]], x: Fraction) -> int:
    signs = [v for v in (_eval_fraction(p, x) for p in sequence) if v != 0]
    return sum(1 for u, v in zip(signs, signs[1:]) if (u > 0) != (v > 0))


def positive_roots(coefficients: Sequence[float], tol: float = 1e-12) -> List[float]:
    """
    Distinct real roots on (0, inf) of sum_k c_k lambda^k.

    Roots are counted with a Sturm sequence in exact rational arithmetic,
    isolated by bisection inside the Cauchy bound and polished with brentq.
    """
    poly = _trim([Fraction(float(c)) for c in coefficients])
    if len(poly) <= 1:
        return []
    if all(c >= 0 for c in poly):
        return []
    lead = abs(poly[-1])
    bound = 1 + max(abs(c) for c in poly[:-1]) / lead
    sequence = _sturm_sequence(poly)

    def count(lo: Fraction, hi: Fraction) -> int:
        return _sign_changes(sequence, lo) - _sign_changes(sequence, hi)

    roots: List[float] = []
    pending = [(Fraction(0), bound)]
    while pending:
        lo, hi = pending.pop()
        n_roots = count(lo, hi)
        if n_roots == 0:
            continue
        if n_roots == 1 or hi - lo < Fraction(1, 10 ** 15):
            f_lo, f_hi = float(_eval_fraction(poly, lo)), float(_eval_fraction(poly, hi))
            func = lambda t: float(np.polynomial.polynomial.polyval(t, [float(c) for c in poly]))
            if f_lo == 0.0:
                roots.append(float(lo))
            elif f_hi == 0.0:
                roots.append(float(hi))
            elif (f_lo > 0) != (f_hi > 0):
                roots.append(brentq(func, float(lo), float(hi), xtol=tol, rtol=4 * np.finfo(float).eps))
            elif n_roots == 1 and hi - lo >= Fraction(1, 10 ** 15):
                mid = (lo + hi) / 2
                pending.extend([(lo, mid), (mid, hi)])
            else:
                roots.append(float((lo + hi) / 2))
            continue
        mid = (lo + hi) / 2
        pending.extend([(lo, mid), (mid, hi)])
    return sorted(roots)


def check_defect_free(target: Union[Approximant, Sequence[float]]) -> Tuple[bool, List[float]]:
    """
    (ok, positive_roots) for the denominator of an approximant or an explicit
    coefficient list [1, q_1, ..., q_N].
    """
    coefficients = target.denominator if isinstance(target, Approximant) else list(target)
    if all(float(c) > 0 for c in coefficients[1:]):
        return True, []
    roots = positive_roots(coefficients)
    return not roots, roots


# ---------------------------------------------------------------------------
# Evaluation and series readback
# ---------------------------------------------------------------------------

def _horner(coeffs: np.ndarray, x):
    total = np.zeros_like(x, dtype=float) + coeffs[-1]
    for c in coeffs[-2::-1]:
        total = total * x + c
    return total


def evaluate(approx: Approximant, coupling):
    """
    E_app(lambda) = sum_j (1 + mu lambda)^{e_j} P_j(lambda) / Q(lambda).

    Accepts a scalar or an array of nonnegative couplings.

    Raises:
        InvalidInputError: For negative couplings
        DefectError: When Q vanishes at a requested coupling
    """
    lam = np.asarray(coupling, dtype=float)
    if np.any(lam < 0):
        raise InvalidInputError("Approximants are defined for lambda >= 0", field="lambda", value=coupling)
    q_value = _horner(approx.denominator, lam)
    if np.any(q_value == 0):
        raise DefectError("Denominator vanishes at the requested coupling",
                          positive_roots=list(np.atleast_1d(lam[q_value == 0])), mu=approx.mu)
    total = np.zeros_like(lam)
    for e, coeffs in zip(approx.exponents, approx.piece_coeffs):
        total = total + (1.0 + approx.mu * lam) ** float(e) * _horner(coeffs, lam)
    result = total / q_value
    return float(result) if np.ndim(result) == 0 else result


def physical_estimate(approx: Approximant, A: float, B: float, config: Optional[ShootingConfig] = None,
                      direct: bool = True) -> PhysicalModel:
    """
    Eigenvalue of -d^2/dx^2 + A x^a + B x^b from the approximant.

    The potential is reduced to x^a + lambda x^b, the approximant is
    evaluated at that lambda and rescaled. With direct=True the physical
    problem is also solved by shooting for comparison.

    Raises:
        InvalidInputError: For nonpositive A or negative B
    """
    a, b = approx.family.a, approx.family.b
    coupling, _, e_scale = reduce_potential(A, B, a, b)
    e_app = e_scale * evaluate(approx, coupling)
    e_direct = physical_energy(A, B, a, b, approx.level, config) if direct else None
    rel_err = abs(e_app - e_direct) / abs(e_direct) if e_direct else None
    logger.info("Physical eigenvalue estimated", operation="physical_estimate", A=A, B=B,
                coupling=coupling, e_app=e_app, e_direct=e_direct)
    return PhysicalModel(A=A, B=B, coupling=coupling, e_scale=e_scale, e_app=e_app,
                         e_direct=e_direct, rel_err=rel_err)


def _series_divide(num: np.ndarray, den: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros(order + 1)
    for k in range(order + 1):
        acc = num[k] if k < len(num) else 0.0
        for i in range(1, min(k, len(den) - 1) + 1):
            acc -= den[i] * out[k - i]
        out[k] = acc / den[0]
    return out


def _shifted_poly(coeffs: np.ndarray, alpha: float, order: int) -> np.ndarray:
    """Coefficients in t of sum_l c_l (alpha + t)^l, up to t^order."""
    out = np.zeros(order + 1)
    for l, c in enumerate(coeffs):
        for u in range(min(l, order) + 1):
            out[u] += c * math.comb(l, u) * alpha ** (l - u)
    return out


def taylor_coefficients(approx: Approximant, alpha: float, order: int) -> np.ndarray:
    """Taylor coefficients E_app^(k)(alpha)/k! for k = 0..order."""
    if alpha < 0:
        raise InvalidInputError("alpha must be nonnegative", field="alpha", value=alpha)
    base = 1.0 + approx.mu * alpha
    numerator = np.zeros(order + 1)
    for e, coeffs in zip(approx.exponents, approx.piece_coeffs):
        e = float(e)
        aux = np.array([generalized_binomial(e, t) * base ** (e - t) * approx.mu ** t for t in range(order + 1)])
        numerator += np.convolve(aux, _shifted_poly(coeffs, alpha, order))[:order + 1]
    denominator = _shifted_poly(approx.denominator, alpha, order)
    return _series_divide(numerator, denominator, order)


def asymptotic_coefficients(approx: Approximant, count: int) -> np.ndarray:
    """
    E~_0..E~_{count-1} implied by the approximant's large-coupling expansion.

    Piece j contributes (lambda'+mu)^{e_j} lambda'^N P_j(1/lambda') /
    (lambda'^N Q(1/lambda')); E~_{mk+j} is its lambda'^{sk} coefficient.
    """
    structure = asymptotic_structure(approx.family)
    m, s = structure.m, structure.s
    top = s * ((count - 1) // m) if count > 0 else 0
    q_hat = approx.denominator[::-1]
    if q_hat[0] == 0:
        raise InvalidInputError("q_N = 0: no finite large-coupling limit", field="q", value=0.0)
    out = np.zeros(count)
    for j, (e, coeffs) in enumerate(zip(structure.exponents, approx.piece_coeffs)):
        e = float(e)
        aux = np.array([generalized_binomial(e, u) * approx.mu ** (e - u) for u in range(top + 1)])
        product = np.convolve(aux, coeffs[::-1])[:top + 1]
        series = _series_divide(product, q_hat, top)
        for i in range(j, count, m):
            out[i] = series[s * (i // m)]
    return out


# ---------------------------------------------------------------------------
# Building, sweeping and scanning
# ---------------------------------------------------------------------------

def series_source(family: ProblemFamily, config: Optional[ShootingConfig] = None
                  ) -> Callable[[int, PointModel, int], SeriesData]:
    """Compute callback for SeriesBank: exact at lambda=0 for a=2, chains elsewhere."""

    def compute(level: int, point: PointModel, n_terms: int) -> SeriesData:
        if point.type == "asymptotic":
            return asymptotic_series(family, level, n_terms, config).to_series_data()
        if point.alpha == 0.0 and family.a == 2:
            return exact_harmonic_series(family.b, level, n_terms).to_series_data()
        return numeric_series(family, level, point.alpha, n_terms, config)

    return compute


def prepare_bank(bank, level: int, constraints: Sequence[Constraint],
                 mapper: Optional[ParallelMapper] = None) -> None:
    """Fill every series the constraints reference, in parallel."""
    needs = required_series(constraints)
    items = sorted(needs.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0.0))

    def ensure(item):
        (kind, alpha), n_terms = item
        point = asymptotic_point() if kind == "asymptotic" else finite_point(alpha)
        return bank.ensure(level, point, n_terms)

    (mapper or ParallelMapper(operation="prepare_bank")).map(ensure, items)


def build_approximant(family: ProblemFamily, level: int, N: int, mu: float,
                      constraints: Sequence[Constraint], series_bank,
                      precision: Optional[str] = None) -> Approximant:
    """
    Assemble, solve and defect-check one approximant.

    The defect verdict is recorded in diagnostics["defect"]; callers decide
    whether a defective result is acceptable.
    """
    settings = get_settings()
    precision = precision or settings.precision
    if not mu > 0:
        raise InvalidInputError("mu must be positive", field="mu", value=mu)
    constraints = tuple(constraints)

    if precision == "extended":
        with mpmath.workdps(settings.extended_dps):
            matrix, rhs = _assemble(family, level, N, mu, constraints, series_bank, _Arithmetic(extended=True))
            solution = solve_coefficients(matrix, rhs, precision="extended")
    else:
        matrix, rhs = assemble_system(family, level, N, mu, constraints, series_bank)
        solution = solve_coefficients(matrix, rhs, precision="double")

    m = asymptotic_structure(family).m
    x = solution.x
    pieces = tuple(x[j * (N + 1):(j + 1) * (N + 1)] for j in range(m))
    approx = Approximant(family=family, level=level, N=N, mu=mu, piece_coeffs=pieces,
                         q=x[m * (N + 1):], constraints=constraints)
    ok, roots = check_defect_free(approx)
    approx.diagnostics.update({
        "residual": solution.residual,
        "backward_error": solution.backward_error,
        "condition": solution.condition,
        "precision": solution.precision,
        "defect": {"ok": ok, "positive_roots": roots},
    })
    if not ok:
        logger.warning("Approximant denominator has positive roots", operation="build_approximant",
                       level=level, N=N, mu=mu, positive_roots=roots)
    logger.info("Approximant built", operation="build_approximant", family=family.label, level=level,
                N=N, mu=mu, residual=solution.residual, condition=solution.condition)
    return approx


def constraint_residuals(approx: Approximant, series_bank,
                         constraints: Optional[Sequence[Constraint]] = None) -> List[Tuple[str, float]]:
    """
    How well given coefficients satisfy each constraint row.

    Row i gives |A_i x - b_i| / (sum_k |A_ik x_k| + |b_i|), so rounding in
    printed coefficients or data stays small while a violated condition
    stays of order one. Defaults to the approximant's own ledger; any
    subset or superset of conditions may be checked.
    """
    constraints = tuple(constraints if constraints is not None else approx.constraints)
    matrix, rhs = _assemble_rows(approx.family, approx.level, approx.N, approx.mu, constraints, series_bank,
                                 _Arithmetic(extended=False))
    x = np.concatenate([np.asarray(p, dtype=float) for p in approx.piece_coeffs]
                       + [np.asarray(approx.q, dtype=float)])
    terms = matrix * x
    scale = np.sum(np.abs(terms), axis=1) + np.abs(rhs)
    raw = np.abs(terms.sum(axis=1) - rhs)
    residuals = np.divide(raw, scale, out=np.zeros_like(raw), where=scale > 0)
    worst = int(np.argmax(residuals)) if len(residuals) else 0
    logger.numeric_metric("constraint_residual", float(residuals[worst]) if len(residuals) else 0.0,
                          level=approx.level, worst=constraints[worst].token if constraints else None)
    return [(c.token, float(r)) for c, r in zip(constraints, residuals)]


@dataclass(frozen=True)
class SweepPoint:
    coupling: float
    e_app: float
    e_shoot: float
    rel_err: float


def shooting_reference(family: ProblemFamily, level: int, lambda_grid: Sequence[float],
                       config: Optional[ShootingConfig] = None,
                       mapper: Optional[ParallelMapper] = None) -> List[float]:
    """solve_eigen energies on a coupling grid."""
    mapper = mapper or ParallelMapper(operation="shooting_reference")
    return mapper.map(lambda lam: solve_eigen(family.direct_potential(lam), level, config)[0],
                      list(lambda_grid))


def error_sweep(approx: Approximant, level: int, lambda_grid: Sequence[float],
                config: Optional[ShootingConfig] = None, reference: Optional[Sequence[float]] = None,
                mapper: Optional[ParallelMapper] = None) -> List[SweepPoint]:
    """
    |E_app - E_shoot| / E_shoot on a grid of couplings.

    Args:
        approx: Approximant to audit
        level: Eigenvalue index (must match the approximant)
        lambda_grid: Couplings >= 0
        config: Shooting configuration for the reference solves
        reference: Precomputed shooting energies aligned with lambda_grid

    Raises:
        DefectError: When the approximant's denominator has positive roots
    """
    if level != approx.level:
        raise InvalidInputError(f"Approximant is for level {approx.level}", field="level", value=level)
    ok, roots = check_defect_free(approx)
    if not ok:
        raise DefectError("Refusing to sweep a defective approximant", positive_roots=roots, mu=approx.mu)
    grid = [float(v) for v in lambda_grid]
    if any(v < 0 for v in grid):
        raise InvalidInputError("Couplings must be nonnegative", field="lambda_grid")
    if reference is None:
        reference = shooting_reference(approx.family, level, grid, config, mapper)
    elif len(reference) != len(grid):
        raise InvalidInputError("Reference energies must align with the grid", field="reference")

    points = []
    for lam, e_shoot in zip(grid, reference):
        e_app = evaluate(approx, lam)
        points.append(SweepPoint(coupling=lam, e_app=e_app, e_shoot=float(e_shoot),
                                 rel_err=abs(e_app - e_shoot) / abs(e_shoot)))
    worst = max(points, key=lambda p: p.rel_err)
    logger.numeric_metric("max_rel_err", worst.rel_err, level=level, at_lambda=worst.coupling)
    return points


@dataclass
class MuCandidate:
    mu: float
    defect_free: bool
    positive_roots: List[float]
    max_rel_err: Optional[float] = None
    argmax: Optional[float] = None
    error: Optional[str] = None


@dataclass
class MuScanReport:
    best_mu: float
    candidates: List[MuCandidate]
    audit_grid: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "best_mu": self.best_mu,
            "audit_grid": self.audit_grid,
            "candidates": [c.__dict__ for c in self.candidates],
        }


def scan_mu(family: ProblemFamily, level: int, N: int, constraints: Sequence[Constraint], series_bank,
            mu_grid: Sequence[float], audit_grid: Optional[Sequence[float]] = None,
            config: Optional[ShootingConfig] = None, precision: Optional[str] = None
            ) -> Tuple[float, MuScanReport]:
    """
    Pick mu by the maximum relative error over a fixed audit grid.

    Defective candidates are discarded; among survivors the smallest mu
    within 5% of the best maximum error wins.

    Raises:
        InvalidInputError: For an empty grid or mu <= 0
        DefectError: When every candidate is defective
    """
    mus = [float(v) for v in mu_grid]
    if not mus:
        raise InvalidInputError("mu grid is empty", field="mu_grid")
    bad = [v for v in mus if not v > 0]
    if bad:
        raise InvalidInputError("mu must be positive", field="mu_grid", value=bad)
    audit = [float(v) for v in (audit_grid or DEFAULT_AUDIT_GRID)]
    reference = shooting_reference(family, level, audit, config)

    def try_mu(mu: float) -> MuCandidate:
        approx = build_approximant(family, level, N, mu, constraints, series_bank, precision)
        defect = approx.diagnostics["defect"]
        candidate = MuCandidate(mu=mu, defect_free=defect["ok"], positive_roots=defect["positive_roots"])
        if candidate.defect_free:
            points = error_sweep(approx, level, audit, config, reference=reference)
            worst = max(points, key=lambda p: p.rel_err)
            candidate.max_rel_err, candidate.argmax = worst.rel_err, worst.coupling
        return candidate

    candidates = ParallelMapper(operation="scan_mu").map(try_mu, sorted(mus))
    survivors = [c for c in candidates if c.defect_free]
    if not survivors:
        roots = [r for c in candidates for r in c.positive_roots]
        raise DefectError(f"All {len(candidates)} mu candidates are defective", positive_roots=roots)

    best_error = min(c.max_rel_err for c in survivors)
    best = min((c for c in survivors if c.max_rel_err <= best_error * (1 + TIE_FRACTION)),
               key=lambda c: c.mu)
    logger.info("mu scan complete", operation="scan_mu", level=level, N=N, best_mu=best.mu,
                best_max_rel_err=best.max_rel_err, survivors=len(survivors))
    return best.mu, MuScanReport(best_mu=best.mu, candidates=candidates, audit_grid=audit)
