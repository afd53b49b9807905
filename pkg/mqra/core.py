"""
Problem normalization for V(x) = A x^a + B x^b.

Scales the two-coefficient potential to the one-parameter form
x^a + lambda x^b, maps couplings to the large-lambda frame and derives the
piece structure of the large-lambda expansion in exact rational arithmetic.
"""

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from math import gcd
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.optimize import brentq

from utils.exceptions import InvalidInputError
from utils.structured_logger import get_logger

logger = get_logger(__name__)


class Parity(str, Enum):
    """Parity sector of a bound state on the half line."""
    EVEN = "even"
    ODD = "odd"

    @classmethod
    def of_level(cls, level: int) -> "Parity":
        return cls.EVEN if level % 2 == 0 else cls.ODD

    @property
    def initial_conditions(self) -> Tuple[float, float]:
        """(value, slope) at x=0 for this sector."""
        return (1.0, 0.0) if self is Parity.EVEN else (0.0, 1.0)


@dataclass(frozen=True)
class Potential:
    """Sum of even monomials c_i x^{e_i} with nonnegative coefficients."""
    terms: Tuple[Tuple[float, int], ...]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        for coeff, exponent in self.terms:
            if coeff != 0.0:
                total = total + coeff * x ** exponent
        return total

    @property
    def label(self) -> str:
        return " + ".join(f"{c:g}*x^{e}" for c, e in self.terms if c != 0.0)

    def curvature_at_origin(self) -> float:
        """W''(0); only a quadratic term contributes."""
        return sum(2.0 * c for c, e in self.terms if e == 2)

    def turning_point(self, energy: float) -> float:
        """Outer classical turning point x_t > 0 with W(x_t) = energy."""
        if energy <= 0.0:
            return 0.0
        upper = 1.0
        while float(self(np.array(upper))) < energy:
            upper *= 2.0
        return brentq(lambda x: float(self(np.array(x))) - energy, 0.0, upper, xtol=1e-12)


class ProblemFamily(BaseModel):
    """Exponent pair (a, b) of V(x) = x^a + lambda x^b."""
    model_config = ConfigDict(frozen=True)

    a: int = Field(..., description="Exponent of the base term")
    b: int = Field(..., description="Exponent of the perturbation")

    @field_validator('a', 'b')
    def validate_even_positive(cls, v, info):
        """Only even, positive exponents keep the parity-based boundary treatment valid."""
        if v < 2 or v % 2 != 0:
            raise InvalidInputError(
                "Exponents must be positive even integers",
                field=info.field_name,
                value=v
            )
        return v

    @model_validator(mode='after')
    def validate_order(self):
        if self.b <= self.a:
            raise InvalidInputError(
                f"Perturbation exponent must exceed the base exponent (a={self.a}, b={self.b})",
                field="b",
                value=self.b
            )
        return self

    @property
    def g(self) -> int:
        return gcd(self.a + 2, self.b + 2)

    @property
    def label(self) -> str:
        return f"x^{self.a}+lambda*x^{self.b}"

    def direct_potential(self, alpha: float = 0.0) -> Potential:
        """W(x) = x^a + alpha x^b, the operator of the chain about lambda = alpha."""
        return Potential(((1.0, self.a), (float(alpha), self.b)))

    def scaled_potential(self) -> Potential:
        """W(y) = y^b, the operator of the large-lambda chain."""
        return Potential(((1.0, self.b),))


class ReducedProblem(BaseModel):
    """One-parameter problem at coupling lambda for eigenvalue index level."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    family: ProblemFamily
    coupling: float = Field(..., ge=0, alias="lambda")
    level: int = Field(..., ge=0)

    @property
    def parity(self) -> Parity:
        return Parity.of_level(self.level)

    def potential(self) -> Potential:
        return self.family.direct_potential(self.coupling)


class AsymptoticStructure(BaseModel):
    """Piece grouping of the large-lambda expansion."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    m: int
    s: int
    exponents: Tuple[Fraction, ...]

    def piece_of(self, index: int) -> Tuple[int, int]:
        """(piece j, lambda' order r) of the global coefficient index."""
        return index % self.m, self.s * (index // self.m)

    def matching_order(self, index: int) -> Tuple[int, int]:
        """
        (piece j, lambda' order r) of the index-th term of an approximant's
        large-lambda expansion, sorted by descending power e_j - r.

        Orders r that are not multiples of s carry no E~ coefficient.
        """
        candidates = sorted(((self.exponents[j] - r, j, r) for j in range(self.m) for r in range(index + 1)),
                            reverse=True)
        _, j, r = candidates[index]
        return j, r

    def exponent_strings(self) -> Tuple[str, ...]:
        return tuple(str(e) for e in self.exponents)


def validate_family(a: int, b: int) -> ProblemFamily:
    """Build a ProblemFamily, turning pydantic type errors into InvalidInputError."""
    try:
        return ProblemFamily(a=a, b=b)
    except InvalidInputError:
        raise
    except Exception as e:
        raise InvalidInputError(f"Invalid exponent pair: {e}", field="family", value=(a, b))


def reduce_potential(A: float, B: float, a: int, b: int) -> Tuple[float, float, float]:
    """
    Scale A x^a + B x^b to x^a + lambda x^b.

    Args:
        A: Coefficient of the base term (must be positive)
        B: Coefficient of the perturbation (nonnegative)
        a: Base exponent
        b: Perturbation exponent

    Returns:
        (lambda, x_scale, e_scale) with E_physical = e_scale * E_reduced and
        x = x_scale * x'

    Raises:
        InvalidInputError: For nonpositive A, negative B or invalid exponents
    """
    validate_family(a, b)
    if not A > 0:
        raise InvalidInputError("Base coefficient A must be positive", field="A", value=A)
    if B < 0:
        raise InvalidInputError("Perturbation coefficient B must be nonnegative", field="B", value=B)

    coupling = A ** (-(b + 2) / (a + 2)) * B
    x_scale = A ** (-1.0 / (a + 2))
    e_scale = A ** (2.0 / (a + 2))
    return coupling, x_scale, e_scale


def asymptotic_structure(family: ProblemFamily) -> AsymptoticStructure:
    """
    Piece count, lambda' step and leading exponents of the large-lambda expansion.

    Piece j collects the coefficients E~_{mk+j} as multipliers of
    lambda^{e_j} lambda^{-s k}.
    """
    a, b = family.a, family.b
    g = family.g
    m = (b + 2) // g
    s = (a + 2) // g
    exponents = tuple(Fraction(2 - j * (a + 2), b + 2) for j in range(m))
    return AsymptoticStructure(m=m, s=s, exponents=exponents)


def scale_to_asymptotic(coupling: float, family: ProblemFamily) -> Tuple[float, float, float]:
    """
    Map a coupling to the large-lambda frame.

    Returns:
        (lambda_tilde, y_scale, e_tilde_scale) where lambda_tilde =
        lambda^{-(2+a)/(2+b)}, E = e_tilde_scale * E~ and x = y_scale * y

    Raises:
        InvalidInputError: For lambda <= 0, where the frame is undefined
    """
    if not coupling > 0:
        raise InvalidInputError("The large-lambda frame needs a positive coupling", field="lambda", value=coupling)
    a, b = family.a, family.b
    lambda_tilde = coupling ** (-(2.0 + a) / (2.0 + b))
    y_scale = coupling ** (-1.0 / (2.0 + b))
    e_tilde_scale = coupling ** (2.0 / (2.0 + b))
    return lambda_tilde, y_scale, e_tilde_scale


def physical_energy(A: float, B: float, a: int, b: int, level: int, config=None) -> float:
    """
    Eigenvalue of -d^2/dx^2 + A x^a + B x^b, computed in the reduced frame.
    """
    from mqra.odesolve import solve_eigen

    coupling, _, e_scale = reduce_potential(A, B, a, b)
    family = validate_family(a, b)
    energy, _ = solve_eigen(family.direct_potential(coupling), level, config)
    logger.debug("Physical eigenvalue from reduced frame", operation="physical_energy",
                 coupling=coupling, e_scale=e_scale, level=level)
    return e_scale * energy
