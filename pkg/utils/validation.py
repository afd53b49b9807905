"""
Document models and token parsers for the approximation toolkit.
Uses Pydantic for validation of everything read from or written to disk
and of the command-line token syntax.
"""

import re
from fractions import Fraction
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.exceptions import InvalidInputError, ValidationError

RATIONAL_PATTERN = re.compile(r'^-?\d+(/\d+)?$')
NODE_PATTERN = re.compile(r'^(?:d(?P<order>\d+)@)?(?P<alpha>[0-9]*\.?[0-9]+(?:[eE][-+]?\d+)?)$')
DETERMINISM_NOTE = "deterministic: no random number generation; fixed iteration order"


class FamilyModel(BaseModel):
    """Exponent pair as stored in documents."""
    model_config = ConfigDict(frozen=True)

    a: int = Field(..., description="Base exponent")
    b: int = Field(..., description="Perturbation exponent")

    @field_validator('a', 'b')
    def validate_exponent(cls, v, info):
        """Exponents must be even and at least 2."""
        if v < 2 or v % 2 != 0:
            raise InvalidInputError(
                "Exponents must be positive even integers",
                field=info.field_name,
                value=v
            )
        return v


class PointModel(BaseModel):
    """Expansion point: a finite coupling alpha or the large-coupling limit."""
    model_config = ConfigDict(frozen=True)

    type: Literal["finite", "asymptotic"]
    alpha: Optional[float] = Field(None, ge=0, description="Expansion point for finite series")

    @model_validator(mode='after')
    def validate_alpha_presence(self):
        if self.type == "finite" and self.alpha is None:
            raise InvalidInputError("Finite points need alpha", field="alpha")
        if self.type == "asymptotic" and self.alpha is not None:
            raise InvalidInputError("Asymptotic points take no alpha", field="alpha", value=self.alpha)
        return self


class RunManifest(BaseModel):
    """Provenance block embedded in every output file."""
    command: str = Field(..., min_length=1)
    family: Optional[FamilyModel] = None
    levels: List[int] = Field(default_factory=list)
    constraints: List[str] = Field(default_factory=list)
    solver: Dict[str, Any] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)
    determinism: str = DETERMINISM_NOTE


class SeriesDocument(BaseModel):
    """Floating-point expansion coefficients about one point."""
    family: FamilyModel
    level: int = Field(..., ge=0)
    point: PointModel
    coefficients: List[float] = Field(..., min_length=1)
    meta: Dict[str, Any] = Field(default_factory=dict)
    manifest: Optional[RunManifest] = None

    @field_validator('coefficients')
    def validate_finite(cls, v):
        """Coefficients must be finite numbers."""
        if not all(np.isfinite(v)):
            raise ValidationError(
                "Series coefficients must be finite",
                field="coefficients",
                expected_type="list of finite floats",
                actual_value=v
            )
        return v


class RationalSeriesDocument(BaseModel):
    """Exact coefficients as "num/den" strings."""
    family: FamilyModel
    level: int = Field(..., ge=0)
    point: PointModel
    coefficients: List[str] = Field(..., min_length=1)
    polys: List[List[str]] = Field(default_factory=list)
    manifest: Optional[RunManifest] = None

    @field_validator('coefficients')
    def validate_rationals(cls, v):
        for item in v:
            if not RATIONAL_PATTERN.match(item):
                raise InvalidInputError("Rational coefficients must look like num/den", field="coefficients", value=item)
        return v

    @field_validator('polys')
    def validate_poly_rationals(cls, v):
        for poly in v:
            for item in poly:
                if not RATIONAL_PATTERN.match(item):
                    raise InvalidInputError("Polynomial coefficients must look like num/den", field="polys", value=item)
        return v


class ConstraintModel(BaseModel):
    """One matching condition of an approximant."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["finite", "asymptotic"]
    alpha: Optional[float] = Field(None, ge=0)
    order: Optional[int] = Field(None, ge=0)
    index: Optional[int] = Field(None, ge=0)

    @model_validator(mode='after')
    def validate_kind_fields(self):
        if self.kind == "finite" and (self.alpha is None or self.order is None):
            raise InvalidInputError("Finite constraints need alpha and order", field="constraint")
        if self.kind == "asymptotic" and self.index is None:
            raise InvalidInputError("Asymptotic constraints need an index", field="constraint")
        return self


class PieceModel(BaseModel):
    """Auxiliary exponent and numerator coefficients of one piece."""
    exponent: str = Field(..., description="Exact rational exponent e_j")
    coeffs: List[float] = Field(..., min_length=1)

    @field_validator('exponent')
    def validate_exponent(cls, v):
        if not RATIONAL_PATTERN.match(v):
            raise InvalidInputError("Piece exponent must be an exact rational", field="exponent", value=v)
        return v

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.exponent)


class DefectModel(BaseModel):
    ok: bool
    positive_roots: List[float] = Field(default_factory=list)


class PhysicalModel(BaseModel):
    """Eigenvalue of -d^2/dx^2 + A x^a + B x^b reported next to an approximant."""
    A: float = Field(..., gt=0)
    B: float = Field(..., ge=0)
    coupling: float = Field(..., ge=0, description="Reduced coupling the approximant is evaluated at")
    e_scale: float = Field(..., gt=0)
    e_app: float = Field(..., description="e_scale times the approximant at the reduced coupling")
    e_direct: Optional[float] = Field(None, description="Shooting solve of the physical problem")
    rel_err: Optional[float] = None


class ApproximantDocument(BaseModel):
    """Serialized approximant with its constraint ledger and solve diagnostics."""
    family: FamilyModel
    level: int = Field(..., ge=0)
    N: int = Field(..., ge=0)
    mu: float = Field(..., gt=0)
    pieces: List[PieceModel] = Field(..., min_length=2)
    q: List[float]
    constraints: List[ConstraintModel]
    residual: Optional[float] = None
    backward_error: Optional[float] = None
    condition: Optional[float] = None
    precision: str = "double"
    defect: Optional[DefectModel] = None
    physical: Optional[PhysicalModel] = None
    manifest: Optional[RunManifest] = None

    @model_validator(mode='after')
    def validate_shapes(self):
        if len(self.q) != self.N:
            raise ValidationError(
                "q must hold q_1..q_N",
                field="q",
                expected_type=f"list of {self.N} floats",
                actual_value=len(self.q)
            )
        for piece in self.pieces:
            if len(piece.coeffs) != self.N + 1:
                raise ValidationError(
                    "Every piece needs N+1 coefficients",
                    field="pieces",
                    expected_type=f"list of {self.N + 1} floats",
                    actual_value=len(piece.coeffs)
                )
        return self


def parse_node_token(token: str) -> Tuple[float, int]:
    """
    Parse "<alpha>" or "d<k>@<alpha>" into (alpha, order).

    Raises:
        InvalidInputError: For malformed tokens
    """
    match = NODE_PATTERN.match(token.strip())
    if not match:
        raise InvalidInputError("Node tokens look like 0.5 or d2@0.5", field="nodes", value=token)
    order = int(match.group("order")) if match.group("order") else 0
    return float(match.group("alpha")), order


def parse_node_tokens(text: str) -> List[Tuple[float, int]]:
    """Comma-separated node tokens, order preserved."""
    tokens = [t for t in text.split(",") if t.strip()]
    if not tokens:
        raise InvalidInputError("Node list is empty", field="nodes", value=text)
    return [parse_node_token(t) for t in tokens]


def parse_replacement(text: str) -> Tuple[float, int]:
    """Target of a --replace-power-<K>-by flag, e.g. "d2@0.5"."""
    return parse_node_token(text)


def parse_grid_spec(spec: str) -> List[float]:
    """
    Parse a coupling grid.

    Accepted forms:
        log:<start>:<stop>:<count>     geometric spacing, start > 0
        linear:<start>:<stop>:<count>  uniform spacing
        v1,v2,...                      explicit values

    Raises:
        InvalidInputError: For malformed specs or negative couplings
    """
    spec = spec.strip()
    try:
        if spec.startswith(("log:", "linear:")):
            kind, start, stop, count = spec.split(":")
            start, stop, count = float(start), float(stop), int(count)
            if count < 1:
                raise ValueError("count must be positive")
            if kind == "log":
                if start <= 0 or stop <= 0:
                    raise ValueError("log grids need positive bounds")
                values = np.geomspace(start, stop, count)
            else:
                values = np.linspace(start, stop, count)
            grid = [float(v) for v in values]
        else:
            grid = [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as e:
        raise InvalidInputError(f"Invalid grid spec: {e}", field="grid", value=spec)

    if not grid:
        raise InvalidInputError("Grid is empty", field="grid", value=spec)
    if any(v < 0 for v in grid):
        raise InvalidInputError("Couplings must be nonnegative", field="grid", value=spec)
    return grid


def parse_positive_floats(text: str, field: str) -> List[float]:
    """Comma-separated strictly positive values (mu grids)."""
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError("Expected comma-separated numbers", field=field, value=text)
    if not values:
        raise InvalidInputError("List is empty", field=field, value=text)
    bad = [v for v in values if not v > 0]
    if bad:
        raise InvalidInputError("Values must be positive", field=field, value=bad)
    return values
