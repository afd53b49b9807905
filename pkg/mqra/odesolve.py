"""
Half-line bound-state machinery.

Numerov integration of y'' = (W(x) - E) y + G(x) on a uniform grid, eigenvalue
shooting with node counting and derivative-jump bisection at the outer
classical turning point, linear shooting for the inhomogeneous chain
equations, Simpson quadrature and the orthogonality gauge.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from numba import njit
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import simpson

from mqra.core import Parity, Potential
from utils.config import get_settings
from utils.exceptions import (
    BracketError,
    ChainInconsistencyError,
    ConvergenceError,
    GridError,
    InvalidInputError,
)
from utils.structured_logger import Stopwatch, get_logger

logger = get_logger(__name__)

OVERFLOW_LIMIT = 1e250
RESCALE_LIMIT = 1e200
NORM_FLOOR = 1e-280
MAX_WIDENINGS = 60
# f'(x_0) ~ (25 f_0 - 48 f_1 + 36 f_2 - 16 f_3 + 3 f_4) / (12 h) for samples running
# backward from x_0; forward runs flip the sign
ONE_SIDED_SLOPE = np.array([25.0, -48.0, 36.0, -16.0, 3.0]) / 12.0
SLOPE_POINTS = 5


# ---------------------------------------------------------------------------
# Numerov kernels
#
# c_i = 1 - h^2 (W_i - E) / 12 and g_i = h^2 G_i / 12, so that
#   c_{i+1} y_{i+1} = (12 - 10 c_i) y_i - c_{i-1} y_{i-1} + g_{i+1} + 10 g_i + g_{i-1}
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _numerov_outward(c, g, y0, y1, stop, limit):
    n = c.shape[0]
    y = np.zeros(n)
    y[0] = y0
    y[1] = y1
    blown = -1
    for i in range(1, stop):
        y[i + 1] = ((12.0 - 10.0 * c[i]) * y[i] - c[i - 1] * y[i - 1]
                    + g[i + 1] + 10.0 * g[i] + g[i - 1]) / c[i + 1]
        if abs(y[i + 1]) > limit:
            blown = i + 1
            break
    return y, blown


@njit(cache=True, nogil=True)
def _numerov_inward(c, g, y_last, y_prev, stop, rescale):
    n = c.shape[0]
    last = n - 1
    y = np.zeros(n)
    y[last] = y_last
    y[last - 1] = y_prev
    for i in range(last - 1, stop, -1):
        y[i - 1] = ((12.0 - 10.0 * c[i]) * y[i] - c[i + 1] * y[i + 1]
                    + g[i + 1] + 10.0 * g[i] + g[i - 1]) / c[i - 1]
        if rescale and abs(y[i - 1]) > 1e200:
            for k in range(i - 1, n):
                y[k] *= 1e-200
    return y


@njit(cache=True, nogil=True)
def _count_sign_changes(y, stop):
    count = 0
    previous = 0.0
    for i in range(1, stop + 1):
        if y[i] != 0.0:
            if previous != 0.0 and (y[i] > 0.0) != (previous > 0.0):
                count += 1
            previous = y[i]
    return count


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

def grid_points(x_max: float, h: float) -> int:
    """
    Number of intervals M = x_max / h of a uniform grid.

    Raises:
        GridError: If x_max/h is not an integer or the grid has fewer than 3 points
    """
    if not (h > 0 and x_max > 0):
        raise GridError("Grid step and extent must be positive", x_max=x_max, h=h)
    ratio = x_max / h
    intervals = int(round(ratio))
    if abs(ratio - intervals) > 1e-12 * max(1.0, ratio):
        raise GridError(f"x_max/h = {ratio!r} is not an integer", x_max=x_max, h=h)
    if intervals < 2:
        raise GridError("Grid needs at least 3 points", x_max=x_max, h=h)
    return intervals


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples at x = 0, h, ..., x_max of a function with definite parity."""
    x_max: float
    h: float
    values: np.ndarray = field(repr=False)
    parity: Parity = Parity.EVEN

    def __post_init__(self):
        intervals = grid_points(self.x_max, self.h)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (intervals + 1,):
            raise GridError(
                f"Expected {intervals + 1} samples, got {values.shape}",
                x_max=self.x_max, h=self.h
            )
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.size) * self.h

    def same_grid(self, other: "GridFunction") -> bool:
        return self.size == other.size and math.isclose(self.h, other.h, rel_tol=1e-12)

    def require_same_grid(self, other: "GridFunction") -> None:
        if not self.same_grid(other):
            raise GridError(
                f"Grid mismatch: ({self.x_max}, {self.h}) vs ({other.x_max}, {other.h})",
                x_max=other.x_max, h=other.h
            )
        if self.parity is not other.parity:
            raise GridError("Parity mismatch between grid functions", x_max=self.x_max, h=self.h)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return replace(self, values=np.asarray(values, dtype=float))

    def plus(self, other: "GridFunction", coeff: float = 1.0) -> "GridFunction":
        """self + coeff * other on the shared grid."""
        self.require_same_grid(other)
        return self.with_values(self.values + coeff * other.values)

    def decays(self, decay_tol: float) -> bool:
        peak = float(np.max(np.abs(self.values)))
        return peak > 0.0 and abs(self.values[-1]) <= decay_tol * peak


class ShootingConfig(BaseModel):
    """Grid and tolerance settings for eigen and chain solves."""
    model_config = ConfigDict(frozen=True)

    x_max: Optional[float] = Field(None, gt=0, description="Grid extent; chosen from the turning point when unset")
    h: float = Field(1e-3, gt=0, description="Uniform grid step")
    e_bracket: Optional[Tuple[float, float]] = Field(None, description="Initial eigenvalue bracket")
    tol_e: float = Field(1e-12, gt=0, description="Relative eigenvalue tolerance")
    decay_tol: float = Field(1e-8, gt=0, description="Decay and boundary-mismatch tolerance")
    max_iter: int = Field(200, ge=10)
    x_max_floor: Optional[float] = Field(None, gt=0, description="Smallest automatic extent")
    turning_factor: float = Field(2.5, gt=1.0)

    @model_validator(mode='after')
    def validate_bracket(self):
        if self.e_bracket is not None:
            lo, hi = self.e_bracket
            if not (0.0 <= lo < hi):
                raise InvalidInputError("Bracket must satisfy 0 <= lo < hi", field="e_bracket", value=self.e_bracket)
        return self

    @classmethod
    def from_settings(cls, **overrides) -> "ShootingConfig":
        settings = get_settings()
        values = {"h": settings.grid_step, "tol_e": settings.tol_e, "decay_tol": settings.decay_tol}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def snapshot(self) -> Dict[str, float]:
        """Settings recorded with every numeric series."""
        return {"h": self.h, "tol_e": self.tol_e, "decay_tol": self.decay_tol}


@dataclass(frozen=True)
class IvpSolution:
    """Outward IVP result; overflow_index is set when the solution blew up."""
    function: GridFunction
    overflow_index: Optional[int] = None

    @property
    def overflow(self) -> bool:
        return self.overflow_index is not None

    @property
    def divergence_sign(self) -> int:
        """Sign of the solution at the far end (or at the blow-up point)."""
        idx = self.overflow_index if self.overflow else self.function.size - 1
        return int(np.sign(self.function.values[idx]))


@dataclass(frozen=True, eq=False)
class ChainState:
    """Functions psi_0..psi_{n-1} and energies E_0..E_{n-1} of one chain."""
    potential: Potential
    perturbation_exponent: int
    energies: Tuple[float, ...]
    functions: Tuple[GridFunction, ...]

    def __post_init__(self):
        if not self.functions:
            raise InvalidInputError("A chain needs at least psi_0", field="functions")
        base = self.functions[0]
        for fn in self.functions[1:]:
            base.require_same_grid(fn)

    @property
    def base(self) -> GridFunction:
        return self.functions[0]

    @property
    def base_energy(self) -> float:
        return self.energies[0]

    @property
    def parity(self) -> Parity:
        return self.base.parity

    def extended(self, energy: float, function: Optional[GridFunction]) -> "ChainState":
        """Append E_n (and psi_n when given)."""
        functions = self.functions + ((function,) if function is not None else ())
        return replace(self, energies=self.energies + (float(energy),), functions=functions)

    def with_function(self, index: int, function: GridFunction) -> "ChainState":
        functions = list(self.functions)
        functions[index] = function
        return replace(self, functions=tuple(functions))


# ---------------------------------------------------------------------------
# Grid selection
# ---------------------------------------------------------------------------

def default_x_max_floor(potential: Potential) -> float:
    """8 for the direct frame; 6 (b=4) or 5 (steeper) for a pure power."""
    active = [(c, e) for c, e in potential.terms if c != 0.0]
    if len(active) == 1 and active[0][1] >= 4:
        return 6.0 if active[0][1] == 4 else 5.0
    return 8.0


def choose_x_max(potential: Potential, energy: float, config: ShootingConfig) -> float:
    """max(floor, turning_factor * x_t(energy)), rounded up to a multiple of 0.5."""
    floor = config.x_max_floor or default_x_max_floor(potential)
    wanted = max(floor, config.turning_factor * potential.turning_point(energy))
    return math.ceil(wanted * 2.0) / 2.0


def _numerov_arrays(potential: Potential, energy: float, x: np.ndarray, h: float) -> np.ndarray:
    return 1.0 - h * h * (potential(x) - energy) / 12.0


def _odd_start(h: float, f0: float, curvature: float, slope: float, d1: float, d3: float) -> float:
    """
    y(h) for y(0)=0, y'(0)=slope from the Taylor series of y'' = F y + G.

    d1 = G'(0) and d3 = G'''(0); F(0) = f0 and F''(0) = curvature.
    """
    homogeneous = slope * (h + h ** 3 * f0 / 6.0 + h ** 5 * (f0 * f0 + 3.0 * curvature) / 120.0)
    particular = h ** 3 * d1 / 6.0 + h ** 5 * (f0 * d1 + d3) / 120.0
    return homogeneous + particular


def _source_derivatives(g_full: np.ndarray, h: float) -> Tuple[float, float]:
    """G'(0), G'''(0) of an odd source from G(h), G(2h)."""
    g1, g2 = g_full[1], g_full[2]
    d1 = (8.0 * g1 - g2) / (6.0 * h)
    d3 = (g2 - 2.0 * g1) / h ** 3
    return d1, d3


def _start_value(parity: Parity, c: np.ndarray, g: np.ndarray, source: Optional[np.ndarray],
                 h: float, energy: float, potential: Potential, value: float, slope: float) -> float:
    if parity is Parity.EVEN:
        return (value * (12.0 - 10.0 * c[0]) + 2.0 * g[1] + 10.0 * g[0]) / (2.0 * c[1])
    d1, d3 = _source_derivatives(source, h) if source is not None else (0.0, 0.0)
    return _odd_start(h, -energy, potential.curvature_at_origin(), slope, d1, d3)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def integrate_ivp(potential: Potential, energy: float, source: Optional[GridFunction],
                  init: Tuple[float, float], grid: Tuple[float, float]) -> IvpSolution:
    """
    Integrate -u'' + W u - E u = source outward from x=0.

    Args:
        potential: W(x)
        energy: E
        source: Right-hand side on the same grid, or None
        init: (u(0), u'(0)); exactly one of them may be nonzero
        grid: (x_max, h)

    Returns:
        IvpSolution; overflow_index marks where |u| exceeded the overflow limit
        (samples beyond it are left at zero)

    Raises:
        GridError: For an invalid grid or a source on a different grid
        InvalidInputError: For initial data without definite parity
    """
    x_max, h = grid
    intervals = grid_points(x_max, h)
    value, slope = init
    if value != 0.0 and slope != 0.0:
        raise InvalidInputError("Initial data must be even (u,0) or odd (0,u')", field="init", value=init)
    if value == 0.0 and slope == 0.0:
        parity = source.parity if source is not None else Parity.EVEN
    else:
        parity = Parity.EVEN if slope == 0.0 else Parity.ODD

    x = np.arange(intervals + 1) * h
    c = _numerov_arrays(potential, energy, x, h)
    if source is not None:
        if source.size != intervals + 1 or not math.isclose(source.h, h, rel_tol=1e-12):
            raise GridError("Source is sampled on a different grid", x_max=source.x_max, h=source.h)
        forcing = -source.values
    else:
        forcing = np.zeros(intervals + 1)
    g = h * h * forcing / 12.0

    y1 = _start_value(parity, c, g, forcing, h, energy, potential, value, slope)
    y, blown = _numerov_outward(c, g, value, y1, intervals, OVERFLOW_LIMIT)
    fn = GridFunction(x_max=x_max, h=h, values=y, parity=parity)
    return IvpSolution(function=fn, overflow_index=None if blown < 0 else int(blown))


def _turning_index(w: np.ndarray, energy: float) -> int:
    """Last grid index with W < E (-1 when there is none)."""
    return int(np.searchsorted(w, energy, side="left")) - 1


class _EigenProbe:
    """Evaluates one trial energy: too low (-1), too high (+1), plus the merged solution."""

    def __init__(self, potential: Potential, level: int, x: np.ndarray, h: float):
        self.potential = potential
        self.parity = Parity.of_level(level)
        self.half_nodes = level // 2
        self.x = x
        self.h = h
        self.w = potential(x)
        self.zeros = np.zeros_like(x)

    def classify(self, energy: float) -> Tuple[int, Optional[np.ndarray], int]:
        last = self.x.shape[0] - 1
        icl = _turning_index(self.w, energy)
        if icl < 2:
            return -1, None, icl
        if icl >= last - 2:
            return 1, None, icl

        c = _numerov_arrays(self.potential, energy, self.x, self.h)
        value, slope = self.parity.initial_conditions
        y1 = _start_value(self.parity, c, self.zeros, None, self.h, energy, self.potential, value, slope)
        outward, _ = _numerov_outward(c, self.zeros, value, y1, icl + 1, np.inf)

        crossings = _count_sign_changes(outward, icl)
        if crossings > self.half_nodes:
            return 1, None, icl
        if crossings < self.half_nodes:
            return -1, None, icl

        y_prev = (12.0 - 10.0 * c[last]) * self.h / c[last - 1]
        inward = _numerov_inward(c, self.zeros, self.h, y_prev, icl - 1, True)
        if inward[icl] == 0.0 or outward[icl] == 0.0:
            return -1, None, icl

        merged = outward.copy()
        merged[icl:] = inward[icl:] * (outward[icl] / inward[icl])
        # Numerov residual at the join: proportional to the derivative jump, zero on a discrete eigenvalue
        jump = (c[icl + 1] * merged[icl + 1] + c[icl - 1] * merged[icl - 1]
                - (12.0 - 10.0 * c[icl]) * merged[icl]) / self.h
        return (1 if jump * merged[icl] > 0 else -1), merged, icl


def _solve_on_grid(potential: Potential, level: int, x_max: float, config: ShootingConfig) -> Tuple[float, GridFunction]:
    intervals = grid_points(x_max, config.h)
    x = np.arange(intervals + 1) * config.h
    probe = _EigenProbe(potential, level, x, config.h)
    ceiling = float(probe.w[-1])

    lo, hi = config.e_bracket if config.e_bracket is not None else (0.0, ceiling)
    widenings = 0
    while probe.classify(lo)[0] > 0 and widenings < MAX_WIDENINGS:
        lo *= 0.5
        widenings += 1
    while probe.classify(hi)[0] < 0 and widenings < MAX_WIDENINGS:
        if hi >= ceiling:
            break
        hi = min(2.0 * hi, ceiling)
        widenings += 1
    if probe.classify(lo)[0] > 0 or probe.classify(hi)[0] < 0:
        raise BracketError(
            f"Could not isolate level {level} on [0, {x_max}] after {widenings} widenings",
            level=level, bracket=(lo, hi)
        )
    if widenings:
        logger.debug("Eigenvalue bracket widened", operation="solve_eigen", level=level,
                     bracket=[lo, hi], widenings=widenings)

    for iteration in range(config.max_iter):
        if hi - lo <= config.tol_e * max(abs(hi), 1e-300):
            break
        mid = 0.5 * (lo + hi)
        verdict, _, _ = probe.classify(mid)
        if verdict > 0:
            hi = mid
        else:
            lo = mid
    else:
        raise ConvergenceError(
            f"Eigenvalue bisection did not reach tol_e={config.tol_e}",
            operation="solve_eigen", iterations=config.max_iter, achieved=(hi - lo) / hi
        )

    energy = 0.5 * (lo + hi)
    _, merged, _ = probe.classify(energy)
    if merged is None:
        # the midpoint may sit exactly on a node-count boundary; the lower end never does
        energy = lo
        _, merged, _ = probe.classify(energy)
    if merged is None:
        raise ConvergenceError("Converged energy has the wrong node count", operation="solve_eigen",
                               iterations=iteration)

    psi = GridFunction(x_max=x_max, h=config.h, values=merged, parity=probe.parity)
    if not psi.decays(config.decay_tol):
        raise ConvergenceError(
            f"Eigenfunction does not decay by x_max={x_max}",
            operation="solve_eigen",
            achieved=abs(merged[-1]) / float(np.max(np.abs(merged)))
        )
    return energy, psi


def solve_eigen(potential: Potential, level: int, config: Optional[ShootingConfig] = None
                ) -> Tuple[float, GridFunction]:
    """
    Eigenvalue with index level of -d^2/dx^2 + W(x) and its eigenfunction.

    Nodes are counted on [0, x_t] and the energy is bisected on the derivative
    jump between the outward and inward Numerov solutions at x_t.

    Args:
        potential: Confining even potential W
        level: Eigenvalue index n (parity sector from n, floor(n/2) nodes on x > 0)
        config: Grid and tolerances; defaults come from the environment

    Returns:
        (E, psi) with psi(0)=1 (even) or psi'(0)=1 (odd)

    Raises:
        InvalidInputError: For a negative level
        BracketError: When the level cannot be isolated
        ConvergenceError: When bisection or the decay check fails
    """
    if level < 0:
        raise InvalidInputError("Level must be nonnegative", field="level", value=level)
    config = config or ShootingConfig.from_settings()

    with Stopwatch(logger, "solve_eigen", level=level, potential=potential.label):
        if config.x_max is not None:
            return _solve_on_grid(potential, level, config.x_max, config)

        x_max = config.x_max_floor or default_x_max_floor(potential)
        for _ in range(8):
            energy, psi = _solve_on_grid(potential, level, x_max, config)
            wanted = choose_x_max(potential, energy, config)
            if wanted <= x_max:
                return energy, psi
            x_max = wanted
        return energy, psi


def quadrature(f: GridFunction) -> float:
    """
    Composite Simpson over [0, x_max]; the caller doubles even integrands.

    Raises:
        GridError: For fewer than 3 samples
    """
    if f.size < 3:
        raise GridError("Simpson quadrature needs at least 3 points", x_max=f.x_max, h=f.h)
    return float(simpson(f.values, dx=f.h))


def inner(f: GridFunction, g: GridFunction) -> float:
    """Full-line inner product of two functions of equal parity."""
    f.require_same_grid(g)
    return 2.0 * quadrature(f.with_values(f.values * g.values))


def chain_energy(state: ChainState, n: int) -> float:
    """
    E_n by projection of the n-th chain equation on psi_0.

    E_n = <x^p psi_{n-1} - sum_{k=1}^{n-1} E_{n-k} psi_k, psi_0> / <psi_0, psi_0>

    Raises:
        InvalidInputError: If the state does not hold psi_0..psi_{n-1}, E_0..E_{n-1}
        ConvergenceError: If psi_0 has a vanishing norm
    """
    if n < 1 or len(state.functions) < n or len(state.energies) < n:
        raise InvalidInputError(
            f"Chain state holds {len(state.functions)} functions and {len(state.energies)} energies; "
            f"order {n} needs {n} of each",
            field="n", value=n
        )
    psi0 = state.base
    norm = inner(psi0, psi0)
    if not norm > NORM_FLOOR:
        raise ConvergenceError("psi_0 norm below threshold", operation="chain_energy", achieved=norm)

    x = psi0.x
    integrand = x ** state.perturbation_exponent * state.functions[n - 1].values
    for k in range(1, n):
        integrand = integrand - state.energies[n - k] * state.functions[k].values
    return inner(psi0.with_values(integrand), psi0) / norm


def _chain_source(state: ChainState, n: int, energy: float) -> np.ndarray:
    """sum_{k=1}^{n} E_k psi_{n-k} - x^p psi_{n-1}, with E_n = energy."""
    psi0 = state.base
    source = energy * psi0.values - psi0.x ** state.perturbation_exponent * state.functions[n - 1].values
    for k in range(1, n):
        source = source + state.energies[k] * state.functions[n - k].values
    return source


def _particular_pair(state: ChainState, n: int, energy: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Outward and decaying particular solutions of the n-th chain equation,
    the decaying one shifted by psi_0 to agree in value at the turning index.

    The outward samples are valid up to icl+1, the closing ones from icl-1.
    """
    psi0 = state.base
    x, h = psi0.x, psi0.h
    last = psi0.size - 1
    e0 = state.base_energy
    w = state.potential(x)
    icl = _turning_index(w, e0)
    if icl < SLOPE_POINTS or icl > last - SLOPE_POINTS:
        raise GridError(f"Turning point index {icl} unusable on this grid", x_max=psi0.x_max, h=h)

    source = _chain_source(state, n, energy)
    forcing = -source
    c = _numerov_arrays(state.potential, e0, x, h)
    g = h * h * forcing / 12.0

    y1 = _start_value(state.parity, c, g, forcing, h, e0, state.potential, 0.0, 0.0)
    outward, _ = _numerov_outward(c, g, 0.0, y1, icl + 1, np.inf)
    y_prev = (11.0 * g[last] + g[last - 1]) / c[last - 1]
    inward = _numerov_inward(c, g, 0.0, y_prev, icl - 1, False)

    shift = (outward[icl] - inward[icl]) / psi0.values[icl]
    return outward, inward + shift * psi0.values, icl


def _match_chain(state: ChainState, n: int, energy: float) -> Tuple[np.ndarray, float, int]:
    """
    Two-sided particular solution of the n-th chain equation.

    Returns the merged samples, the signed value mismatch one step past the
    turning point and the turning index.
    """
    outward, closing, icl = _particular_pair(state, n, energy)
    merged = outward.copy()
    merged[icl:] = closing[icl:]
    delta = outward[icl + 1] - closing[icl + 1]
    return merged, float(delta), icl


def chain_slope_jump(state: ChainState, n: int, energy: float) -> float:
    """
    u'_out(x_t) - u'_closing(x_t) for a trial E_n, both slopes from one-sided
    fourth-order stencils so neither side reads across the join.

    Vanishes exactly when E_n satisfies the solvability condition
    <psi_0, source> = 0; affine in E_n.
    """
    outward, closing, icl = _particular_pair(state, n, energy)
    h = state.base.h
    left = float(np.dot(ONE_SIDED_SLOPE, outward[icl::-1][:SLOPE_POINTS])) / h
    right = -float(np.dot(ONE_SIDED_SLOPE, closing[icl:icl + SLOPE_POINTS])) / h
    return left - right


def gauge_fix(function: GridFunction, psi0: GridFunction) -> GridFunction:
    """Remove the psi_0 component: <psi_0, result> = 0."""
    return function.plus(psi0, -inner(function, psi0) / inner(psi0, psi0))


def chain_function(state: ChainState, n: int, energy: float, decay_tol: Optional[float] = None) -> GridFunction:
    """
    psi_n solving the n-th chain equation, in the orthogonality gauge.

    Raises:
        ChainInconsistencyError: When the outward and inward particular
            solutions cannot be joined with this E_n
    """
    if decay_tol is None:
        decay_tol = get_settings().decay_tol
    if n < 1 or len(state.functions) < n or len(state.energies) < n:
        raise InvalidInputError(f"Chain state cannot produce order {n}", field="n", value=n)

    merged, delta, icl = _match_chain(state, n, energy)
    peak = float(np.max(np.abs(merged)))
    mismatch = abs(delta) / peak if peak > 0 else abs(delta)
    if mismatch > decay_tol:
        raise ChainInconsistencyError(
            f"Boundary mismatch {mismatch:.3e} at order {n} exceeds {decay_tol:.1e}",
            order=n, mismatch=mismatch, tolerance=decay_tol
        )
    logger.debug("Chain function matched", operation="chain_function", order=n,
                 mismatch=mismatch, turning_index=icl)
    return gauge_fix(state.base.with_values(merged), state.base)


def chain_mismatch(state: ChainState, n: int, energy: float) -> float:
    """Relative boundary mismatch of the n-th chain equation at a trial E_n."""
    merged, delta, _ = _match_chain(state, n, energy)
    peak = float(np.max(np.abs(merged)))
    return abs(delta) / peak if peak > 0 else abs(delta)


def shoot_chain_energy(state: ChainState, n: int, max_iter: int = 8) -> float:
    """
    E_n as the root of the slope jump at the turning point instead of the
    projection integral.

    The jump is affine in E_n, so secant steps converge at once; a couple of
    extra steps absorb rounding.
    """
    e_a, e_b = 0.0, 1.0
    d_a = chain_slope_jump(state, n, e_a)
    d_b = chain_slope_jump(state, n, e_b)
    for _ in range(max_iter):
        if d_b == d_a:
            break
        e_next = e_b - d_b * (e_b - e_a) / (d_b - d_a)
        e_a, d_a = e_b, d_b
        e_b = e_next
        d_b = chain_slope_jump(state, n, e_b)
        if abs(e_b - e_a) <= 1e-14 * max(1.0, abs(e_b)):
            break
    return e_b


def build_chain(potential: Potential, perturbation_exponent: int, level: int, n_terms: int,
                config: Optional[ShootingConfig] = None, method: str = "projection") -> ChainState:
    """
    Run the chain for n_terms energies E_0..E_{n_terms-1}.

    The grid extent follows the broadest function of the chain,
    E_eff = E_0 + p (n_terms - 1), unless config fixes x_max.

    Args:
        potential: Unperturbed operator W
        perturbation_exponent: p in x^p psi_{n-1}
        level: Eigenvalue index
        n_terms: Number of energies to produce
        config: Shooting configuration
        method: "projection" (integral route) or "shoot" (mismatch root)

    Returns:
        ChainState with n_terms energies and the functions needed to produce them
    """
    if n_terms < 1:
        raise InvalidInputError("n_terms must be at least 1", field="n_terms", value=n_terms)
    if method not in ("projection", "shoot"):
        raise InvalidInputError("Unknown chain method", field="method", value=method)
    config = config or ShootingConfig.from_settings()

    energy, psi0 = solve_eigen(potential, level, config)
    if config.x_max is None and n_terms > 1:
        wanted = choose_x_max(potential, energy + perturbation_exponent * (n_terms - 1), config)
        if wanted > psi0.x_max:
            energy, psi0 = solve_eigen(potential, level, config.model_copy(update={"x_max": wanted}))

    state = ChainState(potential=potential, perturbation_exponent=perturbation_exponent,
                       energies=(energy,), functions=(psi0,))
    with Stopwatch(logger, "build_chain", level=level, n_terms=n_terms, method=method,
                   x_max=psi0.x_max):
        for n in range(1, n_terms):
            if method == "shoot":
                e_n = shoot_chain_energy(state, n)
            else:
                e_n = chain_energy(state, n)
            psi_n = chain_function(state, n, e_n, config.decay_tol) if n < n_terms - 1 else None
            state = state.extended(e_n, psi_n)
    logger.debug("Chain complete", operation="build_chain", energies=list(state.energies))
    return state
