"""
Problem definitions: the damped mass-spring system (DMSS) and the 1D Poisson equation,
Chebyshev training nodes, the physical <-> encoded coordinate map and closed-form oracles.
"""
import logging
from dataclasses import dataclass, field
from math import cos, exp, pi, sin, sqrt
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from config import DMSS_CONFIG, POISSON_CONFIG
from utils.exceptions import ProblemError

logger = logging.getLogger(__name__)

PROBLEM_KINDS = ('dmss', 'poisson')
BC_KINDS = ('periodic', 'dirichlet', 'neumann')
HALVES = ('left', 'right')


def chebyshev_nodes_kind1(a: float, b: float, n: int) -> Tuple[float, ...]:
    """Chebyshev-Gauss nodes rescaled to [a, b], k = 1..n, ascending."""
    if n < 2:
        raise ProblemError(f"at least 2 nodes are required, got {n}")
    nodes = [(a + b) / 2 + (b - a) / 2 * cos((2 * k - 1) * pi / (2 * n)) for k in range(1, n + 1)]
    return tuple(sorted(nodes))


def chebyshev_nodes_kind2(b: float, n: int) -> Tuple[float, ...]:
    """
    Positive Chebyshev nodes scaled to [0, b], ascending.

    b cos((2k-1) pi / (4(n-1))) for k = 1..n-1 gives the n-1 positive Gauss nodes of the
    2(n-1)-point set; the endpoint b (zero angle) completes the n distinct nodes.
    """
    if n < 2:
        raise ProblemError(f"at least 2 nodes are required, got {n}")
    nodes = [b * cos((2 * k - 1) * pi / (4 * (n - 1))) for k in range(1, n)] + [b]
    nodes = sorted(nodes)
    if len(set(nodes)) != n:
        raise ProblemError(f"kind-2 node construction produced duplicates: {nodes}")
    return tuple(nodes)


def chebyshev_nodes(kind: int, a: float, b: float, n: int) -> Tuple[float, ...]:
    if kind == 1:
        return chebyshev_nodes_kind1(a, b, n)
    if kind == 2:
        return chebyshev_nodes_kind2(b, n)
    raise ProblemError(f"node kind must be 1 or 2, got {kind}")


# ---------------------------------------------------------------------------
# Damped mass-spring system
# ---------------------------------------------------------------------------

def dmss_residual(f: float, f1: float, f2: float, mass: float = 1.0, damping: float = 1.0,
                  stiffness: float = 1.0) -> float:
    """m f'' + b f' + k f."""
    return mass * f2 + damping * f1 + stiffness * f


def dmss_constants(mass: float = 1.0, damping: float = 1.0, stiffness: float = 1.0,
                   u0: float = 1.0, du0: float = 0.0) -> Tuple[float, float, float, float]:
    """(alpha, beta, C1, C2) of f = e^(alpha t)[C1 cos(beta t) + C2 sin(beta t)]."""
    discriminant = damping ** 2 - 4 * mass * stiffness
    if discriminant >= 0:
        raise ProblemError(f"system is not underdamped (b^2 - 4mk = {discriminant})")
    alpha = -damping / (2 * mass)
    beta = sqrt(-discriminant) / (2 * mass)
    return alpha, beta, u0, (du0 - alpha * u0) / beta


def dmss_analytical(t: float, mass: float = 1.0, damping: float = 1.0, stiffness: float = 1.0,
                    u0: float = 1.0, du0: float = 0.0, t0: float = 0.0) -> Tuple[float, float, float]:
    """Value, first and second derivative of the underdamped solution at time ``t``."""
    alpha, beta, c1, c2 = dmss_constants(mass, damping, stiffness, u0, du0)
    tau = t - t0
    envelope = exp(alpha * tau)
    c, s = cos(beta * tau), sin(beta * tau)
    d1, d2 = alpha * c1 + beta * c2, alpha * c2 - beta * c1
    e1, e2 = alpha * d1 + beta * d2, alpha * d2 - beta * d1
    return (envelope * (c1 * c + c2 * s),
            envelope * (d1 * c + d2 * s),
            envelope * (e1 * c + e2 * s))


# ---------------------------------------------------------------------------
# Poisson equation f'' + s = 0 with a sign-changing source
# ---------------------------------------------------------------------------

def poisson_source(x: float, n_src: int = 5, a: float = 0.0, b: float = 31.0) -> float:
    """+(1/2)^(n/2) left of the midpoint, -(1/2)^(n/2) right of it."""
    midpoint = (a + b) / 2
    if x == midpoint:
        raise ProblemError(f"the source is discontinuous at the midpoint {midpoint}")
    magnitude = 0.5 ** (n_src / 2)
    return magnitude if x < midpoint else -magnitude


def poisson_root(bc_kind: str, a: float, b: float, side: str) -> float:
    """Second root r of the half solution A (x - x_m)(x - r) (left) or -A (x - x_m)(x - r) (right)."""
    midpoint = (a + b) / 2
    if bc_kind == 'periodic':
        return a - 0.5 if side == 'left' else b + 0.5
    if bc_kind == 'dirichlet':
        return a - 1.0 if side == 'left' else b + 1.0
    if bc_kind == 'neumann':
        return 2 * a - midpoint if side == 'left' else 2 * b - midpoint
    raise ProblemError(f"unknown boundary condition '{bc_kind}'")


def poisson_analytical(x: float, bc_kind: str, n_src: int = 5, a: float = 0.0, b: float = 31.0,
                       side: Optional[str] = None) -> Tuple[float, float, float]:
    """
    Piecewise quadratic solution; the two halves are antisymmetric about the midpoint.

    At the midpoint f = 0 and the derivatives are the one-sided limits of ``side`` (left by default).
    """
    amplitude = -(0.5 ** (n_src / 2 + 1))
    midpoint = (a + b) / 2
    if x != midpoint:
        side = 'left' if x < midpoint else 'right'
    elif side is None:
        side = 'left'
    sign = 1.0 if side == 'left' else -1.0
    root = poisson_root(bc_kind, a, b, side)
    coefficient = sign * amplitude
    value = coefficient * (x - midpoint) * (x - root)
    slope = coefficient * (2 * x - midpoint - root)
    return value, slope, 2 * coefficient


# ---------------------------------------------------------------------------
# Problem specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryConstraint:
    """Value or derivative target at a physical point; a floating constraint is met by the readout shift."""
    kind: str
    t: float
    target: float
    floating: bool = False

    def __post_init__(self):
        if self.kind not in ('value', 'derivative'):
            raise ProblemError(f"constraint kind must be 'value' or 'derivative', got '{self.kind}'")
        if self.floating and self.kind != 'value':
            raise ProblemError("only value constraints can float")


@dataclass(frozen=True)
class CoordinateMap:
    """Affine map t = t_lo + (t_hi - t_lo)(x - a)/(b - a) between physical t and encoded x."""
    t_lo: float
    t_hi: float
    a: float
    b: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.t_hi > self.t_lo:
            raise ProblemError(f"degenerate physical interval [{self.t_lo}, {self.t_hi}]")
        if not 0.0 <= self.a < self.b < 1.0:
            raise ProblemError(f"encoded interval [{self.a}, {self.b}] must satisfy 0 <= a < b < 1")

    @property
    def dx_dt(self) -> float:
        return (self.b - self.a) / (self.t_hi - self.t_lo)

    @property
    def second_factor(self) -> float:
        return self.dx_dt ** 2

    def to_physical(self, x):
        return self.t_lo + (x - self.a) / self.dx_dt

    def to_encoded(self, t):
        return self.a + (t - self.t_lo) * self.dx_dt


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    physical_interval: Tuple[float, float]
    encoded_interval: Tuple[float, float] = DMSS_CONFIG['encoded_interval']
    evaluation_interval: Optional[Tuple[float, float]] = None
    mass: float = DMSS_CONFIG['mass']
    damping: float = DMSS_CONFIG['damping']
    stiffness: float = DMSS_CONFIG['stiffness']
    u0: float = DMSS_CONFIG['u0']
    du0: float = DMSS_CONFIG['du0']
    n_src: int = POISSON_CONFIG['n_src']
    bc_kind: str = 'dirichlet'
    half: str = 'left'
    domain: Tuple[float, float] = POISSON_CONFIG['interval']
    amplitude_scale: float = 1.0
    bc_mode: str = 'floating'
    constraints: Tuple[BoundaryConstraint, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ProblemError(f"unknown problem kind '{self.kind}'")
        t_lo, t_hi = self.physical_interval
        a, b = self.encoded_interval
        if not t_hi > t_lo:
            raise ProblemError(f"degenerate physical interval {self.physical_interval}")
        if not 0.0 <= a < b < 1.0:
            raise ProblemError(f"encoded interval {self.encoded_interval} must satisfy 0 <= a < b < 1")
        if self.amplitude_scale <= 0:
            raise ProblemError(f"amplitude_scale must be positive, got {self.amplitude_scale}")
        if self.bc_mode not in ('floating', 'loss'):
            raise ProblemError(f"bc_mode must be 'floating' or 'loss', got '{self.bc_mode}'")
        if self.kind == 'dmss':
            dmss_constants(self.mass, self.damping, self.stiffness, self.u0, self.du0)
        else:
            if self.bc_kind not in BC_KINDS:
                raise ProblemError(f"unknown boundary condition '{self.bc_kind}'")
            if self.half not in HALVES:
                raise ProblemError(f"half must be 'left' or 'right', got '{self.half}'")
        if self.evaluation_interval is None:
            object.__setattr__(self, 'evaluation_interval', self.physical_interval)
        if not self.constraints:
            object.__setattr__(self, 'constraints', self._default_constraints())

    @classmethod
    def dmss(cls, physical_interval=DMSS_CONFIG['physical_interval'], **overrides) -> 'ProblemSpec':
        return cls('dmss', tuple(physical_interval), **overrides)

    @classmethod
    def poisson(cls, bc_kind: str, half: str = 'left', n_src: int = POISSON_CONFIG['n_src'],
                domain=POISSON_CONFIG['interval'], **overrides) -> 'ProblemSpec':
        """Half-interval Poisson problem padded by one unit beyond the outer boundary."""
        a, b = domain
        midpoint = (a + b) / 2
        interval = (a - 1.0, midpoint) if half == 'left' else (midpoint, b + 1.0)
        overrides.setdefault('evaluation_interval', (a, midpoint) if half == 'left' else (midpoint, b))
        overrides.setdefault('amplitude_scale', POISSON_CONFIG['amplitude_scale'])
        return cls('poisson', interval, bc_kind=bc_kind, half=half, n_src=n_src,
                   domain=(a, b), **overrides)

    def _default_constraints(self) -> Tuple[BoundaryConstraint, ...]:
        floating = self.bc_mode == 'floating'
        if self.kind == 'dmss':
            t0 = self.physical_interval[0]
            return (BoundaryConstraint('value', t0, self.u0, floating),
                    BoundaryConstraint('derivative', t0, self.du0))
        return poisson_constraints(self.bc_kind, self.domain[0], self.domain[1], self.half, floating)

    @property
    def de_order(self) -> int:
        return 2

    @property
    def midpoint(self) -> float:
        return (self.domain[0] + self.domain[1]) / 2

    def residual_coefficients(self) -> Tuple[float, float, float]:
        """(c_f, c_f1, c_f2) of the linear residual c_f f + c_f1 f' + c_f2 f'' + source(t)."""
        if self.kind == 'dmss':
            return self.stiffness, self.damping, self.mass
        return 0.0, 0.0, 1.0

    def source(self, t: float) -> float:
        if self.kind == 'dmss':
            return 0.0
        # a half problem sees one sign of the source, the midpoint included
        magnitude = 0.5 ** (self.n_src / 2)
        return magnitude if self.half == 'left' else -magnitude

    def residual(self, t: float, f: float, f1: float, f2: float) -> float:
        if self.kind == 'dmss':
            return dmss_residual(f, f1, f2, self.mass, self.damping, self.stiffness)
        return f2 + self.source(t)

    def analytical(self, t: float) -> Tuple[float, float, float]:
        if self.kind == 'dmss':
            return dmss_analytical(t, self.mass, self.damping, self.stiffness, self.u0, self.du0,
                                   self.physical_interval[0])
        return poisson_analytical(t, self.bc_kind, self.n_src, *self.domain, side=self.half)

    def floating_constraint(self) -> Optional[BoundaryConstraint]:
        return next((c for c in self.constraints if c.floating), None)

    def mirrored(self) -> 'ProblemSpec':
        """The same Poisson problem on the other half-interval."""
        if self.kind != 'poisson':
            raise ProblemError("only the Poisson problem has halves")
        other = 'right' if self.half == 'left' else 'left'
        return ProblemSpec.poisson(self.bc_kind, other, self.n_src, self.domain,
                                   encoded_interval=self.encoded_interval,
                                   amplitude_scale=self.amplitude_scale, bc_mode=self.bc_mode)


def poisson_constraints(bc_kind: str, a: float, b: float, half: Optional[str] = None,
                        floating: bool = True) -> Tuple[BoundaryConstraint, ...]:
    """
    Boundary constraints of the Poisson problem; ``half`` keeps only that side.

    Each half also pins f(x_m) = 0 at the midpoint, met by the readout shift when floating.
    """
    midpoint = (a + b) / 2
    sides = {
        'periodic': (BoundaryConstraint('value', a - 0.5, 0.0), BoundaryConstraint('value', b + 0.5, 0.0)),
        'dirichlet': (BoundaryConstraint('value', a - 1.0, 0.0), BoundaryConstraint('value', b + 1.0, 0.0)),
        'neumann': (BoundaryConstraint('derivative', a, 0.0), BoundaryConstraint('derivative', b, 0.0)),
    }
    if bc_kind not in sides:
        raise ProblemError(f"unknown boundary condition '{bc_kind}'")
    left, right = sides[bc_kind]
    anchor = BoundaryConstraint('value', midpoint, 0.0, floating)
    if half == 'left':
        return anchor, left
    if half == 'right':
        return anchor, right
    return left, right


def coordinate_map(problem: ProblemSpec, interval: Optional[Tuple[float, float]] = None) -> CoordinateMap:
    """Map of the training interval (or ``interval``) onto the encoded interval, with the readout amplitude."""
    t_lo, t_hi = interval or problem.physical_interval
    a, b = problem.encoded_interval
    return CoordinateMap(t_lo, t_hi, a, b, problem.amplitude_scale)


def training_nodes(problem: ProblemSpec, kind: int, n: int) -> Tuple[float, ...]:
    """Chebyshev nodes over the encoded interval."""
    a, b = problem.encoded_interval
    return chebyshev_nodes(kind, a, b, n)


def dmss_reference(problem: ProblemSpec, times: Sequence[float]) -> np.ndarray:
    """Numerical DMSS solution at ``times`` from a tightly converged Runge-Kutta integration."""
    if problem.kind != 'dmss':
        raise ProblemError("the numerical reference exists for the DMSS problem only")
    times = np.asarray(times, dtype=float)
    t0 = problem.physical_interval[0]

    def rhs(_, y):
        return [y[1], -(problem.damping * y[1] + problem.stiffness * y[0]) / problem.mass]

    solution = solve_ivp(rhs, (t0, float(times.max())), [problem.u0, problem.du0],
                         method='RK45', t_eval=times, rtol=1e-12, atol=1e-12, max_step=1e-2)
    if not solution.success:
        raise ProblemError(f"reference integration failed: {solution.message}")
    return solution.y[0]
