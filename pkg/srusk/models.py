"""
Bundled Lagrangian systems.

The semidiscrete nonlinear wave model replaces u_x by a forward difference
and u_t by the average of neighbouring velocities, which makes its velocity
Hessian singular along the alternating vector. Its constraint chain is known
in closed form and serves as a golden reference for the constraint algorithm.
Regular systems (free particle, harmonic oscillator) and a toy gauge system
are provided for oracles.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from srusk import autodiff as ad
from srusk.autodiff import SmoothScalarField, derivative_field, jet2
from srusk.constraints import (
    ConstraintFunction,
    Provenance,
    ProvenanceKind,
    primary_constraint,
)
from srusk.exceptions import SingularHessianError, UnknownModelError
from srusk.integrator import Trajectory
from srusk.lagrangian import (
    DEFAULT_RANK_TOL,
    LagrangianSystem,
    euler_lagrange_rhs,
    lagrangian_derivatives,
    rank_revealing_split,
)
from srusk.unified import UnifiedPoint, point_on_w1

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

PotentialFn = Callable[[Any, Any], Any]


@dataclass(frozen=True)
class Potential:
    """A named potential f(t, x) with numeric coefficients."""

    name: str
    defaults: Tuple[float, ...]
    build: Callable[[Tuple[float, ...]], PotentialFn]
    description: str

    def field(self, coefficients: Optional[Sequence[float]] = None) -> SmoothScalarField:
        coefficients = tuple(float(c) for c in (self.defaults if coefficients is None else coefficients))
        if len(coefficients) != len(self.defaults):
            raise ValueError(f"{self.name} takes {len(self.defaults)} coefficient(s), got {len(coefficients)}")
        fn = self.build(coefficients)
        return SmoothScalarField(2, lambda x: fn(x[0], x[1]), self.name)


def _zero(c: Tuple[float, ...]) -> PotentialFn:
    return lambda t, u: 0.0


SIGMA_REGISTRY: Dict[str, Potential] = {
    "linear": Potential(
        "linear", (1.0,),
        lambda c: lambda t, ux: 0.5 * c[0] * ux * ux,
        "c/2 u_x^2",
    ),
    "quartic": Potential(
        "quartic", (1.0, 1.0),
        lambda c: lambda t, ux: 0.5 * c[0] * ux * ux + 0.25 * c[1] * ux ** 4,
        "a/2 u_x^2 + b/4 u_x^4",
    ),
    "modulated": Potential(
        "modulated", (0.5, 1.0),
        lambda c: lambda t, ux: 0.5 * (1.0 + c[0] * ad.sin(c[1] * t)) * ux * ux,
        "(1 + a sin(w t))/2 u_x^2",
    ),
}

G_REGISTRY: Dict[str, Potential] = {
    "zero": Potential("zero", (), _zero, "0"),
    "sine_gordon_g": Potential(
        "sine_gordon_g", (1.0,),
        lambda c: lambda t, u: c[0] * (1.0 - ad.cos(u)),
        "m (1 - cos u)",
    ),
    "quadratic": Potential(
        "quadratic", (1.0,),
        lambda c: lambda t, u: 0.5 * c[0] * c[0] * u * u,
        "m^2/2 u^2",
    ),
}


def _lookup(registry: Dict[str, Potential], name: str, kind: str) -> Potential:
    try:
        return registry[name]
    except KeyError:
        raise UnknownModelError(f"Unknown {kind} '{name}'; available: {', '.join(sorted(registry))}") from None


@dataclass(frozen=True)
class WaveModelParams:
    """
    Parameters of the semidiscrete wave model.

    Args:
        N: Number of grid intervals (N+1 degrees of freedom)
        K: Spatial period
        sigma: Field sigma(t, u_x)
        g_pot: Field g(t, u)
        closed_chain: Add the link between the last and the first node
    """

    N: int
    K: float
    sigma: SmoothScalarField
    g_pot: SmoothScalarField
    closed_chain: bool = False

    def __post_init__(self) -> None:
        if self.N < 2:
            raise ValueError(f"N must be at least 2, got {self.N}")
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")
        if self.sigma.arity != 2 or self.g_pot.arity != 2:
            raise ValueError("sigma and g_pot must take (t, x)")

    @property
    def h(self) -> float:
        return self.K / self.N

    @classmethod
    def from_names(cls, N: int = 4, K: float = 1.0, sigma: str = "quartic",
                   sigma_coefficients: Optional[Sequence[float]] = None, g: str = "zero",
                   g_coefficients: Optional[Sequence[float]] = None,
                   closed_chain: bool = False) -> "WaveModelParams":
        """Build parameters from registry names and coefficient lists."""
        sigma_field = _lookup(SIGMA_REGISTRY, sigma, "sigma").field(sigma_coefficients)
        g_field = _lookup(G_REGISTRY, g, "g").field(g_coefficients)
        return cls(int(N), float(K), sigma_field, g_field, bool(closed_chain))


def _links(params: WaveModelParams) -> List[Tuple[int, int]]:
    links = [(i, i + 1) for i in range(params.N)]
    if params.closed_chain:
        links.append((params.N, 0))
    return links


def check_sigma_convexity(params: WaveModelParams, t: float = 0.0, span: float = 1.0,
                          threshold: float = 1e-8) -> bool:
    """
    Check that d2 sigma / d u_x^2 stays away from zero on a grid of slopes.

    Returns:
        True when the second derivative exceeds ``threshold`` in magnitude everywhere
    """
    for ux in np.linspace(-span, span, 9):
        curvature = jet2(params.sigma, [t, float(ux)]).hessian[1, 1]
        if abs(curvature) <= threshold:
            logger.warning(f"sigma'' = {curvature:.2e} at u_x={ux:.3g}: the constraint chain may not "
                           f"determine every velocity coefficient")
            return False
    return True


def semidiscrete_wave(params: WaveModelParams) -> LagrangianSystem:
    """
    L = sum_i [ 1/2 ((v^i + v^{i+1}) / 2)^2 - sigma(t, (q^{i+1} - q^i) / h) - g(t, (q^{i+1} + q^i) / 2) ].

    Args:
        params: Wave model parameters

    Returns:
        Lagrangian system with N+1 degrees of freedom
    """
    check_sigma_convexity(params)
    h = params.h
    links = _links(params)
    sigma = params.sigma
    g_pot = params.g_pot

    def lagrangian(t: Any, q: Sequence[Any], v: Sequence[Any]) -> Any:
        total = 0.0
        for i, j in links:
            mean_velocity = 0.5 * (v[i] + v[j])
            total = total + 0.5 * mean_velocity * mean_velocity
            total = total - sigma([t, (q[j] - q[i]) / h])
            total = total - g_pot([t, 0.5 * (q[j] + q[i])])
        return total

    n = params.N + 1
    # The averaged kinetic term is degenerate along the alternating vector unless the loop is odd.
    kernel = 1 if not params.closed_chain or n % 2 == 0 else 0
    return LagrangianSystem.from_function(
        n, lagrangian, name=f"wave[N={params.N}]", time_dependent=True,
        expected_kernel_dimension=kernel, N=params.N, K=params.K, h=h,
        sigma=sigma.name, g=g_pot.name, closed_chain=params.closed_chain,
    )


def alternating_vector(n: int) -> np.ndarray:
    """Unit vector with components (-1)^i / sqrt(n)."""
    return np.array([(-1.0) ** i for i in range(n)]) / math.sqrt(n)


def wave_reference_constraints(params: WaveModelParams,
                               sys: Optional[LagrangianSystem] = None) -> List[ConstraintFunction]:
    """
    Closed-form constraint chain of the open-chain wave model.

    Level 1: p_i - dL/dv^i. Level 2: sum_i (-1)^i sigma_x(t, w^i). Level 3:
    sum_i (-1)^i [sigma_xt(t, w^i) + (v^{i+1} - v^i)/h sigma_xx(t, w^i)],
    with w^i = (q^{i+1} - q^i)/h.

    Args:
        params: Wave model parameters (open chain)
        sys: The model's system (built from params when None)

    Returns:
        N+3 constraint functions in level order
    """
    if params.closed_chain:
        raise ValueError("reference constraints are only known for the open chain")
    sys = sys or semidiscrete_wave(params)
    n = params.N + 1
    h = params.h
    sigma_x = derivative_field(params.sigma, [0.0, 1.0], "sigma_x")
    sigma_xt = derivative_field(sigma_x, [1.0, 0.0], "sigma_xt")
    sigma_xx = derivative_field(sigma_x, [0.0, 1.0], "sigma_xx")

    def secondary(z: Sequence[Any]) -> Any:
        t, q = z[0], z[1:n + 1]
        total = 0.0
        for i in range(params.N):
            total = total + (-1.0) ** i * sigma_x([t, (q[i + 1] - q[i]) / h])
        return total

    def tertiary(z: Sequence[Any]) -> Any:
        t, q, v = z[0], z[1:n + 1], z[n + 1:2 * n + 1]
        total = 0.0
        for i in range(params.N):
            w = [t, (q[i + 1] - q[i]) / h]
            total = total + (-1.0) ** i * (sigma_xt(w) + (v[i + 1] - v[i]) / h * sigma_xx(w))
        return total

    arity = 3 * n + 1
    constraints = [primary_constraint(sys, i) for i in range(n)]
    constraints.append(ConstraintFunction(
        "ref2", 2, SmoothScalarField(arity, secondary, "ref2"),
        Provenance(ProvenanceKind.ANALYTIC, label="sum (-1)^i sigma_x(t, w^i)"), momentum_free=True,
    ))
    constraints.append(ConstraintFunction(
        "ref3", 3, SmoothScalarField(arity, tertiary, "ref3"),
        Provenance(ProvenanceKind.ANALYTIC, label="sum (-1)^i [sigma_xt + (v^{i+1}-v^i)/h sigma_xx]"),
        momentum_free=True,
    ))
    return constraints


def standing_wave_exact(params: WaveModelParams, t: float, speed: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    u = cos(2 pi x / K) cos(2 pi c t / K) and u_t at the grid nodes x_i = i h.

    Returns:
        Tuple of (u, u_t) at the N+1 nodes
    """
    k = 2.0 * math.pi / params.K
    x = np.arange(params.N + 1) * params.h
    u = np.cos(k * x) * math.cos(k * speed * t)
    u_t = -k * speed * np.cos(k * x) * math.sin(k * speed * t)
    return u, u_t


def standing_wave_state(sys: LagrangianSystem, params: WaveModelParams, t: float = 0.0,
                        speed: float = 1.0) -> UnifiedPoint:
    """Standing-wave initial data on W1."""
    q, v = standing_wave_exact(params, t, speed)
    return point_on_w1(sys, t, q, v)


def _free_particle(n: int = 1) -> LagrangianSystem:
    def lagrangian(t: Any, q: Sequence[Any], v: Sequence[Any]) -> Any:
        total = 0.0
        for vi in v:
            total = total + 0.5 * vi * vi
        return total

    return LagrangianSystem.from_function(int(n), lagrangian, name="free_particle", time_dependent=False,
                                          expected_kernel_dimension=0)


def _harmonic(n: int = 1, omega: float = 1.0, omega_drift: float = 0.0) -> LagrangianSystem:
    omega = float(omega)
    omega_drift = float(omega_drift)

    def lagrangian(t: Any, q: Sequence[Any], v: Sequence[Any]) -> Any:
        w = omega + omega_drift * t if omega_drift else omega
        total = 0.0
        for qi, vi in zip(q, v):
            total = total + 0.5 * vi * vi - 0.5 * w * w * qi * qi
        return total

    return LagrangianSystem.from_function(int(n), lagrangian, name="harmonic", time_dependent=bool(omega_drift),
                                          expected_kernel_dimension=0, omega=omega, omega_drift=omega_drift)


def _singular_toy() -> LagrangianSystem:
    return LagrangianSystem.from_function(2, lambda t, q, v: 0.5 * v[0] * v[0], name="singular_toy",
                                          time_dependent=False, expected_kernel_dimension=1)


def _wave(**params: Any) -> LagrangianSystem:
    return semidiscrete_wave(WaveModelParams.from_names(**params))


BUILTINS: Dict[str, Callable[..., LagrangianSystem]] = {
    "free_particle": _free_particle,
    "harmonic": _harmonic,
    "singular_toy": _singular_toy,
    "wave": _wave,
}


def builtin(name: str, **params: Any) -> LagrangianSystem:
    """
    Build a bundled system by name.

    Args:
        name: One of free_particle, harmonic, singular_toy, wave
        **params: Model parameters

    Returns:
        The Lagrangian system
    """
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise UnknownModelError(f"Unknown model '{name}'; available: {', '.join(sorted(BUILTINS))}") from None
    try:
        return factory(**params)
    except TypeError as e:
        raise ValueError(f"invalid parameters for model '{name}': {e}") from e


def direct_el_oracle(sys: LagrangianSystem, t0: float, q0: Sequence[float], v0: Sequence[float], step: float,
                     t_end: float, rank_tol: float = DEFAULT_RANK_TOL) -> Trajectory:
    """
    Classical RK4 on q' = v, v' = W^{-1} b for a regular system.

    Args:
        sys: Regular Lagrangian system
        t0: Initial time
        q0: Initial positions
        v0: Initial velocities
        step: Step size
        t_end: Final time
        rank_tol: Threshold for declaring W singular

    Returns:
        Trajectory with p = dL/dv and zero constraint residual
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    n = sys.n

    def accelerate(t: float, q: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, float, np.ndarray]:
        d = lagrangian_derivatives(sys, t, q, v)
        _, rank, _, _ = rank_revealing_split(d.vv, rank_tol)
        if rank < n:
            raise SingularHessianError(f"{sys.name}: velocity Hessian has rank {rank} < {n} at t={t:.6g}")
        return np.linalg.solve(d.vv, euler_lagrange_rhs(d, v)), d.value, d.dv

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return np.concatenate((y[n:], accelerate(t, y[:n], y[n:])[0]))

    steps = int(round((t_end - t0) / step))
    y = np.concatenate((np.asarray(q0, dtype=float), np.asarray(v0, dtype=float)))
    points: List[UnifiedPoint] = []
    energy: List[float] = []
    for index in range(steps + 1):
        t = t0 + index * step
        if index > 0:
            s = t - step
            k1 = rhs(s, y)
            k2 = rhs(s + 0.5 * step, y + 0.5 * step * k1)
            k3 = rhs(s + 0.5 * step, y + 0.5 * step * k2)
            k4 = rhs(s + step, y + step * k3)
            y = y + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _, value, p = accelerate(t, y[:n], y[n:])
        points.append(UnifiedPoint(t, y[:n], y[n:], p))
        energy.append(float(p @ y[n:]) - value)

    zeros = np.zeros(len(points))
    return Trajectory(sys.name, points, zeros, zeros.copy(), np.array(energy), projection="off")
