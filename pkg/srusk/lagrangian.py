"""
Non-autonomous Lagrangian systems and their classical objects in coordinates:
Legendre maps, velocity Hessian and regularity, the Euler-Lagrange residual,
and the Hamiltonian of a regular system.

Argument order is fixed everywhere as (t, q, v).
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from srusk.autodiff import SmoothScalarField, jet2
from srusk.exceptions import NoConvergenceError, SingularJacobianError

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-9
DEFAULT_NEWTON_TOL = 1e-12
DEFAULT_MAX_ITER = 50


@dataclass(frozen=True)
class LagrangianSystem:
    """
    A Lagrangian L(t, q, v) with n degrees of freedom.

    Args:
        n: Degrees of freedom
        L: Field of arity 2n+1 taking (t, q^1..q^n, v^1..v^n)
        name: Identifier used in reports
        time_dependent: False when L has no explicit t (energy is then conserved)
        metadata: Free-form model facts (expected kernel dimension, parameters)
    """

    n: int
    L: SmoothScalarField
    name: str = "lagrangian"
    time_dependent: bool = True
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if self.L.arity != 2 * self.n + 1:
            raise ValueError(f"L must have arity {2 * self.n + 1}, got {self.L.arity}")

    @classmethod
    def from_function(
            cls,
            n: int,
            fn: Callable[[Any, Sequence[Any], Sequence[Any]], Any],
            name: str = "lagrangian",
            time_dependent: bool = True,
            **metadata: Any,
    ) -> "LagrangianSystem":
        """
        Build a system from a callable ``fn(t, q, v)``.

        Args:
            n: Degrees of freedom
            fn: Lagrangian written with the autodiff elementary functions
            name: Identifier
            time_dependent: Whether fn depends explicitly on t
            **metadata: Stored on the system

        Returns:
            The Lagrangian system
        """

        def evaluate(x: Sequence[Any]) -> Any:
            return fn(x[0], x[1:n + 1], x[n + 1:2 * n + 1])

        return cls(n, SmoothScalarField(2 * n + 1, evaluate, name), name, time_dependent, dict(metadata))

    def coordinates(self, t: float, q: Sequence[float], v: Sequence[float]) -> List[float]:
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        if q.shape != (self.n,) or v.shape != (self.n,):
            raise ValueError(f"{self.name}: q and v must have length {self.n}")
        return [float(t), *q.tolist(), *v.tolist()]

    def evaluate(self, t: float, q: Sequence[float], v: Sequence[float]) -> float:
        return float(self.L(self.coordinates(t, q, v)))


class Regularity(str, enum.Enum):
    REGULAR = "Regular"
    SINGULAR = "Singular"


@dataclass(frozen=True)
class RegularityReport:
    classification: Regularity
    singular_values: np.ndarray
    kernel_basis: List[np.ndarray]
    tolerance_used: float

    @property
    def kernel_dimension(self) -> int:
        return len(self.kernel_basis)


@dataclass(frozen=True)
class LagrangianDerivatives:
    """
    Everything one second-order sweep of L yields at a point.

    ``qv[i, j]`` is the mixed partial with respect to q^i and v^j and ``tv[j]``
    the mixed partial with respect to t and v^j.
    """

    value: float
    dt: float
    dq: np.ndarray
    dv: np.ndarray
    vv: np.ndarray
    qv: np.ndarray
    tv: np.ndarray


def lagrangian_derivatives(sys: LagrangianSystem, t: float, q: Sequence[float],
                           v: Sequence[float]) -> LagrangianDerivatives:
    """
    Value, first derivatives and the velocity Hessian blocks of L at (t, q, v).

    Args:
        sys: Lagrangian system
        t: Time
        q: Positions
        v: Velocities

    Returns:
        LagrangianDerivatives for the point
    """
    n = sys.n
    jet = jet2(sys.L, sys.coordinates(t, q, v))
    g, h = jet.gradient, jet.hessian
    vs = slice(n + 1, 2 * n + 1)
    return LagrangianDerivatives(
        value=jet.value,
        dt=float(g[0]),
        dq=g[1:n + 1].copy(),
        dv=g[vs].copy(),
        vv=h[vs, vs].copy(),
        qv=h[1:n + 1, vs].copy(),
        tv=h[0, vs].copy(),
    )


def legendre_restricted(sys: LagrangianSystem, t: float, q: Sequence[float], v: Sequence[float]) -> np.ndarray:
    """Momenta p_i = dL/dv^i."""
    return lagrangian_derivatives(sys, t, q, v).dv


def legendre_extended(sys: LagrangianSystem, t: float, q: Sequence[float],
                      v: Sequence[float]) -> Tuple[float, np.ndarray]:
    """
    Extended Legendre map: the energy coordinate L - v.p and the momenta p.

    Returns:
        Tuple of (p_energy, p)
    """
    d = lagrangian_derivatives(sys, t, q, v)
    return d.value - float(np.dot(np.asarray(v, dtype=float), d.dv)), d.dv


def lagrangian_energy(sys: LagrangianSystem, t: float, q: Sequence[float], v: Sequence[float]) -> float:
    """Lagrangian energy E_L = v.dL/dv - L."""
    p_energy, _ = legendre_extended(sys, t, q, v)
    return -p_energy


def poincare_cartan_form(sys: LagrangianSystem, t: float, q: Sequence[float],
                         v: Sequence[float]) -> Tuple[float, np.ndarray]:
    """
    Coefficients of the Poincare-Cartan 1-form (L - v.dL/dv) dt + (dL/dv) dq.

    Returns:
        Tuple of (dt coefficient, dq coefficients)
    """
    return legendre_extended(sys, t, q, v)


def velocity_hessian(sys: LagrangianSystem, t: float, q: Sequence[float], v: Sequence[float]) -> np.ndarray:
    """Matrix W_ij = d2L/dv^i dv^j."""
    return lagrangian_derivatives(sys, t, q, v).vv


def rank_revealing_split(matrix: np.ndarray, rank_tol: float) -> Tuple[np.ndarray, int, np.ndarray, np.ndarray]:
    """
    SVD of a square or rectangular matrix split at the numerical rank.

    Args:
        matrix: Matrix to decompose
        rank_tol: Relative tolerance against the largest singular value

    Returns:
        Tuple of (singular values, rank, U, Vt)
    """
    u, s, vt = np.linalg.svd(matrix)
    if s.size == 0 or s[0] == 0.0:
        return s, 0, u, vt
    rank = int(np.sum(s >= rank_tol * s[0]))
    return s, rank, u, vt


def normalize_sign(vector: np.ndarray, threshold: float = 1e-12) -> np.ndarray:
    """Unit vector whose first component above ``threshold`` is positive."""
    vector = np.asarray(vector, dtype=float)
    vector = vector / np.linalg.norm(vector)
    for component in vector:
        if abs(component) > threshold:
            return vector if component > 0 else -vector
    return vector


def null_space(matrix: np.ndarray, rank_tol: float) -> List[np.ndarray]:
    """Orthonormal, sign-normalized basis of the numerical null space of ``matrix``."""
    _, rank, _, vt = rank_revealing_split(matrix, rank_tol)
    return [normalize_sign(vt[i]) for i in range(rank, matrix.shape[1])]


def regularity(sys: LagrangianSystem, t: float, q: Sequence[float], v: Sequence[float],
               rank_tol: float = DEFAULT_RANK_TOL) -> RegularityReport:
    """
    Classify the Lagrangian at a point by the rank of its velocity Hessian.

    Args:
        sys: Lagrangian system
        t: Time
        q: Positions
        v: Velocities
        rank_tol: Relative singular-value threshold

    Returns:
        RegularityReport with singular values and kernel basis
    """
    if rank_tol <= 0:
        raise ValueError(f"rank_tol must be positive, got {rank_tol}")
    w = velocity_hessian(sys, t, q, v)
    s = np.linalg.svd(w, compute_uv=False)
    kernel = null_space(w, rank_tol)
    classification = Regularity.SINGULAR if kernel else Regularity.REGULAR
    logger.debug(f"{sys.name}: smallest singular value {s[-1]:.3e}, kernel dimension {len(kernel)}")
    return RegularityReport(classification, s, kernel, rank_tol)


def euler_lagrange_residual(sys: LagrangianSystem, t: float, q: Sequence[float], v: Sequence[float],
                            a: Sequence[float]) -> np.ndarray:
    """
    Residual of the Euler-Lagrange equations for a candidate acceleration.

    r_i = W_ij a^j + (d2L/dq^j dv^i) v^j + d2L/dt dv^i - dL/dq^i

    Returns:
        The n residuals, zero when (q, v, a) satisfies the equations
    """
    d = lagrangian_derivatives(sys, t, q, v)
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    return d.vv @ a + d.qv.T @ v + d.tv - d.dq


def euler_lagrange_rhs(d: LagrangianDerivatives, v: np.ndarray) -> np.ndarray:
    """Right-hand side b of W a = b, so that the residual is W a - b."""
    return d.dq - d.tv - d.qv.T @ v


def legendre_invert(sys: LagrangianSystem, t: float, q: Sequence[float], p: Sequence[float],
                    v_guess: Optional[Sequence[float]] = None, newton_tol: float = DEFAULT_NEWTON_TOL,
                    max_iter: int = DEFAULT_MAX_ITER, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """
    Solve dL/dv(t, q, v) = p for v by damped Newton iteration.

    Args:
        sys: Regular Lagrangian system
        t: Time
        q: Positions
        p: Target momenta
        v_guess: Starting velocities (p itself when None)
        newton_tol: Tolerance on the momentum residual
        max_iter: Iteration cap
        rank_tol: Threshold used to declare the Jacobian singular

    Returns:
        Velocities v with |FL(v) - p| <= newton_tol
    """
    p = np.asarray(p, dtype=float)
    v = np.array(p if v_guess is None else v_guess, dtype=float)
    d = lagrangian_derivatives(sys, t, q, v)
    residual = d.dv - p
    norm = float(np.linalg.norm(residual, np.inf))

    for iteration in range(max_iter):
        if norm <= newton_tol:
            logger.debug(f"Legendre inversion converged in {iteration} iterations")
            return v
        _, rank, _, _ = rank_revealing_split(d.vv, rank_tol)
        if rank < sys.n:
            raise SingularJacobianError(f"{sys.name}: velocity Hessian has rank {rank} < {sys.n}")
        step = np.linalg.solve(d.vv, -residual)

        # Halve the step while the residual grows
        alpha = 1.0
        for _ in range(30):
            trial = v + alpha * step
            trial_d = lagrangian_derivatives(sys, t, q, trial)
            trial_residual = trial_d.dv - p
            trial_norm = float(np.linalg.norm(trial_residual, np.inf))
            if trial_norm < norm or alpha < 1e-8:
                break
            alpha *= 0.5
        v, d, residual, norm = trial, trial_d, trial_residual, trial_norm

    if norm <= newton_tol:
        return v
    raise NoConvergenceError(f"{sys.name}: Legendre inversion residual {norm:.3e} after {max_iter} iterations")


def hamiltonian(sys: LagrangianSystem, t: float, q: Sequence[float], p: Sequence[float],
                v_guess: Optional[Sequence[float]] = None, newton_tol: float = DEFAULT_NEWTON_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Regular-case Hamiltonian H = p.v - L at v = FL^{-1}(t, q, p)."""
    v = legendre_invert(sys, t, q, p, v_guess, newton_tol, max_iter)
    return float(np.dot(np.asarray(p, dtype=float), v)) - sys.evaluate(t, q, v)


@dataclass(frozen=True)
class HamiltonianGradient:
    dt: float
    dq: np.ndarray
    dp: np.ndarray


def hamiltonian_gradient(sys: LagrangianSystem, t: float, q: Sequence[float], p: Sequence[float],
                         v_guess: Optional[Sequence[float]] = None) -> HamiltonianGradient:
    """
    Partial derivatives of H at (t, q, p).

    At v = FL^{-1}(p): dH/dp = v, dH/dq = -dL/dq and dH/dt = -dL/dt.
    """
    v = legendre_invert(sys, t, q, p, v_guess)
    d = lagrangian_derivatives(sys, t, q, v)
    return HamiltonianGradient(dt=-d.dt, dq=-d.dq, dp=v)


def hamilton_vector_field(sys: LagrangianSystem, t: float, q: Sequence[float], p: Sequence[float],
                          v_guess: Optional[Sequence[float]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Right-hand side of the Hamilton equations.

    Returns:
        Tuple of (dq/dt, dp/dt) = (dH/dp, -dH/dq)
    """
    grad = hamiltonian_gradient(sys, t, q, p, v_guess)
    return grad.dp, -grad.dq
