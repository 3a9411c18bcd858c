"""
The unified (Lagrangian-Hamiltonian) description in coordinates.

Points of W0 carry (t, q, v, p); the energy coordinate of the extended space
W is eliminated through the W0 constraint and only reappears in
``ExtendedPoint``. The dynamical vector field X0 = (1, F, G, H) is obtained
from i(X0)Omega0 = 0, i(X0)dt = 1 together with tangency to W1.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from srusk.exceptions import NotOnW1Error
from srusk.lagrangian import (
    DEFAULT_RANK_TOL,
    LagrangianDerivatives,
    LagrangianSystem,
    euler_lagrange_rhs,
    lagrangian_derivatives,
    legendre_restricted,
    normalize_sign,
    rank_revealing_split,
)

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

W1_TOLERANCE = 1e-8


@dataclass(frozen=True)
class UnifiedPoint:
    """A point (t, q, v, p) of W0. Membership in W1 is not assumed."""

    t: float
    q: np.ndarray
    v: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", float(self.t))
        for name in ("q", "v", "p"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(-1))
        if not (self.q.shape == self.v.shape == self.p.shape):
            raise ValueError("q, v and p must have the same length")
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError("unified point has non-finite entries")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.t], self.q, self.v, self.p))

    @classmethod
    def from_vector(cls, z: Sequence[float], n: int) -> "UnifiedPoint":
        z = np.asarray(z, dtype=float)
        if z.shape != (3 * n + 1,):
            raise ValueError(f"expected {3 * n + 1} coordinates, got {z.shape}")
        return cls(z[0], z[1:n + 1], z[n + 1:2 * n + 1], z[2 * n + 1:])

    def with_momenta(self, p: Sequence[float]) -> "UnifiedPoint":
        return replace(self, p=np.asarray(p, dtype=float))


@dataclass(frozen=True)
class ExtendedPoint:
    """A point (t, q, v, p_energy, p) of the extended space W."""

    t: float
    q: np.ndarray
    v: np.ndarray
    p_energy: float
    p: np.ndarray


def point_on_w1(sys: LagrangianSystem, t: float, q: Sequence[float], v: Sequence[float]) -> UnifiedPoint:
    """The point of W1 over (t, q, v): momenta from the Legendre map."""
    return UnifiedPoint(t, q, v, legendre_restricted(sys, t, q, v))


def embed(sys: LagrangianSystem, pt: UnifiedPoint) -> ExtendedPoint:
    """Embed W0 into W by p_energy = L - p.v."""
    p_energy = sys.evaluate(pt.t, pt.q, pt.v) - float(np.dot(pt.p, pt.v))
    return ExtendedPoint(pt.t, pt.q.copy(), pt.v.copy(), p_energy, pt.p.copy())


def restrict(ext: ExtendedPoint) -> UnifiedPoint:
    """Drop the energy coordinate."""
    return UnifiedPoint(ext.t, ext.q, ext.v, ext.p)


def coupling(pt: ExtendedPoint) -> float:
    """Coupling function C = p_energy + p.v."""
    return float(pt.p_energy + np.dot(pt.p, pt.v))


def w0_residual(sys: LagrangianSystem, pt: ExtendedPoint) -> float:
    """C - L; zero exactly on W0."""
    return coupling(pt) - sys.evaluate(pt.t, pt.q, pt.v)


def theta0(sys: LagrangianSystem, pt: UnifiedPoint) -> Tuple[float, np.ndarray]:
    """
    Coefficients of Theta0 = (L - p.v) dt + p dq.

    Returns:
        Tuple of (dt coefficient, dq coefficients)
    """
    return sys.evaluate(pt.t, pt.q, pt.v) - float(np.dot(pt.p, pt.v)), pt.p.copy()


def energy_gradient(sys: LagrangianSystem, pt: UnifiedPoint) -> np.ndarray:
    """Gradient of E = p.v - L in the coordinates (t, q, v, p)."""
    d = lagrangian_derivatives(sys, pt.t, pt.q, pt.v)
    return np.concatenate(([-d.dt], -d.dq, pt.p - d.dv, pt.v))


def omega0_matrix(sys: LagrangianSystem, pt: UnifiedPoint) -> np.ndarray:
    """
    Matrix M_ab = Omega0(d_a, d_b) of Omega0 = dE ^ dt - dp_i ^ dq^i.

    Coordinates are ordered (t, q^1..q^n, v^1..v^n, p_1..p_n). M is
    antisymmetric exactly.
    """
    n = pt.n
    m = 3 * n + 1
    d_energy = energy_gradient(sys, pt)
    matrix = np.zeros((m, m))
    matrix[1:, 0] = d_energy[1:]
    matrix[0, 1:] = -d_energy[1:]
    for i in range(n):
        matrix[2 * n + 1 + i, 1 + i] = -1.0
        matrix[1 + i, 2 * n + 1 + i] = 1.0
    return matrix


def contract_omega0(matrix: np.ndarray, vector: np.ndarray) -> np.ndarray:
    """Covector i(X)Omega0 with components X^a M_ab."""
    return np.asarray(vector, dtype=float) @ matrix


def primary_constraints(sys: LagrangianSystem, pt: UnifiedPoint) -> np.ndarray:
    """phi_i = p_i - dL/dv^i; the point lies on W1 iff all vanish."""
    return pt.p - legendre_restricted(sys, pt.t, pt.q, pt.v)


@dataclass(frozen=True)
class VectorFieldSolution:
    """
    Components of X0 = d/dt + F d/dq + G d/dv + H d/dp at a point.

    G is only determined up to ``G_kernel``: every
    ``G_particular + sum_j lam_j G_kernel[j]`` solves the tangency system
    W G = b.
    """

    F: np.ndarray
    G_particular: np.ndarray
    G_kernel: List[np.ndarray]
    H: np.ndarray
    consistency_defect: float
    W: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    derivatives: Optional[LagrangianDerivatives] = field(default=None, repr=False)

    @property
    def kernel_dimension(self) -> int:
        return len(self.G_kernel)

    @property
    def kernel_matrix(self) -> np.ndarray:
        """Kernel directions as columns (n x k)."""
        if not self.G_kernel:
            return np.zeros((self.F.shape[0], 0))
        return np.column_stack(self.G_kernel)

    def G(self, lam: Optional[Sequence[float]] = None) -> np.ndarray:
        if lam is None or len(lam) == 0:
            return self.G_particular.copy()
        return self.G_particular + self.kernel_matrix @ np.asarray(lam, dtype=float)


def solve_vector_field(sys: LagrangianSystem, pt: UnifiedPoint, rank_tol: float = DEFAULT_RANK_TOL,
                       w1_tol: Optional[float] = W1_TOLERANCE) -> VectorFieldSolution:
    """
    Solve i(X0)Omega0 = 0, i(X0)dt = 1 and tangency to W1 at ``pt``.

    F = v (holonomy), H = dL/dq, and G solves W G = b with
    b_j = dL/dq^j - d2L/dt dv^j - (d2L/dq^i dv^j) v^i, W the velocity Hessian.
    The minimum-norm solution is returned together with a basis of ker W.

    Args:
        sys: Lagrangian system
        pt: Point of W1
        rank_tol: Relative singular-value threshold for ker W
        w1_tol: Allowed primary-constraint violation (None skips the check)

    Returns:
        VectorFieldSolution at the point
    """
    d = lagrangian_derivatives(sys, pt.t, pt.q, pt.v)
    if w1_tol is not None:
        violation = float(np.max(np.abs(pt.p - d.dv)))
        if violation > w1_tol:
            raise NotOnW1Error(f"{sys.name}: primary constraints violated by {violation:.3e}")

    b = euler_lagrange_rhs(d, pt.v)
    s, rank, u, vt = rank_revealing_split(d.vv, rank_tol)
    coefficients = (u[:, :rank].T @ b) / s[:rank]
    g_particular = vt[:rank].T @ coefficients
    kernel = [normalize_sign(vt[i]) for i in range(rank, sys.n)]
    defect = float(np.linalg.norm(d.vv @ g_particular - b))

    return VectorFieldSolution(
        F=pt.v.copy(),
        G_particular=g_particular,
        G_kernel=kernel,
        H=d.dq,
        consistency_defect=defect,
        W=d.vv,
        b=b,
        derivatives=d,
    )


def vector_field_vector(pt: UnifiedPoint, solution: VectorFieldSolution,
                        lam: Optional[Sequence[float]] = None) -> np.ndarray:
    """All 3n+1 components (1, F, G, H) of X0 for a choice of free coefficients."""
    return np.concatenate(([1.0], solution.F, solution.G(lam), solution.H))


def lagrangian_vector_field(pt: UnifiedPoint, solution: VectorFieldSolution,
                            lam: Optional[Sequence[float]] = None) -> np.ndarray:
    """Projection of X0 to (t, q, v): the holonomic Lagrangian vector field."""
    return np.concatenate(([1.0], solution.F, solution.G(lam)))


def energy_balance_residual(sys: LagrangianSystem, pt: UnifiedPoint, solution: VectorFieldSolution,
                            lam: Optional[Sequence[float]] = None) -> float:
    """
    dt-coefficient equation -F.dL/dq + G.(p - dL/dv) + H.v.

    It holds identically on W1 once F = v and H = dL/dq.
    """
    d = lagrangian_derivatives(sys, pt.t, pt.q, pt.v)
    g = solution.G(lam)
    return float(-solution.F @ d.dq + g @ (pt.p - d.dv) + solution.H @ pt.v)
