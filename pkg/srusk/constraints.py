"""
The constraint algorithm on the unified space.

Starting from the primary constraints p_i - dL/dv^i, the algorithm requires
X0 to be tangent to the current constraint set. Writing the tangency
conditions of every active constraint phi as a + C G = 0, with
a = dphi(1, v, 0, H) and C = dphi/dv, the left null directions u of C give
candidate constraints u.a, independent of G; what remains of the
conditions fixes the free coefficients lam along ker W.
"""

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from srusk.autodiff import (
    SmoothScalarField,
    directional_derivative,
    mixed_derivatives,
    value_and_directional_derivatives,
    value_and_gradient,
)
from srusk.exceptions import (
    ConstantRankError,
    InconsistentSystemError,
    NoConvergenceError,
    NotOnConstraintSetError,
)
from srusk.lagrangian import (
    DEFAULT_RANK_TOL,
    LagrangianSystem,
    lagrangian_derivatives,
    legendre_restricted,
    normalize_sign,
    null_space,
)
from srusk.unified import (
    UnifiedPoint,
    VectorFieldSolution,
    point_on_w1,
    primary_constraints,
    solve_vector_field,
)

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

ZERO_SET_TOL = 1e-8
DRIFT_TOL = 1e-6
INDEPENDENCE_TOL = 1e-6
PRUNE_TOL = 1e-10
DEFAULT_MAX_LEVELS = 8
DEFAULT_SAMPLE_COUNT = 32
DEFAULT_SAMPLE_BOX = 0.5
SAMPLE_PROJECTION_TOL = 1e-12
SAMPLE_PROJECTION_MAX_ITER = 50

LambdaRule = Callable[[UnifiedPoint, VectorFieldSolution], Sequence[float]]


class ProvenanceKind(str, enum.Enum):
    PRIMARY = "Primary"
    TANGENCY = "Tangency"
    ANALYTIC = "Analytic"


@dataclass(frozen=True)
class Provenance:
    kind: ProvenanceKind
    index: Optional[int] = None
    parent_ids: Tuple[str, ...] = ()
    null_direction: Tuple[float, ...] = ()
    label: str = ""

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind.value}
        if self.index is not None:
            out["index"] = self.index
        if self.parent_ids:
            out["parent_ids"] = list(self.parent_ids)
            out["null_direction"] = list(self.null_direction)
        if self.label:
            out["label"] = self.label
        return out


@dataclass(frozen=True)
class ConstraintFunction:
    """
    A scalar constraint on (t, q, v, p).

    Args:
        id: Unique identifier within a chain
        level: 1 for primary constraints, k+1 for those found at step k
        evaluator: Field of arity 3n+1
        provenance: How the constraint was obtained
        momentum_free: True when the evaluator does not depend on p
    """

    id: str
    level: int
    evaluator: SmoothScalarField
    provenance: Provenance
    momentum_free: bool = False

    def __call__(self, z: Sequence[Any]) -> Any:
        return self.evaluator(z)

    def value(self, pt: UnifiedPoint) -> float:
        return float(self.evaluator(pt.as_vector().tolist()))


def primary_constraint(sys: LagrangianSystem, index: int) -> ConstraintFunction:
    """phi_index = p_index - dL/dv^index."""
    n = sys.n
    direction = np.zeros(2 * n + 1)
    direction[n + 1 + index] = 1.0

    def evaluate(z: Sequence[Any]) -> Any:
        return z[2 * n + 1 + index] - directional_derivative(sys.L, z[:2 * n + 1], direction)

    evaluator = SmoothScalarField(3 * n + 1, evaluate, f"phi1_{index}")
    return ConstraintFunction(f"L1.{index}", 1, evaluator, Provenance(ProvenanceKind.PRIMARY, index=index))


def tangency_constraint(sys: LagrangianSystem, parents: Sequence[ConstraintFunction], weights: Sequence[float],
                        level: int, constraint_id: str) -> ConstraintFunction:
    """
    The constraint sum_j u_j dphi_j(1, v, 0, H) for frozen weights u.

    Primary parents contribute u.b with b = dL/dq - d2L/dt dv - (d2L/dq dv) v,
    which involves only (t, q, v); the result is therefore momentum-free
    whenever the non-primary parents are.

    Args:
        sys: Lagrangian system
        parents: Active constraints, in chain order
        weights: Null direction, one weight per parent
        level: Level of the new constraint
        constraint_id: Identifier of the new constraint

    Returns:
        The new constraint function
    """
    n = sys.n
    weights = np.asarray(weights, dtype=float)
    primary_weights = np.zeros(n)
    others: List[Tuple[float, ConstraintFunction]] = []
    for parent, weight in zip(parents, weights):
        if weight == 0.0:
            continue
        if parent.provenance.kind == ProvenanceKind.PRIMARY:
            primary_weights[parent.provenance.index] += weight
        else:
            others.append((float(weight), parent))

    q_direction = np.concatenate(([0.0], primary_weights, np.zeros(n)))
    v_direction = np.concatenate(([0.0], np.zeros(n), primary_weights))
    needs_forces = any(not parent.momentum_free for _, parent in others)

    def combined(y: Sequence[Any]) -> Any:
        total = 0.0
        for weight, parent in others:
            total = total + weight * parent.evaluator(y)
        return total

    combined_field = SmoothScalarField(3 * n + 1, combined, f"{constraint_id}.parents")

    def evaluate(z: Sequence[Any]) -> Any:
        x = z[:2 * n + 1]
        velocities = list(z[n + 1:2 * n + 1])
        total = 0.0
        if primary_weights.any():
            flow = [1.0, *velocities, *([0.0] * n)]
            # [0, 1] is u.dL/dq, [1, 2] the flow derivative of u.dL/dv.
            coefficients = mixed_derivatives(sys.L, x, [[flow], [q_direction, v_direction]])
            total = coefficients[0, 1] - coefficients[1, 2]
            if isinstance(total, np.floating):
                total = float(total)
        if others:
            if needs_forces:
                _, forces = value_and_gradient(sys.L, x, range(1, n + 1))
                forces = list(forces)
            else:
                forces = [0.0] * n
            flow = [1.0, *velocities, *([0.0] * n), *forces]
            total = total + directional_derivative(combined_field, z, flow)
        return total

    evaluator = SmoothScalarField(3 * n + 1, evaluate, constraint_id)
    provenance = Provenance(
        ProvenanceKind.TANGENCY,
        parent_ids=tuple(parent.id for parent in parents),
        null_direction=tuple(float(w) for w in weights),
    )
    return ConstraintFunction(constraint_id, level, evaluator, provenance, momentum_free=not needs_forces)


def constraint_values(sys: LagrangianSystem, constraints: Sequence[ConstraintFunction],
                      pt: UnifiedPoint) -> np.ndarray:
    """Values of every constraint at a real point; primaries in one sweep."""
    values = np.zeros(len(constraints))
    primary = None
    z = None
    for row, constraint in enumerate(constraints):
        if constraint.provenance.kind == ProvenanceKind.PRIMARY:
            if primary is None:
                primary = primary_constraints(sys, pt)
            values[row] = primary[constraint.provenance.index]
        else:
            if z is None:
                z = pt.as_vector().tolist()
            values[row] = float(constraint.evaluator(z))
    return values


def constraint_jacobian(sys: LagrangianSystem, constraints: Sequence[ConstraintFunction], pt: UnifiedPoint,
                        coordinates: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Values and partial derivatives of the constraints with respect to selected
    coordinates of (t, q, v, p).

    Returns:
        Tuple of (values, Jacobian of shape (len(constraints), len(coordinates)))
    """
    n = sys.n
    coordinates = list(coordinates)
    values = np.zeros(len(constraints))
    jacobian = np.zeros((len(constraints), len(coordinates)))
    full_primary = None
    primary_values = None
    z = pt.as_vector().tolist()
    for row, constraint in enumerate(constraints):
        if constraint.provenance.kind == ProvenanceKind.PRIMARY:
            if full_primary is None:
                d = lagrangian_derivatives(sys, pt.t, pt.q, pt.v)
                full_primary = np.hstack((-d.tv[:, None], -d.qv.T, -d.vv, np.eye(n)))
                primary_values = pt.p - d.dv
            i = constraint.provenance.index
            values[row] = primary_values[i]
            jacobian[row] = full_primary[i, coordinates]
        else:
            selected = coordinates
            if constraint.momentum_free:
                selected = [c for c in coordinates if c <= 2 * n]
            value, grad = value_and_gradient(constraint.evaluator, z, selected)
            values[row] = float(value)
            for column, c in enumerate(selected):
                jacobian[row, coordinates.index(c)] = float(grad[column])
    return values, jacobian


def coordinate_indices(n: int, coordinates: str) -> List[int]:
    """Indices of the corrected coordinates: "vp" or "qvp"."""
    if coordinates == "vp":
        return list(range(n + 1, 3 * n + 1))
    if coordinates == "qvp":
        return list(range(1, 3 * n + 1))
    raise ValueError(f"unknown coordinate selection: {coordinates}")


def project_to_zero_set(sys: LagrangianSystem, constraints: Sequence[ConstraintFunction], pt: UnifiedPoint,
                        tol: float, max_iter: int, coordinates: str = "vp") -> UnifiedPoint:
    """
    Newton least-norm projection of ``pt`` onto the common zero set.

    Args:
        sys: Lagrangian system
        constraints: Constraints to satisfy
        pt: Starting point
        tol: Required max-norm of the constraint values
        max_iter: Newton iteration cap
        coordinates: "vp" corrects velocities and momenta, "qvp" also positions

    Returns:
        The projected point (``pt`` itself when already within tolerance)
    """
    n = sys.n
    indices = coordinate_indices(n, coordinates)
    values = constraint_values(sys, constraints, pt)
    residual = float(np.max(np.abs(values))) if values.size else 0.0
    if residual <= tol:
        return pt

    z = pt.as_vector()
    current = pt
    for iteration in range(max_iter):
        values, jacobian = constraint_jacobian(sys, constraints, current, indices)
        step, *_ = np.linalg.lstsq(jacobian, -values, rcond=None)
        z[indices] += step
        current = UnifiedPoint.from_vector(z, n)
        values = constraint_values(sys, constraints, current)
        residual = float(np.max(np.abs(values)))
        if residual <= tol:
            logger.debug(f"Projection converged in {iteration + 1} iterations (residual {residual:.2e})")
            return current

    raise NoConvergenceError(f"{sys.name}: projection residual {residual:.3e} after {max_iter} iterations")


def flow_rows(sys: LagrangianSystem, constraints: Sequence[ConstraintFunction], pt: UnifiedPoint,
              solution: VectorFieldSolution) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tangency coefficients of each constraint: dphi(X0) = a + C G.

    Returns:
        Tuple of (a, C) with a = dphi(1, v, 0, H) and C = dphi/dv
    """
    n = sys.n
    m = len(constraints)
    a = np.zeros(m)
    c = np.zeros((m, n))
    z = pt.as_vector().tolist()
    drift = np.concatenate(([1.0], pt.v, np.zeros(n), solution.H))
    directions = [drift]
    for j in range(n):
        e = np.zeros(3 * n + 1)
        e[n + 1 + j] = 1.0
        directions.append(e)

    for row, constraint in enumerate(constraints):
        if constraint.provenance.kind == ProvenanceKind.PRIMARY:
            i = constraint.provenance.index
            a[row] = solution.b[i]
            c[row] = -solution.W[i]
        else:
            _, derivatives = value_and_directional_derivatives(constraint.evaluator, z, directions)
            a[row] = float(derivatives[0])
            c[row] = np.asarray(derivatives[1:], dtype=float)
    return a, c


def _check_on_zero_set(sys: LagrangianSystem, constraints: Sequence[ConstraintFunction], pt: UnifiedPoint,
                       tol: float = ZERO_SET_TOL) -> None:
    values = constraint_values(sys, constraints, pt)
    residual = float(np.max(np.abs(values))) if values.size else 0.0
    if residual > tol:
        raise NotOnConstraintSetError(f"{sys.name}: constraint residual {residual:.3e} exceeds {tol:.1e}")


def _matrix_rank(matrix: np.ndarray, rank_tol: float, scale: float) -> int:
    if matrix.size == 0:
        return 0
    s = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(s > rank_tol * max(scale, 1.0)))


@dataclass(frozen=True)
class _SampleAnalysis:
    a: np.ndarray
    c: np.ndarray
    A: np.ndarray
    B: np.ndarray
    left_null: np.ndarray
    kernel_dimension: int
    lambda_rank: int


def _analyse_sample(sys: LagrangianSystem, constraints: Sequence[ConstraintFunction], pt: UnifiedPoint,
                    rank_tol: float) -> _SampleAnalysis:
    solution = solve_vector_field(sys, pt, rank_tol)
    a, c = flow_rows(sys, constraints, pt, solution)
    big_a = a + c @ solution.G_particular
    big_b = c @ solution.kernel_matrix
    scale = float(np.linalg.norm(c, 2)) if c.size else 1.0
    left = null_space(c.T, rank_tol) if c.any() else [row for row in np.eye(len(constraints))]
    left_null = np.column_stack(left) if left else np.zeros((len(constraints), 0))
    return _SampleAnalysis(
        a=a,
        c=c,
        A=big_a,
        B=big_b,
        left_null=left_null,
        kernel_dimension=solution.kernel_dimension,
        lambda_rank=_matrix_rank(big_b, rank_tol, scale),
    )


class TerminationKind(str, enum.Enum):
    ALL_DETERMINED = "AllDetermined"
    GAUGE_FREEDOM = "GaugeFreedom"
    INCONSISTENT = "Inconsistent"
    MAX_LEVELS_REACHED = "MaxLevelsReached"


@dataclass(frozen=True)
class Termination:
    kind: TerminationKind
    gauge_dimension: int = 0
    detail: str = ""


@dataclass(frozen=True)
class ConstraintChain:
    """
    Leveled constraints with the sample points used for every rank decision.

    ``termination`` is None while the chain can still be extended.
    """

    system_name: str
    n: int
    levels: Tuple[Tuple[ConstraintFunction, ...], ...]
    sample_points: Tuple[UnifiedPoint, ...]
    rank_tol: float = DEFAULT_RANK_TOL
    termination: Optional[Termination] = None
    kernel_dimension: int = 0
    determined_directions: int = 0
    diagnostics: Tuple[str, ...] = ()
    kernel_drift: Tuple[float, ...] = field(default=())

    @property
    def constraints(self) -> Tuple[ConstraintFunction, ...]:
        return tuple(c for level in self.levels for c in level)

    @property
    def level_sizes(self) -> List[int]:
        return [len(level) for level in self.levels]

    def values(self, sys: LagrangianSystem, pt: UnifiedPoint) -> np.ndarray:
        return constraint_values(sys, self.constraints, pt)

    def max_residual(self, sys: LagrangianSystem, pt: UnifiedPoint) -> float:
        values = self.values(sys, pt)
        return float(np.max(np.abs(values))) if values.size else 0.0

    def to_report(self, sys: LagrangianSystem) -> Dict[str, Any]:
        """JSON-ready summary: sizes, termination, provenance and residual statistics."""
        residuals = np.array([np.abs(self.values(sys, pt)) for pt in self.sample_points])
        per_level = []
        start = 0
        for index, level in enumerate(self.levels):
            block = residuals[:, start:start + len(level)]
            start += len(level)
            per_level.append({
                "level": index + 1,
                "size": len(level),
                "residual_max": float(block.max()) if block.size else 0.0,
                "residual_mean": float(block.mean()) if block.size else 0.0,
                "kernel_drift": self.kernel_drift[index] if index < len(self.kernel_drift) else 0.0,
            })
        termination = self.termination
        return {
            "model": self.system_name,
            "n": self.n,
            "level_sizes": self.level_sizes,
            "termination": termination.kind.value if termination else None,
            "gauge_dimension": termination.gauge_dimension if termination else 0,
            "termination_detail": termination.detail if termination else "",
            "kernel_dimension": self.kernel_dimension,
            "determined_directions": self.determined_directions,
            "rank_tol": self.rank_tol,
            "sample_count": len(self.sample_points),
            "levels": per_level,
            "constraints": [
                {"id": c.id, "level": c.level, "provenance": c.provenance.to_dict()}
                for c in self.constraints
            ],
            "diagnostics": list(self.diagnostics),
        }


def tangency_system(sys: LagrangianSystem, chain: ConstraintChain, pt: UnifiedPoint,
                    rank_tol: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tangency conditions of every chain constraint as an affine map of lam.

    dphi(X0(lam)) = A + B lam, where A uses G_particular and the columns of B
    the kernel directions of W.

    Returns:
        Tuple of (A, B) with shapes (m,) and (m, k)
    """
    constraints = chain.constraints
    _check_on_zero_set(sys, constraints, pt)
    analysis = _analyse_sample(sys, constraints, pt, chain.rank_tol if rank_tol is None else rank_tol)
    return analysis.A, analysis.B


@dataclass(frozen=True)
class HigherTangency:
    """
    The constraints of level two and up at one point: their values and their
    tangency conditions dphi(X0(lam)) = A + B lam.
    """

    values: np.ndarray
    A: np.ndarray
    B: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def higher_tangency(sys: LagrangianSystem, chain: ConstraintChain, pt: UnifiedPoint,
                    solution: VectorFieldSolution) -> HigherTangency:
    """
    Values and tangency rows of the higher-level constraints, one pass per constraint.

    Primary rows never involve lam (W annihilates the kernel), so only levels
    two and up are differentiated. Without kernel directions only the values
    are computed.
    """
    n = sys.n
    k = solution.kernel_dimension
    higher = [c for c in chain.constraints if c.level >= 2]
    values = np.zeros(len(higher))
    big_a = np.zeros(len(higher))
    big_b = np.zeros((len(higher), k))
    if not higher:
        return HigherTangency(values, big_a, big_b)

    z = pt.as_vector().tolist()
    if k == 0:
        for row, constraint in enumerate(higher):
            values[row] = float(constraint.evaluator(z))
        return HigherTangency(values, big_a, big_b)

    drift = np.concatenate(([1.0], solution.F, solution.G_particular, solution.H))
    directions = [drift]
    for direction in solution.G_kernel:
        e = np.zeros(3 * n + 1)
        e[n + 1:2 * n + 1] = direction
        directions.append(e)
    for row, constraint in enumerate(higher):
        value, derivatives = value_and_directional_derivatives(constraint.evaluator, z, directions)
        values[row] = float(value)
        big_a[row] = float(derivatives[0])
        big_b[row] = np.asarray(derivatives[1:], dtype=float)
    return HigherTangency(values, big_a, big_b)


def resolve_lambda(sys: LagrangianSystem, chain: ConstraintChain, pt: UnifiedPoint, solution: VectorFieldSolution,
                   lambda_rule: Optional[LambdaRule] = None,
                   tangency: Optional[HigherTangency] = None) -> np.ndarray:
    """
    Coefficients along ker W fixed by the tangency of the higher-level constraints.

    Directions left free are taken from ``lambda_rule`` projected onto the
    undetermined subspace, or set to zero.

    Args:
        sys: Lagrangian system
        chain: Terminated constraint chain
        pt: Point of the final constraint set
        solution: Vector field solution at ``pt``
        lambda_rule: Prescription for the free directions
        tangency: Rows already computed at ``pt`` by ``higher_tangency``

    Returns:
        lam with one entry per kernel direction
    """
    k = solution.kernel_dimension
    if k == 0:
        return np.zeros(0)
    if tangency is None:
        tangency = higher_tangency(sys, chain, pt, solution)
    big_b = tangency.B
    if big_b.shape[0]:
        lam, *_ = np.linalg.lstsq(big_b, -tangency.A, rcond=chain.rank_tol)
    else:
        lam = np.zeros(k)

    if lambda_rule is not None:
        free = null_space(big_b, chain.rank_tol) if big_b.size else [row for row in np.eye(k)]
        if free:
            basis = np.column_stack(free)
            lam = lam + basis @ (basis.T @ np.asarray(lambda_rule(pt, solution), dtype=float))
    return lam


def draw_sample_points(sys: LagrangianSystem, count: int = DEFAULT_SAMPLE_COUNT, box: float = DEFAULT_SAMPLE_BOX,
                       seed: int = 0) -> List[UnifiedPoint]:
    """Seeded points with t in [0, box], q and v in [-box, box], momenta on W1."""
    rng = np.random.default_rng(seed)
    points = []
    for _ in range(count):
        t = rng.uniform(0.0, box)
        q = rng.uniform(-box, box, sys.n)
        v = rng.uniform(-box, box, sys.n)
        points.append(point_on_w1(sys, t, q, v))
    return points


def _subspace_angle(base: np.ndarray, other: np.ndarray) -> float:
    if base.shape[1] == 0:
        return 0.0
    cosines = np.linalg.svd(base.T @ other, compute_uv=False)
    return float(math.acos(min(1.0, float(np.min(cosines)))))


def _independent(gradient: np.ndarray, existing: List[np.ndarray]) -> bool:
    norm = float(np.linalg.norm(gradient))
    if norm <= 1e-12:
        return False
    if not existing:
        return True
    basis = np.column_stack(existing)
    coefficients, *_ = np.linalg.lstsq(basis, gradient, rcond=None)
    return float(np.linalg.norm(gradient - basis @ coefficients)) / norm > INDEPENDENCE_TOL


def _constraint_gradients(sys: LagrangianSystem, constraints: Sequence[ConstraintFunction],
                          pt: UnifiedPoint) -> List[np.ndarray]:
    _, jacobian = constraint_jacobian(sys, constraints, pt, range(3 * sys.n + 1))
    return [row for row in jacobian]


def _project_samples(sys: LagrangianSystem, constraints: Sequence[ConstraintFunction],
                     points: Sequence[UnifiedPoint]) -> List[UnifiedPoint]:
    projected = []
    for index, pt in enumerate(points):
        try:
            projected.append(project_to_zero_set(sys, constraints, pt, SAMPLE_PROJECTION_TOL,
                                                 SAMPLE_PROJECTION_MAX_ITER, coordinates="qvp"))
        except NoConvergenceError as e:
            logger.warning(f"Dropping sample point {index}: {e}")
    return projected


def extend_chain(sys: LagrangianSystem, chain: ConstraintChain, rank_tol: Optional[float] = None,
                 max_levels: Optional[int] = None) -> ConstraintChain:
    """
    One step of the constraint algorithm.

    Args:
        sys: Lagrangian system
        chain: Chain built so far (its sample points lie on its zero set)
        rank_tol: Relative rank threshold (the chain's when None)
        max_levels: Level cap; reaching it with new constraints pending ends
            the chain with MaxLevelsReached

    Returns:
        The chain with one more level, or the same levels with a termination
    """
    if not chain.levels:
        raise ValueError("chain must contain the primary level")
    rank_tol = chain.rank_tol if rank_tol is None else rank_tol
    constraints = chain.constraints
    points = chain.sample_points
    analyses = [_analyse_sample(sys, constraints, pt, rank_tol) for pt in points]

    dimensions = {analysis.left_null.shape[1] for analysis in analyses}
    if len(dimensions) > 1:
        raise ConstantRankError(
            f"{sys.name}: left null dimension varies across sample points ({sorted(dimensions)}); "
            f"refusing to freeze null directions"
        )

    base = analyses[0].left_null
    diagnostics = list(chain.diagnostics)
    drift = max(_subspace_angle(base, analysis.left_null) for analysis in analyses)
    if drift > DRIFT_TOL:
        message = f"level {len(chain.levels)}: null direction drift {drift:.2e} rad across samples"
        logger.warning(message)
        diagnostics.append(message)

    kernel_dimension = max(analysis.kernel_dimension for analysis in analyses)
    lambda_rank = min(analysis.lambda_rank for analysis in analyses)
    chain = replace(
        chain,
        diagnostics=tuple(diagnostics),
        kernel_drift=chain.kernel_drift + (drift,),
        kernel_dimension=kernel_dimension,
        determined_directions=lambda_rank,
    )

    candidates: List[np.ndarray] = []
    if base.shape[1] > 0:
        values = np.array([base.T @ analysis.a for analysis in analyses])
        scale = max(1.0, max(float(np.max(np.abs(analysis.a))) for analysis in analyses))
        threshold = rank_tol * scale
        if float(np.max(np.abs(values))) > threshold:
            _, s, vt = np.linalg.svd(values, full_matrices=False)
            for sv, w in zip(s, vt):
                if sv <= threshold:
                    break
                u = base @ w
                u[np.abs(u) <= PRUNE_TOL * np.max(np.abs(u))] = 0.0
                candidates.append(normalize_sign(u))

    level = len(chain.levels) + 1
    new_constraints: List[ConstraintFunction] = []
    if candidates:
        existing = _constraint_gradients(sys, constraints, points[0])
        for index, u in enumerate(candidates):
            candidate = tangency_constraint(sys, constraints, u, level, f"L{level}.{index}")
            _, gradient = value_and_gradient(candidate.evaluator, points[0].as_vector().tolist())
            gradient = np.asarray(gradient, dtype=float)
            if not _independent(gradient, existing):
                residual = max(abs(candidate.value(pt)) for pt in points)
                if residual > threshold:
                    raise InconsistentSystemError(
                        f"{sys.name}: level {level} constraint is constant ({residual:.3e}) on the feasible set"
                    )
                logger.debug(f"Rejected dependent candidate {candidate.id}")
                continue
            existing.append(gradient)
            new_constraints.append(candidate)

    if not new_constraints:
        free = max(analysis.kernel_dimension - analysis.lambda_rank for analysis in analyses)
        if free == 0:
            termination = Termination(TerminationKind.ALL_DETERMINED)
        else:
            termination = Termination(TerminationKind.GAUGE_FREEDOM, gauge_dimension=free)
        logger.info(f"{sys.name}: constraint algorithm terminated with {termination.kind.value} "
                    f"after {len(chain.levels)} levels")
        return replace(chain, termination=termination)

    if max_levels is not None and len(chain.levels) >= max_levels:
        logger.info(f"{sys.name}: level cap {max_levels} reached with {len(new_constraints)} new constraints")
        return replace(chain, termination=Termination(
            TerminationKind.MAX_LEVELS_REACHED,
            detail=f"{len(new_constraints)} constraints pending at level {level}",
        ))

    logger.info(f"{sys.name}: level {level} adds {len(new_constraints)} constraint(s)")
    levels = chain.levels + (tuple(new_constraints),)
    projected = _project_samples(sys, [c for lvl in levels for c in lvl], points)
    if not projected:
        raise InconsistentSystemError(f"{sys.name}: level {level} constraints have no zero set in the sampling box")
    return replace(chain, levels=levels, sample_points=tuple(projected))


def initial_chain(sys: LagrangianSystem, sample_points: Sequence[UnifiedPoint],
                  rank_tol: float = DEFAULT_RANK_TOL) -> ConstraintChain:
    """Chain holding the primary level, with sample momenta moved onto W1."""
    if not sample_points:
        raise ValueError("at least one sample point is required")
    primaries = tuple(primary_constraint(sys, i) for i in range(sys.n))
    on_w1 = tuple(pt.with_momenta(legendre_restricted(sys, pt.t, pt.q, pt.v)) for pt in sample_points)
    return ConstraintChain(sys.name, sys.n, (primaries,), on_w1, rank_tol=rank_tol)


class ConstraintAlgorithm:
    """
    Runs the constraint algorithm for one system.

    Args:
        sys: Lagrangian system
        rank_tol: Relative rank threshold for every rank decision
        max_levels: Level cap
        sample_count: Number of sample points drawn when none are given
        sample_box: Half-width of the sampling box
        seed: Seed of the sample-point generator
        debug: Enable debug logging
    """

    def __init__(self, sys: LagrangianSystem, rank_tol: float = DEFAULT_RANK_TOL,
                 max_levels: int = DEFAULT_MAX_LEVELS, sample_count: int = DEFAULT_SAMPLE_COUNT,
                 sample_box: float = DEFAULT_SAMPLE_BOX, seed: int = 0, debug: bool = False):
        if rank_tol <= 0:
            raise ValueError(f"rank_tol must be positive, got {rank_tol}")
        if max_levels < 1:
            raise ValueError(f"max_levels must be at least 1, got {max_levels}")
        self.sys = sys
        self.rank_tol = rank_tol
        self.max_levels = max_levels
        self.sample_count = sample_count
        self.sample_box = sample_box
        self.seed = seed

        # Set logging level based on debug flag
        if debug:
            logger.setLevel(logging.DEBUG)

        logger.debug(f"Constraint algorithm initialized for {sys.name}")

    def sample_points(self) -> List[UnifiedPoint]:
        return draw_sample_points(self.sys, self.sample_count, self.sample_box, self.seed)

    def run(self, sample_points: Optional[Sequence[UnifiedPoint]] = None) -> ConstraintChain:
        """
        Iterate the tangency step until the chain terminates.

        Args:
            sample_points: Points for rank decisions (drawn from the box when None)

        Returns:
            The terminated constraint chain
        """
        points = list(sample_points) if sample_points is not None else self.sample_points()
        chain = initial_chain(self.sys, points, self.rank_tol)
        while chain.termination is None:
            try:
                chain = extend_chain(self.sys, chain, self.rank_tol, self.max_levels)
            except InconsistentSystemError as e:
                logger.warning(str(e))
                chain = replace(chain, termination=Termination(TerminationKind.INCONSISTENT, detail=str(e)))
        logger.debug(f"{self.sys.name}: level sizes {chain.level_sizes}")
        return chain


def run_constraint_algorithm(sys: LagrangianSystem, sample_points: Sequence[UnifiedPoint],
                             max_levels: int = DEFAULT_MAX_LEVELS,
                             rank_tol: float = DEFAULT_RANK_TOL) -> ConstraintChain:
    """Run the constraint algorithm from explicit sample points."""
    return ConstraintAlgorithm(sys, rank_tol=rank_tol, max_levels=max_levels).run(sample_points)
