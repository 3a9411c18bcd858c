"""
Fixed-step explicit Runge-Kutta integration of X0 on the final constraint set.

At every stage the vector field is re-solved: F = v and H = dL/dq directly,
G from the velocity Hessian with its free coefficients fixed by the chain.
After each step the state can be pulled back onto the chain by a Newton
correction of (v, p); positions and time are only corrected at the start.
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from srusk.constraints import (
    ConstraintChain,
    LambdaRule,
    ProvenanceKind,
    TerminationKind,
    higher_tangency,
    project_to_zero_set,
    resolve_lambda,
)
from srusk.exceptions import (
    InconsistentSystemError,
    NoConvergenceError,
    ProjectionFailedError,
    VectorFieldUndeterminedError,
)
from srusk.lagrangian import LagrangianSystem
from srusk.unified import UnifiedPoint, solve_vector_field, vector_field_vector

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


class Scheme(str, enum.Enum):
    RK4 = "rk4"
    EULER = "euler"


@dataclass(frozen=True)
class ButcherTableau:
    a: Tuple[Tuple[float, ...], ...]
    b: Tuple[float, ...]
    c: Tuple[float, ...]

    @property
    def stages(self) -> int:
        return len(self.b)


TABLEAUS: Dict[Scheme, ButcherTableau] = {
    Scheme.EULER: ButcherTableau(a=((0.0,),), b=(1.0,), c=(0.0,)),
    Scheme.RK4: ButcherTableau(
        a=(
            (0.0, 0.0, 0.0, 0.0),
            (0.5, 0.0, 0.0, 0.0),
            (0.0, 0.5, 0.0, 0.0),
            (0.0, 0.0, 1.0, 0.0),
        ),
        b=(1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0),
        c=(0.0, 0.5, 0.5, 1.0),
    ),
}


@dataclass(frozen=True)
class NewtonProjection:
    tol: float = 1e-10
    max_iter: int = 20

    def __post_init__(self) -> None:
        if self.tol <= 0:
            raise ValueError(f"projection tolerance must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"projection max_iter must be at least 1, got {self.max_iter}")


@dataclass(frozen=True)
class IntegratorOptions:
    """
    Fixed-step integration settings.

    Args:
        step: Step size
        t_end: Final time
        scheme: Runge-Kutta scheme
        projection: Post-step Newton projection, or None for no projection
    """

    step: float
    t_end: float
    scheme: Scheme = Scheme.RK4
    projection: Optional[NewtonProjection] = field(default_factory=NewtonProjection)

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        object.__setattr__(self, "scheme", Scheme(self.scheme))


@dataclass(frozen=True)
class Trajectory:
    """Points at uniform steps with per-point diagnostics."""

    system_name: str
    points: List[UnifiedPoint]
    constraint_residual: np.ndarray
    el_residual: np.ndarray
    energy: np.ndarray
    projection: str = "off"
    initial_q_correction: float = 0.0

    @property
    def n(self) -> int:
        return self.points[0].n

    @property
    def t(self) -> np.ndarray:
        return np.array([pt.t for pt in self.points])

    @property
    def q(self) -> np.ndarray:
        return np.array([pt.q for pt in self.points])

    @property
    def v(self) -> np.ndarray:
        return np.array([pt.v for pt in self.points])

    @property
    def p(self) -> np.ndarray:
        return np.array([pt.p for pt in self.points])

    @property
    def max_constraint_residual(self) -> float:
        return float(np.max(self.constraint_residual))

    @property
    def max_el_residual(self) -> float:
        return float(np.max(self.el_residual))

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))

    def to_frame(self) -> pd.DataFrame:
        """One row per stored point: t, q*, v*, p*, constraint_residual, el_residual, energy."""
        n = self.n
        data = {"t": self.t}
        for name, block in (("q", self.q), ("v", self.v), ("p", self.p)):
            for i in range(n):
                data[f"{name}{i}"] = block[:, i]
        data["constraint_residual"] = self.constraint_residual
        data["el_residual"] = self.el_residual
        data["energy"] = self.energy
        return pd.DataFrame(data)


def project_onto_chain(sys: LagrangianSystem, chain: ConstraintChain, pt: UnifiedPoint, tol: float,
                       max_iter: int) -> UnifiedPoint:
    """
    Newton least-norm correction of (v, p) onto the chain's zero set.

    Args:
        sys: Lagrangian system
        chain: Constraint chain
        pt: Point to correct; t and q are kept
        tol: Required max-norm of the chain constraints
        max_iter: Newton iteration cap

    Returns:
        The corrected point
    """
    return project_to_zero_set(sys, chain.constraints, pt, tol, max_iter, coordinates="vp")


@dataclass(frozen=True)
class StageEvaluation:
    """X0 at one state together with the diagnostics recorded for it."""

    rate: np.ndarray
    el_residual: float
    constraint_residual: float
    energy: float


class Integrator:
    """
    Integrates the unified vector field for one system and chain.

    Args:
        sys: Lagrangian system
        chain: Terminated constraint chain
        options: Step, end time, scheme and projection
        lambda_rule: Prescription for coefficients the chain leaves free
        debug: Enable debug logging
    """

    def __init__(self, sys: LagrangianSystem, chain: ConstraintChain, options: IntegratorOptions,
                 lambda_rule: Optional[LambdaRule] = None, debug: bool = False):
        termination = chain.termination
        if termination is None:
            raise VectorFieldUndeterminedError(f"{sys.name}: constraint chain has not terminated")
        if termination.kind == TerminationKind.INCONSISTENT:
            raise InconsistentSystemError(f"{sys.name}: no final constraint set ({termination.detail})")
        if termination.kind == TerminationKind.MAX_LEVELS_REACHED:
            raise VectorFieldUndeterminedError(
                f"{sys.name}: constraint chain stopped at the level cap; the final constraint set is unknown"
            )
        if termination.kind == TerminationKind.GAUGE_FREEDOM and lambda_rule is None:
            raise VectorFieldUndeterminedError(
                f"{sys.name}: {termination.gauge_dimension} free coefficient(s) remain and no lambda rule was given"
            )
        self.sys = sys
        self.chain = chain
        self.options = options
        self.lambda_rule = lambda_rule
        self.tableau = TABLEAUS[options.scheme]
        self.primary_indices = [c.provenance.index for c in chain.constraints
                                if c.provenance.kind == ProvenanceKind.PRIMARY]

        # Set logging level based on debug flag
        if debug:
            logger.setLevel(logging.DEBUG)

        logger.debug(f"Integrator initialized for {sys.name} with {options.scheme.value}, step {options.step}")

    def evaluate(self, z: np.ndarray) -> StageEvaluation:
        """
        X0 at the state vector z with resolved free coefficients.

        One second-order sweep of L and one pass per higher-level constraint
        give the rate and every recorded diagnostic.
        """
        pt = UnifiedPoint.from_vector(z, self.sys.n)
        solution = solve_vector_field(self.sys, pt, self.chain.rank_tol, w1_tol=None)
        tangency = higher_tangency(self.sys, self.chain, pt, solution)
        lam = resolve_lambda(self.sys, self.chain, pt, solution, self.lambda_rule, tangency=tangency)
        d = solution.derivatives
        primary = np.abs(pt.p - d.dv)[self.primary_indices]
        constraint_residual = max(float(np.max(primary)) if primary.size else 0.0, tangency.max_residual)
        return StageEvaluation(
            rate=vector_field_vector(pt, solution, lam),
            el_residual=float(np.linalg.norm(solution.W @ solution.G(lam) - solution.b)),
            constraint_residual=constraint_residual,
            energy=float(pt.p @ pt.v) - float(d.value),
        )

    def step(self, z: np.ndarray, dt: float, rate: Optional[np.ndarray] = None) -> np.ndarray:
        """
        One explicit Runge-Kutta step from z.

        Args:
            z: State vector
            dt: Step size
            rate: X0 at z when already known; it is the first stage

        Returns:
            The state after the step
        """
        k: List[np.ndarray] = []
        for i in range(self.tableau.stages):
            if i == 0 and rate is not None:
                k.append(rate)
                continue
            stage = z.copy()
            for j in range(i):
                if self.tableau.a[i][j] != 0.0:
                    stage += dt * self.tableau.a[i][j] * k[j]
            k.append(self.evaluate(stage).rate)
        out = z.copy()
        for i in range(self.tableau.stages):
            out += dt * self.tableau.b[i] * k[i]
        return out

    def _project(self, pt: UnifiedPoint, coordinates: str) -> UnifiedPoint:
        projection = self.options.projection or NewtonProjection()
        try:
            return project_to_zero_set(self.sys, self.chain.constraints, pt, projection.tol,
                                       projection.max_iter, coordinates=coordinates)
        except NoConvergenceError as e:
            raise ProjectionFailedError(f"projection failed at t={pt.t:.6g}: {e}") from e

    def _record(self, pt: UnifiedPoint, evaluation: StageEvaluation, store: Dict[str, list]) -> None:
        store["points"].append(pt)
        store["constraint_residual"].append(evaluation.constraint_residual)
        store["el_residual"].append(evaluation.el_residual)
        store["energy"].append(evaluation.energy)

    def run(self, pt0: UnifiedPoint) -> Trajectory:
        """
        Integrate from pt0 to the configured end time.

        The initial point is first projected onto the chain in (q, v, p); a
        position correction is logged as a warning and kept on the trajectory.
        X0 at every stored point serves both as its diagnostics and as the
        first stage of the next step; after a step the state is projected only
        when its residual exceeds the projection tolerance.

        Args:
            pt0: Initial point

        Returns:
            Trajectory with round((t_end - t0) / step) steps
        """
        opts = self.options
        steps = int(round((opts.t_end - pt0.t) / opts.step))
        if steps < 0:
            raise ValueError(f"t_end {opts.t_end} precedes the initial time {pt0.t}")

        pt = self._project(pt0, "qvp")
        q_correction = float(np.linalg.norm(pt.q - pt0.q))
        if q_correction > 0.0:
            logger.warning(f"{self.sys.name}: initial projection moved q by {q_correction:.3e}")
        t0 = pt.t
        store: Dict[str, list] = {"points": [], "constraint_residual": [], "el_residual": [], "energy": []}
        current = self.evaluate(pt.as_vector())
        self._record(pt, current, store)
        report_every = max(1, steps // 10)

        for index in range(1, steps + 1):
            z = self.step(pt.as_vector(), opts.step, rate=current.rate)
            z[0] = t0 + index * opts.step
            pt = UnifiedPoint.from_vector(z, self.sys.n)
            current = self.evaluate(z)
            if opts.projection is not None and current.constraint_residual > opts.projection.tol:
                pt = self._project(pt, "vp")
                current = self.evaluate(pt.as_vector())
            self._record(pt, current, store)
            if index % report_every == 0:
                logger.debug(f"{self.sys.name}: step {index}/{steps}, t={pt.t:.6g}, "
                             f"residual {current.constraint_residual:.2e}")

        trajectory = Trajectory(
            system_name=self.sys.name,
            points=store["points"],
            constraint_residual=np.array(store["constraint_residual"]),
            el_residual=np.array(store["el_residual"]),
            energy=np.array(store["energy"]),
            projection="newton" if opts.projection is not None else "off",
            initial_q_correction=q_correction,
        )
        logger.info(f"{self.sys.name}: integrated {steps} steps to t={pt.t:.6g}, "
                    f"max constraint residual {trajectory.max_constraint_residual:.2e}")
        return trajectory


def integrate(sys: LagrangianSystem, chain: ConstraintChain, pt0: UnifiedPoint, opts: IntegratorOptions,
              lambda_rule: Optional[LambdaRule] = None) -> Trajectory:
    """Integrate X0 from pt0; see ``Integrator.run``."""
    return Integrator(sys, chain, opts, lambda_rule).run(pt0)


def holonomy_defects(trajectory: Trajectory) -> np.ndarray:
    """|dq/dt - v| at step midpoints, from first differences and averaged velocities."""
    t = trajectory.t
    q = trajectory.q
    v = trajectory.v
    if len(t) < 2:
        return np.zeros(0)
    slopes = np.diff(q, axis=0) / np.diff(t)[:, None]
    midpoints = 0.5 * (v[1:] + v[:-1])
    return np.max(np.abs(slopes - midpoints), axis=1)

