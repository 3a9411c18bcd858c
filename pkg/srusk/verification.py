"""
Invariant suite run by ``srusk verify``.

Each check evaluates one property of the engine on the configured model at
seeded random points and reports the worst value found against its threshold.
Finite-difference references live here; the engine itself never uses them.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from srusk.autodiff import SmoothScalarField, jet2
from srusk.constraints import (
    ConstraintChain,
    ConstraintFunction,
    TerminationKind,
    draw_sample_points,
    run_constraint_algorithm,
)
from srusk.exceptions import SruskError
from srusk.integrator import IntegratorOptions, integrate
from srusk.lagrangian import (
    DEFAULT_RANK_TOL,
    LagrangianSystem,
    Regularity,
    legendre_invert,
    legendre_restricted,
    poincare_cartan_form,
    regularity,
    velocity_hessian,
)
from srusk.models import (
    WaveModelParams,
    alternating_vector,
    direct_el_oracle,
    wave_reference_constraints,
)
from srusk.unified import (
    UnifiedPoint,
    contract_omega0,
    energy_balance_residual,
    omega0_matrix,
    point_on_w1,
    primary_constraints,
    solve_vector_field,
    theta0,
    vector_field_vector,
)

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def central_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a real function."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[0])
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = step
        out[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return out


def central_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """J[i, j] = d f_j / d x_i by central differences."""
    x = np.asarray(x, dtype=float)
    rows = []
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = step
        rows.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * step))
    return np.array(rows)


def field_fd_error(f: SmoothScalarField, x: Sequence[float], step: float = 1e-5) -> float:
    """
    Largest relative deviation of the AD gradient and Hessian from central differences.

    The Hessian reference differentiates the AD gradient, so each comparison
    carries a single differencing error.
    """
    x = np.asarray(x, dtype=float)
    jet = jet2(f, x.tolist())
    fd_gradient = central_gradient(lambda y: float(f(y.tolist())), x, step)
    fd_hessian = central_jacobian(lambda y: jet2(f, y.tolist()).gradient, x, step)
    gradient_error = np.max(np.abs(fd_gradient - jet.gradient)) / max(1.0, float(np.max(np.abs(jet.gradient))))
    hessian_error = np.max(np.abs(fd_hessian - jet.hessian)) / max(1.0, float(np.max(np.abs(jet.hessian))))
    return float(max(gradient_error, hessian_error))


def reference_agreement(discovered: ConstraintFunction, reference: ConstraintFunction,
                        points: Sequence[UnifiedPoint]) -> float:
    """
    Relative disagreement after scaling ``discovered`` to ``reference`` where it is largest.

    Returns:
        max |s d(z) - r(z)| / max |r(z)| over the points
    """
    d = np.array([discovered.value(pt) for pt in points])
    r = np.array([reference.value(pt) for pt in points])
    base = int(np.argmax(np.abs(d)))
    if d[base] == 0.0:
        return float("inf")
    scale = r[base] / d[base]
    return float(np.max(np.abs(scale * d - r)) / max(float(np.max(np.abs(r))), 1e-300))


class InvariantSuite:
    """
    Property checks for one system.

    Args:
        sys: Lagrangian system under test
        rank_tol: Rank tolerance used by every rank decision
        seed: Seed of the random points
        point_count: Number of random points per check
        sample_box: Half-width of the box the points are drawn from
        sample_count: Sample points of the constraint algorithm
        max_levels: Level cap of the constraint algorithm
        wave_params: Wave model parameters, enabling the closed-form chain comparison
        debug: Enable debug logging
    """

    def __init__(self, sys: LagrangianSystem, rank_tol: float = DEFAULT_RANK_TOL, seed: int = 0,
                 point_count: int = 20, sample_box: float = 0.5, sample_count: int = 32, max_levels: int = 8,
                 wave_params: Optional[WaveModelParams] = None, debug: bool = False):
        self.sys = sys
        self.rank_tol = rank_tol
        self.seed = seed
        self.point_count = point_count
        self.sample_box = sample_box
        self.sample_count = sample_count
        self.max_levels = max_levels
        self.wave_params = wave_params
        self._chain: Optional[ConstraintChain] = None

        # Set logging level based on debug flag
        if debug:
            logger.setLevel(logging.DEBUG)

        self.checks: Dict[str, Callable[[], CheckResult]] = {
            "ad_finite_differences": self.check_ad_finite_differences,
            "ad_hessian_symmetry": self.check_ad_hessian_symmetry,
            "hessian_symmetry": self.check_hessian_symmetry,
            "hessian_kernel": self.check_hessian_kernel,
            "legendre_round_trip": self.check_legendre_round_trip,
            "omega0_antisymmetry": self.check_omega0_antisymmetry,
            "omega0_exterior_derivative": self.check_omega0_exterior_derivative,
            "omega0_kernel_lemma": self.check_omega0_kernel_lemma,
            "holonomy": self.check_holonomy,
            "energy_balance": self.check_energy_balance,
            "omega0_contraction": self.check_omega0_contraction,
            "theta0_pullback": self.check_theta0_pullback,
            "oracle_equivalence": self.check_oracle_equivalence,
            "reference_chain": self.check_reference_chain,
        }

    def _rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def coordinates(self, salt: int = 0) -> List[np.ndarray]:
        """Random (t, q, v) points in the sampling box."""
        rng = self._rng(salt)
        box = self.sample_box
        n = self.sys.n
        return [
            np.concatenate(([rng.uniform(0.0, box)], rng.uniform(-box, box, 2 * n)))
            for _ in range(self.point_count)
        ]

    def w1_points(self, salt: int = 0) -> List[UnifiedPoint]:
        n = self.sys.n
        return [point_on_w1(self.sys, x[0], x[1:n + 1], x[n + 1:]) for x in self.coordinates(salt)]

    def w0_points(self, salt: int = 0) -> List[UnifiedPoint]:
        """Random points of W0 with momenta unrelated to the velocities."""
        rng = self._rng(salt + 1000)
        n = self.sys.n
        return [
            UnifiedPoint(x[0], x[1:n + 1], x[n + 1:], rng.uniform(-self.sample_box, self.sample_box, n))
            for x in self.coordinates(salt)
        ]

    def chain(self) -> ConstraintChain:
        if self._chain is None:
            points = draw_sample_points(self.sys, self.sample_count, self.sample_box, self.seed)
            self._chain = run_constraint_algorithm(self.sys, points, self.max_levels, self.rank_tol)
        return self._chain

    @staticmethod
    def _result(name: str, value: float, threshold: float, detail: str = "") -> CheckResult:
        return CheckResult(name, bool(value <= threshold), float(value), threshold, detail)

    def check_ad_finite_differences(self) -> CheckResult:
        worst = max(field_fd_error(self.sys.L, x) for x in self.coordinates(1))
        return self._result("ad_finite_differences", worst, 1e-6)

    def check_ad_hessian_symmetry(self) -> CheckResult:
        worst = 0.0
        for x in self.coordinates(2):
            hessian = jet2(self.sys.L, x.tolist()).hessian
            worst = max(worst, float(np.max(np.abs(hessian - hessian.T))))
        return self._result("ad_hessian_symmetry", worst, 0.0)

    def check_hessian_symmetry(self) -> CheckResult:
        n = self.sys.n
        worst = 0.0
        for x in self.coordinates(3):
            w = velocity_hessian(self.sys, x[0], x[1:n + 1], x[n + 1:])
            worst = max(worst, float(np.max(np.abs(w - w.T))))
        return self._result("hessian_symmetry", worst, 0.0)

    def check_hessian_kernel(self) -> CheckResult:
        n = self.sys.n
        expected = self.sys.metadata.get("expected_kernel_dimension")
        mismatches = 0
        angle = 0.0
        for x in self.coordinates(4):
            report = regularity(self.sys, x[0], x[1:n + 1], x[n + 1:], self.rank_tol)
            if expected is not None and report.kernel_dimension != expected:
                mismatches += 1
            if self.wave_params is not None and report.kernel_dimension == 1:
                kernel = report.kernel_basis[0]
                reference = alternating_vector(n)
                sine = float(np.linalg.norm(kernel - (kernel @ reference) * reference))
                angle = max(angle, float(np.arcsin(min(1.0, sine))))
        detail = f"expected kernel dimension {expected}, {mismatches} mismatching point(s)"
        if mismatches:
            return CheckResult("hessian_kernel", False, float(mismatches), 0.0, detail)
        return self._result("hessian_kernel", angle, 1e-10, detail)

    def check_legendre_round_trip(self) -> CheckResult:
        n = self.sys.n
        first = self.coordinates(5)[0]
        if regularity(self.sys, first[0], first[1:n + 1], first[n + 1:], self.rank_tol).classification \
                == Regularity.SINGULAR:
            return CheckResult("legendre_round_trip", True, 0.0, 1e-8, "skipped: singular Lagrangian")
        worst = 0.0
        for x in self.coordinates(5):
            t, q, v = x[0], x[1:n + 1], x[n + 1:]
            p = legendre_restricted(self.sys, t, q, v)
            recovered = legendre_invert(self.sys, t, q, p, v_guess=np.zeros(n))
            worst = max(worst, float(np.max(np.abs(recovered - v))))
        return self._result("legendre_round_trip", worst, 1e-8)

    def check_omega0_antisymmetry(self) -> CheckResult:
        worst = 0.0
        for pt in self.w0_points(6):
            m = omega0_matrix(self.sys, pt)
            worst = max(worst, float(np.max(np.abs(m + m.T))))
        return self._result("omega0_antisymmetry", worst, 0.0)

    def check_omega0_exterior_derivative(self) -> CheckResult:
        n = self.sys.n
        dim = 3 * n + 1

        def theta_components(z: np.ndarray) -> np.ndarray:
            pt = UnifiedPoint.from_vector(z, n)
            dt_coefficient, dq_coefficients = theta0(self.sys, pt)
            out = np.zeros(dim)
            out[0] = dt_coefficient
            out[1:n + 1] = dq_coefficients
            return out

        worst = 0.0
        for pt in self.w0_points(7):
            jacobian = central_jacobian(theta_components, pt.as_vector(), 1e-6)
            d_theta = jacobian - jacobian.T
            m = omega0_matrix(self.sys, pt)
            worst = max(worst, float(np.max(np.abs(m + d_theta))))
        return self._result("omega0_exterior_derivative", worst, 1e-6)

    def check_omega0_kernel_lemma(self) -> CheckResult:
        """
        Velocity rows of Omega0 off W1: i(d/dv^i)Omega0 = (p_i - dL/dv^i) dt.

        They vanish exactly where the primary constraints do, so velocity
        directions span part of ker Omega0 on W1.
        """
        n = self.sys.n
        worst = 0.0
        for pt in self.w0_points(8):
            rows = omega0_matrix(self.sys, pt)[n + 1:2 * n + 1]
            worst = max(worst, float(np.max(np.abs(rows[:, 0] - primary_constraints(self.sys, pt)))),
                        float(np.max(np.abs(rows[:, 1:]))))
        return self._result("omega0_kernel_lemma", worst, 1e-10)

    def check_holonomy(self) -> CheckResult:
        violations = 0
        for pt in self.w1_points(9):
            solution = solve_vector_field(self.sys, pt, self.rank_tol)
            if not np.array_equal(solution.F, pt.v):
                violations += 1
        return self._result("holonomy", float(violations), 0.0)

    def check_energy_balance(self) -> CheckResult:
        worst = 0.0
        for pt in self.w1_points(10):
            solution = solve_vector_field(self.sys, pt, self.rank_tol)
            worst = max(worst, abs(energy_balance_residual(self.sys, pt, solution)))
        return self._result("energy_balance", worst, 1e-10)

    def check_omega0_contraction(self) -> CheckResult:
        worst = 0.0
        for pt in self.w1_points(11):
            solution = solve_vector_field(self.sys, pt, self.rank_tol)
            covector = contract_omega0(omega0_matrix(self.sys, pt), vector_field_vector(pt, solution))
            worst = max(worst, float(np.max(np.abs(covector))))
        return self._result("omega0_contraction", worst, 1e-10)

    def check_theta0_pullback(self) -> CheckResult:
        worst = 0.0
        for pt in self.w1_points(12):
            dt_unified, dq_unified = theta0(self.sys, pt)
            dt_lagrangian, dq_lagrangian = poincare_cartan_form(self.sys, pt.t, pt.q, pt.v)
            worst = max(worst, abs(dt_unified - dt_lagrangian), float(np.max(np.abs(dq_unified - dq_lagrangian))))
        return self._result("theta0_pullback", worst, 1e-12)

    def check_oracle_equivalence(self) -> CheckResult:
        n = self.sys.n
        x = self.coordinates(13)[0]
        if regularity(self.sys, x[0], x[1:n + 1], x[n + 1:], self.rank_tol).classification == Regularity.SINGULAR:
            return CheckResult("oracle_equivalence", True, 0.0, 1e-8, "skipped: singular Lagrangian")
        t0, q0, v0 = x[0], x[1:n + 1], x[n + 1:]
        step, t_end = 1e-3, x[0] + 0.1
        trajectory = integrate(self.sys, self.chain(), point_on_w1(self.sys, t0, q0, v0),
                               IntegratorOptions(step, t_end, projection=None))
        oracle = direct_el_oracle(self.sys, t0, q0, v0, step, t_end)
        deviation = float(np.max(np.abs(trajectory.q - oracle.q)))
        return self._result("oracle_equivalence", deviation, 1e-8)

    def check_reference_chain(self) -> CheckResult:
        chain = self.chain()
        termination = chain.termination
        sizes = chain.level_sizes
        if termination is None or termination.kind in (TerminationKind.INCONSISTENT,
                                                       TerminationKind.MAX_LEVELS_REACHED):
            kind = termination.kind.value if termination else "none"
            return CheckResult("reference_chain", False, float(len(sizes)), 0.0, f"termination {kind}")
        if self.wave_params is None or self.wave_params.closed_chain:
            return CheckResult("reference_chain", True, 0.0, 0.0,
                               f"level sizes {sizes}, {termination.kind.value}")

        expected = [self.wave_params.N + 1, 1, 1]
        if sizes != expected or termination.kind != TerminationKind.ALL_DETERMINED:
            return CheckResult("reference_chain", False, float(len(sizes)), 3.0,
                               f"level sizes {sizes} ({termination.kind.value}), expected {expected}")
        reference = wave_reference_constraints(self.wave_params, self.sys)
        points = self.w1_points(14)
        error = max(
            reference_agreement(chain.levels[1][0], reference[-2], points),
            reference_agreement(chain.levels[2][0], reference[-1], points),
        )
        return self._result("reference_chain", error, 1e-8, f"level sizes {sizes}")

    def run(self, names: Optional[Sequence[str]] = None) -> List[CheckResult]:
        """
        Run the named checks (all when None); engine errors count as failures.

        Returns:
            One CheckResult per check, in suite order
        """
        results = []
        for name, check in self.checks.items():
            if names is not None and name not in names:
                continue
            try:
                result = check()
            except (SruskError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
                result = CheckResult(name, False, float("nan"), 0.0, f"{type(e).__name__}: {e}")
            level = logging.DEBUG if result.passed else logging.WARNING
            logger.log(level, f"{self.sys.name}: {name} {'passed' if result.passed else 'FAILED'} "
                              f"({result.value:.3e} vs {result.threshold:.1e}) {result.detail}")
            results.append(result)
        return results
