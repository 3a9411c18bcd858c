"""
Tests for the verification module.
"""

from unittest.mock import patch

import numpy as np
import pytest

from srusk.exceptions import NoConvergenceError
from srusk.unified import omega0_matrix
from srusk.verification import InvariantSuite, central_gradient, central_jacobian


def test_central_differences():
    x = np.array([0.3, -0.7])

    assert central_gradient(lambda y: y[0] ** 2 * y[1], x) == pytest.approx([2 * 0.3 * -0.7, 0.09], abs=1e-9)
    jacobian = central_jacobian(lambda y: np.array([y[0] * y[1], y[1]]), x)
    assert jacobian == pytest.approx(np.array([[-0.7, 0.0], [0.3, 1.0]]), abs=1e-9)


@pytest.mark.parametrize("fixture", ["harmonic", "free_particle", "regular_coupled"])
def test_regular_systems_pass(fixture, request):
    system = request.getfixturevalue(fixture)
    results = InvariantSuite(system, point_count=5, sample_count=4).run()

    assert len(results) == 14
    failed = [(r.name, r.detail) for r in results if not r.passed]
    assert failed == []


def test_singular_toy_skips_regular_only_checks(singular_toy):
    results = {r.name: r for r in InvariantSuite(singular_toy, point_count=5, sample_count=4).run()}

    assert all(r.passed for r in results.values())
    assert results["legendre_round_trip"].detail.startswith("skipped")
    assert results["oracle_equivalence"].detail.startswith("skipped")


def test_wave_model_passes(wave_system, wave_params):
    suite = InvariantSuite(wave_system, point_count=5, sample_count=8, wave_params=wave_params)
    results = suite.run()

    failed = [(r.name, r.detail) for r in results if not r.passed]
    assert failed == []
    reference = next(r for r in results if r.name == "reference_chain")
    assert "[5, 1, 1]" in reference.detail


def test_wrong_rank_tolerance_fails_kernel_check(wave_system, wave_params):
    suite = InvariantSuite(wave_system, rank_tol=10.0, max_levels=2, point_count=3, sample_count=4,
                           wave_params=wave_params)
    (result,) = suite.run(["hessian_kernel"])

    assert result.name == "hessian_kernel"
    assert not result.passed
    assert "expected kernel dimension 1" in result.detail


def test_engine_errors_become_failures(harmonic):
    suite = InvariantSuite(harmonic, point_count=2, sample_count=2)

    def broken():
        raise NoConvergenceError("did not converge")

    suite.checks["holonomy"] = broken
    (result,) = suite.run(["holonomy"])

    assert not result.passed
    assert result.detail == "NoConvergenceError: did not converge"


def test_kernel_lemma_checks_velocity_rows_off_w1(regular_coupled):
    """A matrix whose velocity rows ignore the primary constraints is caught at W0 points."""
    def without_dt_column(sys, pt):
        m = omega0_matrix(sys, pt)
        m[sys.n + 1:2 * sys.n + 1, 0] = 0.0
        return m

    suite = InvariantSuite(regular_coupled, point_count=3, sample_count=2)
    (passing,) = suite.run(["omega0_kernel_lemma"])
    with patch("srusk.verification.omega0_matrix", side_effect=without_dt_column):
        (failing,) = suite.run(["omega0_kernel_lemma"])

    assert passing.passed
    assert not failing.passed
