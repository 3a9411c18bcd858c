"""
Tests for the unified module.
"""

import numpy as np
import pytest

from srusk.autodiff import SmoothScalarField
from srusk.exceptions import NotOnW1Error
from srusk.lagrangian import LagrangianSystem, legendre_restricted, poincare_cartan_form
from srusk.models import alternating_vector
from srusk.unified import (
    UnifiedPoint,
    contract_omega0,
    embed,
    energy_balance_residual,
    lagrangian_vector_field,
    omega0_matrix,
    point_on_w1,
    primary_constraints,
    restrict,
    solve_vector_field,
    theta0,
    vector_field_vector,
    w0_residual,
)


def random_w1_point(sys, rng):
    t = rng.uniform(-1.0, 1.0)
    q = rng.uniform(-1.0, 1.0, sys.n)
    v = rng.uniform(-1.0, 1.0, sys.n)
    return point_on_w1(sys, t, q, v)


def test_point_vector_round_trip():
    pt = UnifiedPoint(0.5, [1.0, 2.0], [3.0, 4.0], [5.0, 6.0])

    assert pt.n == 2
    assert pt.as_vector().tolist() == [0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    again = UnifiedPoint.from_vector(pt.as_vector(), 2)
    assert np.array_equal(again.as_vector(), pt.as_vector())


def test_point_validation():
    with pytest.raises(ValueError):
        UnifiedPoint(0.0, [np.nan], [0.0], [0.0])
    with pytest.raises(ValueError):
        UnifiedPoint(0.0, [1.0, 2.0], [0.0], [0.0])
    with pytest.raises(ValueError):
        UnifiedPoint.from_vector([0.0, 1.0, 2.0], 1)


def test_with_momenta_keeps_other_coordinates():
    pt = UnifiedPoint(1.0, [2.0], [3.0], [4.0]).with_momenta([7.0])

    assert pt.as_vector().tolist() == [1.0, 2.0, 3.0, 7.0]


def test_embed_lands_on_w0(regular_coupled, rng):
    pt = random_w1_point(regular_coupled, rng)
    ext = embed(regular_coupled, pt)

    assert w0_residual(regular_coupled, ext) == pytest.approx(0.0, abs=1e-14)
    assert np.array_equal(restrict(ext).as_vector(), pt.as_vector())


def test_theta0_pulls_back_to_poincare_cartan(regular_coupled, rng):
    pt = random_w1_point(regular_coupled, rng)
    dt_coefficient, dq_coefficients = theta0(regular_coupled, pt)
    expected_dt, expected_dq = poincare_cartan_form(regular_coupled, pt.t, pt.q, pt.v)

    assert dt_coefficient == pytest.approx(expected_dt, abs=1e-14)
    assert dq_coefficients == pytest.approx(expected_dq, abs=1e-14)


def test_omega0_is_exactly_antisymmetric(wave_system, rng):
    matrix = omega0_matrix(wave_system, random_w1_point(wave_system, rng))

    assert matrix.shape == (16, 16)
    assert np.array_equal(matrix, -matrix.T)


def test_harmonic_vector_field(harmonic):
    pt = point_on_w1(harmonic, 0.0, [0.7], [0.2])
    solution = solve_vector_field(harmonic, pt)

    assert np.array_equal(solution.F, pt.v)
    assert solution.G() == pytest.approx([-0.7])
    assert solution.H == pytest.approx([-0.7])
    assert solution.kernel_dimension == 0
    assert vector_field_vector(pt, solution) == pytest.approx([1.0, 0.2, -0.7, -0.7])
    assert lagrangian_vector_field(pt, solution) == pytest.approx([1.0, 0.2, -0.7])


def test_singular_toy_has_free_acceleration(singular_toy):
    pt = point_on_w1(singular_toy, 0.0, [0.1, 0.2], [0.3, 0.4])
    solution = solve_vector_field(singular_toy, pt)

    assert solution.kernel_dimension == 1
    assert solution.G_kernel[0] == pytest.approx([0.0, 1.0])
    assert solution.kernel_matrix.shape == (2, 1)
    assert solution.G([2.5]) == pytest.approx([0.0, 2.5])


def test_wave_kernel_is_alternating(wave_system, rng):
    solution = solve_vector_field(wave_system, random_w1_point(wave_system, rng))

    assert solution.kernel_dimension == 1
    assert solution.G_kernel[0] == pytest.approx(alternating_vector(5), abs=1e-10)


def test_regular_solution_has_no_defect(regular_coupled, rng):
    solution = solve_vector_field(regular_coupled, random_w1_point(regular_coupled, rng))

    assert solution.consistency_defect < 1e-12
    assert solution.W @ solution.G() == pytest.approx(solution.b, abs=1e-12)


def test_off_w1_point_is_rejected(harmonic):
    pt = point_on_w1(harmonic, 0.0, [0.7], [0.2]).with_momenta([1.2])

    assert primary_constraints(harmonic, pt) == pytest.approx([1.0])
    with pytest.raises(NotOnW1Error):
        solve_vector_field(harmonic, pt)
    # The check can be switched off
    assert solve_vector_field(harmonic, pt, w1_tol=None).F.tolist() == [0.2]


def test_contraction_and_energy_balance_on_w1(harmonic, regular_coupled, singular_toy, wave_system, rng):
    """i(X0)Omega0 and the energy balance vanish on W1 at 1000 random points."""
    worst_contraction = 0.0
    worst_balance = 0.0
    for sys in (harmonic, regular_coupled, singular_toy, wave_system):
        for _ in range(250):
            pt = random_w1_point(sys, rng)
            solution = solve_vector_field(sys, pt)
            lam = rng.uniform(-1.0, 1.0, solution.kernel_dimension)
            covector = contract_omega0(omega0_matrix(sys, pt), vector_field_vector(pt, solution, lam))
            worst_contraction = max(worst_contraction, float(np.max(np.abs(covector))))
            worst_balance = max(worst_balance, abs(energy_balance_residual(sys, pt, solution, lam)))

    assert worst_contraction < 1e-10
    assert worst_balance < 1e-10


def test_legendre_momenta_solve_primaries(wave_system, rng):
    pt = random_w1_point(wave_system, rng)

    assert np.array_equal(pt.p, legendre_restricted(wave_system, pt.t, pt.q, pt.v))
    assert not primary_constraints(wave_system, pt).any()


def test_velocity_rows_of_omega0_off_w1(regular_coupled, singular_toy, wave_system, rng):
    """Row v^i of Omega0 is (p_i - dL/dv^i) dt, so it vanishes exactly on W1."""
    for sys in (regular_coupled, singular_toy, wave_system):
        n = sys.n
        pt = random_w1_point(sys, rng)
        off = pt.with_momenta(pt.p + rng.uniform(0.1, 1.0, n))
        m = omega0_matrix(sys, off)

        for i in range(n):
            row = m[n + 1 + i]
            assert row[0] == pytest.approx(off.p[i] - pt.p[i], abs=1e-12)
            assert not row[1:].any()
        assert not omega0_matrix(sys, pt)[n + 1:2 * n + 1, 1:].any()
        assert omega0_matrix(sys, pt)[n + 1:2 * n + 1, 0] == pytest.approx(np.zeros(n), abs=1e-12)


@pytest.mark.parametrize("c", [1e-3, 1.0, 1e3])
def test_vector_field_is_scale_equivariant(regular_coupled, wave_system, rng, c):
    """L -> cL leaves F and G unchanged and scales H and the momenta by c."""
    for sys in (regular_coupled, wave_system):
        scaled = LagrangianSystem(sys.n, SmoothScalarField(sys.L.arity, lambda x, sys=sys: c * sys.L(x)),
                                  sys.name, sys.time_dependent)
        pt = random_w1_point(sys, rng)
        scaled_pt = pt.with_momenta(c * pt.p)

        reference = solve_vector_field(sys, pt)
        solution = solve_vector_field(scaled, scaled_pt, w1_tol=1e-8 * max(c, 1.0))

        assert solution.F == pytest.approx(reference.F)
        assert solution.G_particular == pytest.approx(reference.G_particular, abs=1e-9)
        assert solution.H == pytest.approx(c * reference.H, rel=1e-9, abs=1e-12)
        assert solution.kernel_dimension == reference.kernel_dimension
