"""
Tests for the models module.
"""

import logging
import math

import numpy as np
import pytest

from srusk.exceptions import SingularHessianError, UnknownModelError
from srusk.lagrangian import legendre_restricted, regularity
from srusk.models import (
    BUILTINS,
    WaveModelParams,
    alternating_vector,
    builtin,
    check_sigma_convexity,
    direct_el_oracle,
    semidiscrete_wave,
    standing_wave_exact,
    standing_wave_state,
    wave_reference_constraints,
)
from srusk.unified import UnifiedPoint, point_on_w1, primary_constraints
from srusk.verification import reference_agreement


def random_w1_points(sys, count, seed=0):
    rng = np.random.default_rng(seed)
    return [
        point_on_w1(sys, rng.uniform(0.0, 0.5), rng.uniform(-0.5, 0.5, sys.n), rng.uniform(-0.5, 0.5, sys.n))
        for _ in range(count)
    ]


def test_builtin_models():
    assert sorted(BUILTINS) == ["free_particle", "harmonic", "singular_toy", "wave"]
    assert builtin("free_particle", n=3).n == 3
    assert builtin("harmonic", omega=2.0).metadata["omega"] == 2.0
    assert builtin("singular_toy").metadata["expected_kernel_dimension"] == 1
    wave = builtin("wave", N=6, sigma="linear")
    assert wave.n == 7
    assert wave.name == "wave[N=6]"
    assert wave.time_dependent


def test_unknown_model():
    with pytest.raises(UnknownModelError) as excinfo:
        builtin("pendulum")

    assert "pendulum" in str(excinfo.value)
    assert isinstance(excinfo.value, KeyError)


def test_bad_model_parameters():
    with pytest.raises(ValueError):
        builtin("harmonic", stiffness=3.0)
    with pytest.raises(UnknownModelError):
        builtin("wave", sigma="cubic")


@pytest.mark.parametrize("kwargs", [
    {"N": 1},
    {"K": 0.0},
    {"sigma": "linear", "sigma_coefficients": [1.0, 2.0]},
])
def test_wave_parameter_validation(kwargs):
    with pytest.raises(ValueError):
        WaveModelParams.from_names(**kwargs)


def test_grid_spacing():
    assert WaveModelParams.from_names(N=8, K=2.0).h == 0.25


def test_harmonic_drifting_frequency():
    system = builtin("harmonic", omega=1.0, omega_drift=0.5)

    assert system.time_dependent
    # omega(t=2) = 2
    assert system.evaluate(2.0, [1.0], [0.0]) == pytest.approx(-2.0)


def test_alternating_vector():
    assert alternating_vector(4) == pytest.approx([0.5, -0.5, 0.5, -0.5])


def test_wave_momenta_average_neighbouring_velocities():
    system = builtin("wave", N=2, sigma="linear")

    assert legendre_restricted(system, 0.0, [0.0] * 3, [1.0, 0.0, 0.0]) == pytest.approx([0.25, 0.25, 0.0])
    assert legendre_restricted(system, 0.0, [0.0] * 3, [0.0, 1.0, 0.0]) == pytest.approx([0.25, 0.5, 0.25])


def test_wave_translation_invariance():
    """Without g, shifting every node leaves L unchanged."""
    system = builtin("wave", N=4, sigma="quartic")
    q = np.array([0.1, -0.3, 0.2, 0.0, 0.4])
    v = np.array([0.2, 0.1, -0.1, 0.3, 0.0])

    assert system.evaluate(0.3, q + 0.7, v) == pytest.approx(system.evaluate(0.3, q, v), abs=1e-14)


@pytest.mark.parametrize("N", [2, 4, 8, 16])
def test_wave_hessian_kernel(N):
    system = builtin("wave", N=N, sigma="quartic", g="sine_gordon_g")
    report = regularity(system, 0.2, np.linspace(-0.3, 0.3, N + 1), np.cos(np.arange(N + 1)))

    s = report.singular_values
    assert report.kernel_dimension == 1
    assert np.sum(s < 1e-12 * s[0]) == 1
    assert s[-2] > 1e-3
    kernel = report.kernel_basis[0]
    reference = alternating_vector(N + 1)
    assert np.linalg.norm(kernel - (kernel @ reference) * reference) <= 1e-10


def test_closed_chain_kernel():
    odd = builtin("wave", N=4, closed_chain=True)
    even = builtin("wave", N=5, closed_chain=True)

    assert odd.metadata["expected_kernel_dimension"] == 0
    assert regularity(odd, 0.0, [0.0] * 5, [0.1] * 5).kernel_dimension == 0
    assert even.metadata["expected_kernel_dimension"] == 1
    assert regularity(even, 0.0, [0.0] * 6, [0.1] * 6).kernel_dimension == 1


def test_closed_chain_has_no_reference():
    with pytest.raises(ValueError):
        wave_reference_constraints(WaveModelParams.from_names(N=5, closed_chain=True))


def test_flat_sigma_warns(caplog):
    params = WaveModelParams.from_names(N=4, sigma="linear", sigma_coefficients=[0.0])

    with caplog.at_level(logging.WARNING, logger="srusk.models"):
        assert not check_sigma_convexity(params)
        semidiscrete_wave(params)

    assert "sigma''" in caplog.text


def test_convex_sigma_passes(wave_params):
    assert check_sigma_convexity(wave_params)


def test_linear_reference_constraints():
    """For sigma = c/2 u_x^2 the references are c sum (-1)^i w^i and c sum (-1)^i (v^{i+1} - v^i) / h."""
    params = WaveModelParams.from_names(N=4, sigma="linear", sigma_coefficients=[2.0])
    reference = wave_reference_constraints(params)
    q = np.array([0.1, -0.3, 0.2, 0.0, 0.4])
    v = np.array([0.2, 0.1, -0.1, 0.3, 0.0])
    pt = UnifiedPoint(0.0, q, v, np.zeros(5))
    signs = np.array([1.0, -1.0, 1.0, -1.0])

    assert len(reference) == 7
    assert reference[-2].value(pt) == pytest.approx(2.0 * signs @ (np.diff(q) / params.h))
    assert reference[-1].value(pt) == pytest.approx(2.0 * signs @ (np.diff(v) / params.h))
    assert reference[-2].momentum_free and reference[-1].momentum_free


def test_discovered_chain_matches_reference(wave_chain, wave_params, wave_system):
    reference = wave_reference_constraints(wave_params, wave_system)
    points = random_w1_points(wave_system, 20, seed=5)

    assert reference_agreement(wave_chain.levels[1][0], reference[-2], points) < 1e-8
    assert reference_agreement(wave_chain.levels[2][0], reference[-1], points) < 1e-8

    # Discovered secondary = 2 / (h sqrt(N+1)) times the reference
    pt = points[0]
    ratio = wave_chain.levels[1][0].value(pt) / reference[-2].value(pt)
    assert ratio == pytest.approx(2.0 / (wave_params.h * math.sqrt(5.0)), rel=1e-10)


def test_standing_wave():
    params = WaveModelParams.from_names(N=4, sigma="linear")
    u, u_t = standing_wave_exact(params, 0.0)

    assert u == pytest.approx([1.0, 0.0, -1.0, 0.0, 1.0], abs=1e-15)
    assert u_t == pytest.approx(np.zeros(5))
    u, u_t = standing_wave_exact(params, 0.25)
    assert u == pytest.approx(np.zeros(5), abs=1e-15)
    assert u_t == pytest.approx(-2.0 * math.pi * np.array([1.0, 0.0, -1.0, 0.0, 1.0]), abs=1e-12)


def test_standing_wave_state_is_on_w1():
    params = WaveModelParams.from_names(N=4, sigma="linear")
    system = semidiscrete_wave(params)
    pt = standing_wave_state(system, params, t=0.1)

    assert not primary_constraints(system, pt).any()
    assert pt.t == 0.1


def test_direct_oracle_harmonic(harmonic):
    trajectory = direct_el_oracle(harmonic, 0.0, [1.0], [0.0], 0.01, 1.0)

    assert len(trajectory.points) == 101
    assert trajectory.q[-1, 0] == pytest.approx(math.cos(1.0), abs=1e-8)
    assert trajectory.p[-1, 0] == trajectory.v[-1, 0]
    assert trajectory.max_constraint_residual == 0.0


def test_direct_oracle_rejects_singular_systems(singular_toy):
    with pytest.raises(SingularHessianError):
        direct_el_oracle(singular_toy, 0.0, [0.0, 0.0], [0.1, 0.1], 0.1, 1.0)
    with pytest.raises(ValueError):
        direct_el_oracle(singular_toy, 0.0, [0.0, 0.0], [0.1, 0.1], 0.0, 1.0)
