"""
Shared fixtures for the test suite.
"""

import numpy as np
import pytest

from srusk.autodiff import sin
from srusk.constraints import ConstraintAlgorithm
from srusk.lagrangian import LagrangianSystem
from srusk.models import WaveModelParams, builtin, semidiscrete_wave


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def free_particle():
    return builtin("free_particle")


@pytest.fixture
def harmonic():
    return builtin("harmonic", omega=1.0)


@pytest.fixture
def singular_toy():
    return builtin("singular_toy")


@pytest.fixture
def regular_coupled():
    """A regular, time-dependent Lagrangian with velocity coupling and a quartic potential."""

    def lagrangian(t, q, v):
        kinetic = 0.5 * (1.0 + 0.1 * sin(t)) * v[0] * v[0] + 0.5 * v[1] * v[1] + 0.3 * v[0] * v[1]
        return kinetic + 0.1 * q[0] * v[1] - 0.5 * q[0] * q[0] - 0.25 * q[1] ** 4

    return LagrangianSystem.from_function(2, lagrangian, name="regular_coupled", expected_kernel_dimension=0)


@pytest.fixture(scope="session")
def wave_params():
    """The golden wave model: N=4, quartic sigma, sine-Gordon g."""
    return WaveModelParams.from_names(N=4, K=1.0, sigma="quartic", g="sine_gordon_g")


@pytest.fixture(scope="session")
def wave_system(wave_params):
    return semidiscrete_wave(wave_params)


@pytest.fixture(scope="session")
def wave_chain(wave_system):
    """Constraint chain of the golden wave model from a small sample."""
    return ConstraintAlgorithm(wave_system, sample_count=8, seed=0).run()
