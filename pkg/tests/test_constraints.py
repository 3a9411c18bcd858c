"""
Tests for the constraints module.
"""

import json

import numpy as np
import pytest

from srusk.constraints import (
    ConstraintAlgorithm,
    ConstraintChain,
    ProvenanceKind,
    TerminationKind,
    constraint_jacobian,
    constraint_values,
    coordinate_indices,
    draw_sample_points,
    extend_chain,
    initial_chain,
    primary_constraint,
    project_to_zero_set,
    resolve_lambda,
    run_constraint_algorithm,
    tangency_system,
)
from srusk.exceptions import ConstantRankError, NoConvergenceError, NotOnConstraintSetError
from srusk.lagrangian import LagrangianSystem
from srusk.models import WaveModelParams, semidiscrete_wave
from srusk.unified import point_on_w1, solve_vector_field


def test_regular_system_stops_at_primaries(harmonic):
    chain = ConstraintAlgorithm(harmonic, sample_count=4).run()

    assert chain.level_sizes == [1]
    assert chain.termination.kind == TerminationKind.ALL_DETERMINED
    assert chain.kernel_dimension == 0


def test_singular_toy_has_gauge_freedom(singular_toy):
    chain = ConstraintAlgorithm(singular_toy, sample_count=4).run()

    assert chain.level_sizes == [2]
    assert chain.termination.kind == TerminationKind.GAUGE_FREEDOM
    assert chain.termination.gauge_dimension == 1


def test_wave_chain_levels(wave_chain):
    assert wave_chain.level_sizes == [5, 1, 1]
    assert wave_chain.termination.kind == TerminationKind.ALL_DETERMINED
    assert wave_chain.kernel_dimension == 1
    assert wave_chain.determined_directions == 1
    assert [c.id for c in wave_chain.constraints][-2:] == ["L2.0", "L3.0"]


WAVE_POTENTIALS = [("quartic", "sine_gordon_g"), ("modulated", "quadratic"), ("linear", "zero")]


@pytest.mark.parametrize("sigma, g", WAVE_POTENTIALS)
@pytest.mark.parametrize("N", [2, 3, 4] + [pytest.param(n, marks=pytest.mark.slow) for n in range(5, 9)])
def test_wave_chain_shape_across_grids(N, sigma, g):
    """Every open chain with sigma'' != 0 stops after a secondary and a tertiary constraint."""
    system = semidiscrete_wave(WaveModelParams.from_names(N=N, sigma=sigma, g=g))
    chain = ConstraintAlgorithm(system, sample_count=8, seed=0).run()

    assert chain.level_sizes == [N + 1, 1, 1]
    assert chain.termination.kind == TerminationKind.ALL_DETERMINED
    assert chain.kernel_dimension == 1


def test_wave_secondary_provenance(wave_chain):
    secondary = wave_chain.levels[1][0]

    assert secondary.provenance.kind == ProvenanceKind.TANGENCY
    assert secondary.provenance.parent_ids == ("L1.0", "L1.1", "L1.2", "L1.3", "L1.4")
    assert secondary.momentum_free
    # The null direction of -W is the alternating vector
    direction = np.array(secondary.provenance.null_direction)
    assert np.abs(direction) == pytest.approx(np.full(5, 1.0 / np.sqrt(5.0)), abs=1e-10)
    assert direction[0] > 0


def test_level_cap(wave_system):
    chain = ConstraintAlgorithm(wave_system, max_levels=1, sample_count=4).run()

    assert chain.level_sizes == [5]
    assert chain.termination.kind == TerminationKind.MAX_LEVELS_REACHED
    assert "level 2" in chain.termination.detail


def test_chain_is_deterministic(wave_system):
    first = ConstraintAlgorithm(wave_system, sample_count=4, seed=3).run()
    second = ConstraintAlgorithm(wave_system, sample_count=4, seed=3).run()
    pt = first.sample_points[0]

    assert first.level_sizes == second.level_sizes
    assert np.array_equal(first.values(wave_system, pt), second.values(wave_system, pt))


def test_sample_points_lie_on_chain(wave_chain, wave_system):
    for pt in wave_chain.sample_points:
        assert wave_chain.max_residual(wave_system, pt) <= 1e-12


def test_tangency_closure(wave_chain, wave_system):
    """Every constraint is preserved by X0 once lam is resolved."""
    for pt in wave_chain.sample_points:
        big_a, big_b = tangency_system(wave_system, wave_chain, pt)
        assert big_a.shape == (7,)
        assert big_b.shape == (7, 1)

        solution = solve_vector_field(wave_system, pt)
        lam = resolve_lambda(wave_system, wave_chain, pt, solution)
        assert np.max(np.abs(big_a + big_b @ lam)) <= 1e-8


def test_tangency_system_off_constraint_set(wave_chain, wave_system):
    pt = point_on_w1(wave_system, 0.1, [0.0, 0.3, -0.2, 0.4, 0.1], [0.0] * 5)

    with pytest.raises(NotOnConstraintSetError):
        tangency_system(wave_system, wave_chain, pt)


def test_constant_rank_violation_is_reported():
    """W = q^2 drops rank at q = 0."""
    system = LagrangianSystem.from_function(1, lambda t, q, v: 0.5 * (q[0] * v[0]) ** 2, name="degenerate")
    points = [point_on_w1(system, 0.0, [0.0], [0.3]), point_on_w1(system, 0.0, [1.0], [0.3])]

    with pytest.raises(ConstantRankError):
        run_constraint_algorithm(system, points)


def test_inconsistent_system_terminates():
    """L = v1^2/2 + q2 forces 1 = 0."""
    system = LagrangianSystem.from_function(2, lambda t, q, v: 0.5 * v[0] * v[0] + q[1], name="inconsistent")
    chain = ConstraintAlgorithm(system, sample_count=4).run()

    assert chain.termination.kind == TerminationKind.INCONSISTENT
    assert chain.level_sizes == [2]


def test_algorithm_rejects_bad_settings(harmonic):
    with pytest.raises(ValueError):
        ConstraintAlgorithm(harmonic, rank_tol=0.0)
    with pytest.raises(ValueError):
        ConstraintAlgorithm(harmonic, max_levels=0)
    with pytest.raises(ValueError):
        initial_chain(harmonic, [])


def test_extend_requires_primary_level(harmonic):
    chain = initial_chain(harmonic, draw_sample_points(harmonic, 2))

    with pytest.raises(ValueError):
        extend_chain(harmonic, ConstraintChain(harmonic.name, 1, (), chain.sample_points))


def test_initial_chain_moves_samples_onto_w1(harmonic):
    points = [pt.with_momenta([5.0]) for pt in draw_sample_points(harmonic, 3, seed=1)]
    chain = initial_chain(harmonic, points)

    for pt in chain.sample_points:
        assert chain.max_residual(harmonic, pt) == 0.0


def test_primary_jacobian(harmonic):
    constraints = [primary_constraint(harmonic, 0)]
    pt = point_on_w1(harmonic, 0.0, [0.4], [0.3]).with_momenta([1.0])
    values, jacobian = constraint_jacobian(harmonic, constraints, pt, coordinate_indices(1, "qvp"))

    assert values == pytest.approx([0.7])
    assert jacobian.tolist() == [[0.0, -1.0, 1.0]]
    assert constraint_values(harmonic, constraints, pt) == pytest.approx([0.7])


def test_coordinate_selection():
    assert coordinate_indices(2, "vp") == [3, 4, 5, 6]
    assert coordinate_indices(2, "qvp") == [1, 2, 3, 4, 5, 6]
    with pytest.raises(ValueError):
        coordinate_indices(2, "tq")


def test_projection_onto_wave_chain(wave_chain, wave_system):
    pt = point_on_w1(wave_system, 0.2, [0.1, -0.2, 0.3, 0.0, -0.1], [0.2, 0.1, -0.1, 0.0, 0.3])
    projected = project_to_zero_set(wave_system, wave_chain.constraints, pt, 1e-10, 50, coordinates="qvp")

    assert wave_chain.max_residual(wave_system, projected) <= 1e-10
    assert projected.t == pt.t


def test_projection_in_vp_cannot_fix_position_constraints(wave_chain, wave_system):
    pt = point_on_w1(wave_system, 0.2, [0.1, -0.2, 0.3, 0.0, -0.1], [0.0] * 5)

    with pytest.raises(NoConvergenceError):
        project_to_zero_set(wave_system, wave_chain.constraints, pt, 1e-10, 5)


def test_projection_returns_point_already_on_set(wave_chain, wave_system):
    pt = wave_chain.sample_points[0]

    assert project_to_zero_set(wave_system, wave_chain.constraints, pt, 1e-10, 5) is pt


def test_chain_report_is_json_ready(wave_chain, wave_system):
    report = wave_chain.to_report(wave_system)
    decoded = json.loads(json.dumps(report))

    assert decoded["level_sizes"] == [5, 1, 1]
    assert decoded["termination"] == "AllDetermined"
    assert decoded["gauge_dimension"] == 0
    assert decoded["sample_count"] == len(wave_chain.sample_points)
    assert [level["size"] for level in decoded["levels"]] == [5, 1, 1]
    assert max(level["residual_max"] for level in decoded["levels"]) <= 1e-12
    assert decoded["constraints"][0]["provenance"] == {"kind": "Primary", "index": 0}
    assert decoded["constraints"][5]["provenance"]["kind"] == "Tangency"
