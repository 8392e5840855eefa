"""
Tests for minimal-energy steering and its ODE verification.
"""

import numpy as np
import pytest

from services.errors import (
    DimensionError,
    NearOrthogonalError,
    PreconditionError,
    TimeOrderError,
    WindowError,
)
from services.qstate import (
    FreePropagator,
    ProjectiveState,
    check_unitary,
    dagger,
    fs_distance,
    operator_norm,
    random_hermitian,
    random_state,
    state_at_distance,
)
from services.steering import (
    convergence_order,
    perturbation_at,
    synthesize_steering,
    verify_steering_by_integration,
)

TAU0, TAU, TAU1 = 1.0, 4.0 / 3.0, 5.0 / 3.0


def _instance(dim, rng, delta, scale=1.0):
    """Random (u, H, v) with v at FS angle delta from the free image of u."""
    h = random_hermitian(dim, rng, scale=scale)
    prop = FreePropagator(h)
    u = random_state(dim, rng)
    v = state_at_distance(u.evolve(prop(TAU1, TAU0)), delta, rng)
    return u, h, v, prop


class TestSynthesis:

    @pytest.mark.parametrize("dim", [2, 3, 4, 8])
    def test_cost_equals_fs_angle(self, dim):
        rng = np.random.default_rng(100 + dim)
        for _ in range(100):
            delta = rng.uniform(0.0, 0.3)
            u, h, v, prop = _instance(dim, rng, delta)
            plan = synthesize_steering(u, h, TAU0, TAU, TAU1, v, propagator=prop)

            assert plan.cost == pytest.approx(delta, abs=1e-10)
            assert plan.delta == pytest.approx(delta, abs=1e-10)
            check_unitary(plan.closed_form_V)
            achieved = ProjectiveState(plan.closed_form_V @ prop(TAU, TAU0) @ u.amplitudes)
            assert fs_distance(achieved, v) < 1e-10

    @pytest.mark.parametrize("dim", [3, 5])
    def test_generator_is_rank_two_rotation(self, dim):
        rng = np.random.default_rng(dim)
        u, h, v, prop = _instance(dim, rng, 0.25)
        plan = synthesize_steering(u, h, TAU0, TAU, TAU1, v, propagator=prop)
        assert np.allclose(plan.K, -dagger(plan.K), atol=1e-14)
        assert np.linalg.matrix_rank(plan.K, tol=1e-10) == 2
        assert operator_norm(plan.K) == pytest.approx(0.25, abs=1e-12)
        assert np.allclose(plan.H_tilde, dagger(plan.H_tilde), atol=1e-12)

    def test_instantaneous_norm(self, rng):
        u, h, v, prop = _instance(3, rng, 0.2)
        plan = synthesize_steering(u, h, TAU0, TAU, TAU1, v, propagator=prop)
        assert plan.duration == pytest.approx(1.0 / 3.0)
        assert plan.instantaneous_norm == pytest.approx(0.6)
        for t in np.linspace(TAU, TAU1, 5):
            assert operator_norm(perturbation_at(plan, h, t, prop)) == pytest.approx(0.6, abs=1e-10)

    def test_target_already_reached(self):
        plus = ProjectiveState.plus(3)
        plan = synthesize_steering(plus, np.zeros((3, 3)), TAU0, TAU, TAU1, plus)
        assert plan.cost == 0.0
        assert np.all(plan.K == 0)
        assert np.allclose(plan.closed_form_V, np.eye(3))

    def test_orthogonal_target(self):
        with pytest.raises(NearOrthogonalError):
            synthesize_steering(
                ProjectiveState.basis(2, 0), np.zeros((2, 2)), TAU0, TAU, TAU1, ProjectiveState.basis(2, 1)
            )

    @pytest.mark.parametrize("times", [(0.0, 0.5, 1.0), (1.0, 0.9, 1.5), (1.0, 1.5, 1.5)])
    def test_time_order(self, times):
        with pytest.raises(TimeOrderError):
            synthesize_steering(ProjectiveState.plus(), np.zeros((2, 2)), *times, ProjectiveState.plus())

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            synthesize_steering(
                ProjectiveState.plus(), np.zeros((3, 3)), TAU0, TAU, TAU1, ProjectiveState.plus()
            )

    def test_perturbation_outside_window(self, rng):
        u, h, v, prop = _instance(2, rng, 0.1)
        plan = synthesize_steering(u, h, TAU0, TAU, TAU1, v, propagator=prop)
        assert np.allclose(perturbation_at(plan, h, TAU), plan.H_tilde)
        with pytest.raises(WindowError):
            perturbation_at(plan, h, TAU1 + 0.01)


class TestIntegration:

    @pytest.mark.parametrize("dim", [2, 3, 4, 8])
    def test_ode_matches_closed_form(self, dim):
        rng = np.random.default_rng(200 + dim)
        for _ in range(100):
            u, h, v, prop = _instance(dim, rng, rng.uniform(0.05, 0.3))
            plan = synthesize_steering(u, h, TAU0, TAU, TAU1, v, propagator=prop)
            result = verify_steering_by_integration(plan, h, steps=1000, propagator=prop)
            assert result.achieved_error < 1e-8
            assert result.propagator_error < 1e-8
            assert result.integrated_cost == pytest.approx(plan.cost, abs=1e-9)

    def test_step_floor(self, rng):
        u, h, v, prop = _instance(2, rng, 0.1)
        plan = synthesize_steering(u, h, TAU0, TAU, TAU1, v, propagator=prop)
        with pytest.raises(PreconditionError):
            verify_steering_by_integration(plan, h, steps=50)

    def test_fourth_order_convergence(self):
        rng = np.random.default_rng(7)
        u, h, v, prop = _instance(3, rng, 0.3, scale=15.0)
        plan = synthesize_steering(u, h, TAU0, TAU, TAU1, v, propagator=prop)
        assert convergence_order(plan, h, (100, 200, 400)) >= 3.5

    def test_ladder_needs_two_rungs(self, rng):
        u, h, v, prop = _instance(2, rng, 0.1)
        plan = synthesize_steering(u, h, TAU0, TAU, TAU1, v, propagator=prop)
        with pytest.raises(PreconditionError):
            convergence_order(plan, h, (100,))
