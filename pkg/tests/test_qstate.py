"""
Tests for projective states, FS geometry and matrix functions.
"""

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from conftest import rng_seeds, state_vectors
from services.errors import (
    BranchAmbiguityError,
    DimensionError,
    HermiticityError,
    PreconditionError,
    TimeOrderError,
    UnitarityError,
)
from services.qstate import (
    FreePropagator,
    HilbertSpace,
    ProjectiveState,
    check_unitary,
    commutator,
    dagger,
    evolve,
    expm_hermitian,
    fs_distance,
    fs_distances,
    operator_norm,
    random_hermitian,
    random_state,
    random_unitary,
    rotation_hamiltonian,
    stack_states,
    state_at_distance,
    unitary_log,
)


class TestProjectiveState:

    def test_global_phase_is_removed(self):
        state = ProjectiveState(np.array([1j, 0.0]))
        assert np.allclose(state.amplitudes, [1.0, 0.0])

    def test_rays_share_one_representative(self, rng):
        vec = rng.normal(size=4) + 1j * rng.normal(size=4)
        a = ProjectiveState(vec)
        b = ProjectiveState(3.5 * np.exp(0.7j) * vec)
        assert np.max(np.abs(a.amplitudes - b.amplitudes)) < 1e-12
        assert a.key() == b.key()

    def test_amplitudes_are_read_only(self):
        state = ProjectiveState.plus()
        with pytest.raises(ValueError):
            state.amplitudes[0] = 0.0

    def test_zero_vector_rejected(self):
        with pytest.raises(PreconditionError):
            ProjectiveState(np.zeros(3))

    def test_basis_index_checked(self):
        with pytest.raises(DimensionError):
            ProjectiveState.basis(2, 2)

    def test_hilbert_space_needs_dimension_two(self):
        assert HilbertSpace(3).identity().shape == (3, 3)
        with pytest.raises(DimensionError):
            HilbertSpace(1)


class TestFubiniStudy:

    def test_known_values(self):
        zero, one, plus = ProjectiveState.basis(2, 0), ProjectiveState.basis(2, 1), ProjectiveState.plus()
        assert fs_distance(zero, one) == pytest.approx(np.pi / 2)
        assert fs_distance(zero, plus) == pytest.approx(np.pi / 4)
        assert fs_distance(plus, plus) < 1e-15

    @pytest.mark.parametrize("dim", [2, 3, 5])
    @seed(1)
    @settings(max_examples=100, deadline=None)
    @given(data=st.data())
    def test_metric_axioms(self, dim, data):
        a, b, c = (ProjectiveState(data.draw(state_vectors(dim))) for _ in range(3))
        ab, bc, ac = fs_distance(a, b), fs_distance(b, c), fs_distance(a, c)
        assert 0.0 <= ab <= np.pi / 2
        assert ab == pytest.approx(fs_distance(b, a), abs=1e-14)
        assert fs_distance(a, a) < 1e-12
        assert ac <= ab + bc + 1e-12

    @pytest.mark.parametrize("dim", [2, 4])
    @seed(1)
    @settings(max_examples=100, deadline=None)
    @given(data=st.data(), unitary_seed=rng_seeds)
    def test_unitary_invariance(self, dim, data, unitary_seed):
        u = random_unitary(dim, np.random.default_rng(unitary_seed))
        a, b = (ProjectiveState(data.draw(state_vectors(dim))) for _ in range(2))
        assert fs_distance(a.evolve(u), b.evolve(u)) == pytest.approx(fs_distance(a, b), abs=1e-12)

    def test_matches_arccos_away_from_zero(self, rng):
        for _ in range(20):
            a, b = random_state(3, rng), random_state(3, rng)
            overlap = abs(np.vdot(a.amplitudes, b.amplitudes))
            assert fs_distance(a, b) == pytest.approx(np.arccos(overlap), abs=1e-10)

    def test_precise_for_nearby_rays(self, rng):
        origin = random_state(4, rng)
        near = state_at_distance(origin, 1e-9, rng)
        assert fs_distance(origin, near) == pytest.approx(1e-9, rel=1e-5)

    def test_vectorized_form_agrees(self, rng):
        states = [random_state(3, rng) for _ in range(10)]
        dists = fs_distances(states[0].amplitudes, stack_states(states))
        assert np.allclose(dists, [fs_distance(states[0], s) for s in states], atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            fs_distance(ProjectiveState.basis(2, 0), ProjectiveState.basis(3, 0))


class TestPropagators:

    def test_zero_hamiltonian_gives_identity(self):
        assert np.allclose(evolve(np.zeros((3, 3)), 2.0, 0.5), np.eye(3))

    def test_matches_scipy_expm(self, rng):
        h = random_hermitian(4, rng, scale=3.0)
        assert np.allclose(evolve(h, 1.7, 0.2), scipy.linalg.expm(-1j * h * 1.5), atol=1e-10)

    @seed(1)
    @settings(max_examples=100, deadline=None)
    @given(
        hamiltonian_seed=rng_seeds,
        times=st.lists(st.floats(min_value=0.0, max_value=5.0), min_size=3, max_size=3),
    )
    def test_composition(self, hamiltonian_seed, times):
        h = random_hermitian(3, np.random.default_rng(hamiltonian_seed))
        t0, t1, t2 = sorted(times)
        assert np.allclose(evolve(h, t2, t0), evolve(h, t2, t1) @ evolve(h, t1, t0), atol=1e-10)

    def test_time_order_enforced(self):
        with pytest.raises(TimeOrderError):
            evolve(np.zeros((2, 2)), 0.0, 1.0)

    def test_non_hermitian_rejected(self):
        with pytest.raises(HermiticityError):
            evolve(np.array([[0, 1], [0, 0]]), 1.0, 0.0)

    def test_free_propagator_matches_evolve_and_inverts(self, rng):
        h = random_hermitian(3, rng, scale=2.0)
        prop = FreePropagator(h)
        assert np.allclose(prop(1.4, 0.3), evolve(h, 1.4, 0.3), atol=1e-12)
        assert np.allclose(prop(0.3, 1.4) @ prop(1.4, 0.3), np.eye(3), atol=1e-12)

    def test_rotation_hamiltonian_period(self):
        u = evolve(rotation_hamiltonian(2 * np.pi / 5, 'z'), 1.0, 0.0)
        state = ProjectiveState.plus()
        step = state.evolve(u)
        assert fs_distance(state, step) == pytest.approx(np.pi / 5)
        for _ in range(4):
            step = step.evolve(u)
        assert fs_distance(state, step) < 1e-10

    def test_rotation_axis_checked(self):
        with pytest.raises(PreconditionError):
            rotation_hamiltonian(1.0, 'w')


class TestUnitaryLog:

    @pytest.mark.parametrize("dim", [2, 3, 4, 8])
    @seed(1)
    @settings(max_examples=50, deadline=None)
    @given(unitary_seed=rng_seeds)
    def test_inverts_exponential(self, dim, unitary_seed):
        u = random_unitary(dim, np.random.default_rng(unitary_seed))
        g = unitary_log(u)
        assert np.allclose(g, dagger(g), atol=1e-12)
        assert np.all(np.abs(np.linalg.eigvalsh(g)) <= np.pi + 1e-12)
        assert np.allclose(expm_hermitian(g), u, atol=1e-10)

    def test_degenerate_spectrum(self):
        u = np.diag(np.exp(-1j * np.array([0.4, 0.4, -1.1])))
        assert np.allclose(unitary_log(u), np.diag([0.4, 0.4, -1.1]), atol=1e-12)

    def test_branch_cut_is_ambiguous(self):
        with pytest.raises(BranchAmbiguityError):
            unitary_log(np.diag([1.0, -1.0]))

    def test_non_unitary_rejected(self):
        with pytest.raises(UnitarityError):
            unitary_log(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestGenerators:

    def test_random_unitary_is_unitary(self, rng):
        check_unitary(random_unitary(5, rng))

    def test_random_hermitian_scale(self, rng):
        h = random_hermitian(4, rng, scale=2.5)
        assert operator_norm(h) == pytest.approx(2.5)
        assert np.allclose(h, dagger(h))

    @pytest.mark.parametrize("delta", [0.0, 0.01, 0.3, np.pi / 2])
    def test_state_at_distance(self, rng, delta):
        origin = random_state(3, rng)
        assert fs_distance(origin, state_at_distance(origin, delta, rng)) == pytest.approx(delta, abs=1e-12)

    def test_commutator_of_paulis(self):
        x, y = rotation_hamiltonian(2.0, 'x'), rotation_hamiltonian(2.0, 'y')
        assert np.allclose(commutator(x, y), 2j * rotation_hamiltonian(2.0, 'z'))
