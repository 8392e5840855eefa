"""
Shared fixtures for the reversibility toolkit tests.
"""

import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from services.collapse import (
    BlankOnlyRule,
    BornGreedyRule,
    HashedBornRule,
    Observable,
    RealizedDynamics,
    TableRule,
)
from services.qstate import ProjectiveState, rotation_hamiltonian, unitary_log


GOLDEN_ANGLE = 2 * np.pi * (np.sqrt(5) - 1) / 2

rng_seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def state_vectors(dim: int) -> st.SearchStrategy:
    """Complex vectors of norm at least 0.1, parts drawn from [-1, 1]."""
    parts = arrays(np.float64, (2, dim), elements=st.floats(min_value=-1.0, max_value=1.0, allow_subnormal=False))
    return parts.map(lambda p: p[0] + 1j * p[1]).filter(lambda v: np.linalg.norm(v) >= 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(2025)


@pytest.fixture
def qubit_observable():
    return Observable.computational(2)


@pytest.fixture
def golden_rotation(qubit_observable):
    """Blank-only qubit rotated about x by the golden angle: an irrational rotation of a great circle."""
    return RealizedDynamics(rotation_hamiltonian(GOLDEN_ANGLE, 'x'), qubit_observable, BlankOnlyRule())


@pytest.fixture
def pentagon_rotation(qubit_observable):
    """Blank-only qubit rotated about z by 2 pi / 5: |+> has period 5."""
    return RealizedDynamics(rotation_hamiltonian(2 * np.pi / 5, 'z'), qubit_observable, BlankOnlyRule())


@pytest.fixture
def frozen_qubit(qubit_observable):
    """H = 0 with blank-only rule: every state is fixed."""
    return RealizedDynamics(np.zeros((2, 2)), qubit_observable, BlankOnlyRule())


@pytest.fixture
def greedy_qubit(qubit_observable):
    """H = 0 with Born-greedy collapse: two absorbing basis states."""
    return RealizedDynamics(np.zeros((2, 2)), qubit_observable, BornGreedyRule())


@pytest.fixture
def hashed_qubit(qubit_observable):
    return RealizedDynamics(rotation_hamiltonian(GOLDEN_ANGLE, 'x'), qubit_observable, HashedBornRule(seed=7))


@pytest.fixture
def shift_cycle():
    """Qutrit whose table rule walks |0> -> |1> -> |2> -> |0> by collapse after a cyclic shift."""
    shift = np.roll(np.eye(3), 1, axis=0)
    entries = [(ProjectiveState.basis(3, k), (k + 1) % 3 + 1) for k in range(3)]
    return RealizedDynamics(unitary_log(shift), Observable.computational(3), TableRule(entries))


def state_near(angle: float) -> ProjectiveState:
    """cos(angle)|0> + sin(angle)|1>, at FS distance angle from |0>."""
    return ProjectiveState(np.array([np.cos(angle), np.sin(angle)]))
