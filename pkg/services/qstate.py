"""
State-space service for the reversibility toolkit.

Complex linear algebra on a fixed finite-dimensional Hilbert space and the
Fubini-Study geometry of its projective space. Matrix functions are computed
from eigendecompositions; matrices stay small (desk scale).
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from services.errors import (
    BranchAmbiguityError,
    DimensionError,
    HermiticityError,
    PreconditionError,
    TimeOrderError,
    UnitarityError,
)
from utils.logger import setup_logger


logger = setup_logger(__name__)

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
NORM_TOL = 1e-12
BRANCH_TOL = 1e-12

# Matrix aliases: plain complex ndarrays whose invariants are checked on entry
HermitianMatrix = np.ndarray
UnitaryMatrix = np.ndarray


@dataclass(frozen=True)
class HilbertSpace:
    """Finite-dimensional Hilbert space C^dim; its rays form CP^(dim-1)."""

    dim: int

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 2:
            raise DimensionError(f"Hilbert space dimension must be an integer >= 2, got {self.dim!r}")

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)


def canonicalize(vector: np.ndarray) -> np.ndarray:
    """
    Normalize a vector and fix its global phase.

    The first component of largest modulus is made real and non-negative,
    giving every ray a unique representative.

    Raises:
        PreconditionError: If the vector is (numerically) zero
    """
    vec = np.asarray(vector, dtype=complex).ravel()
    norm = np.linalg.norm(vec)
    if norm < 1e-300:
        raise PreconditionError("Zero vector does not define a projective state")
    vec = vec / norm
    moduli = np.abs(vec)
    k = int(np.flatnonzero(moduli >= moduli.max() - NORM_TOL)[0])
    vec = vec * (np.conj(vec[k]) / moduli[k])
    vec[k] = moduli[k]
    return vec


class ProjectiveState:
    """
    A point of P(H): unit-norm amplitudes in canonical phase.

    Instances are immutable; the amplitude array is read-only.
    """

    __slots__ = ('_amplitudes',)

    def __init__(self, amplitudes: np.ndarray):
        vec = canonicalize(amplitudes)
        if vec.size < 2:
            raise DimensionError("Projective states need dimension >= 2")
        vec.setflags(write=False)
        self._amplitudes = vec

    @classmethod
    def from_vector(cls, vector: Sequence[complex]) -> 'ProjectiveState':
        return cls(np.asarray(vector, dtype=complex))

    @classmethod
    def basis(cls, dim: int, k: int) -> 'ProjectiveState':
        """Computational basis state |k>."""
        if not 0 <= k < dim:
            raise DimensionError(f"Basis index {k} outside dimension {dim}")
        vec = np.zeros(dim, dtype=complex)
        vec[k] = 1.0
        return cls(vec)

    @classmethod
    def plus(cls, dim: int = 2) -> 'ProjectiveState':
        """(|0> + |1>)/sqrt(2)."""
        vec = np.zeros(dim, dtype=complex)
        vec[:2] = 1.0
        return cls(vec)

    @classmethod
    def minus(cls, dim: int = 2) -> 'ProjectiveState':
        """(|0> - |1>)/sqrt(2)."""
        vec = np.zeros(dim, dtype=complex)
        vec[0], vec[1] = 1.0, -1.0
        return cls(vec)

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amplitudes

    @property
    def dim(self) -> int:
        return self._amplitudes.size

    @property
    def space(self) -> HilbertSpace:
        return HilbertSpace(self.dim)

    def evolve(self, unitary: UnitaryMatrix) -> 'ProjectiveState':
        """The ray [U u]."""
        return ProjectiveState(unitary @ self._amplitudes)

    def key(self, decimals: int = 12) -> bytes:
        """Rounded canonical amplitudes as bytes, for hashing and lookups."""
        rounded = np.round(self._amplitudes, decimals) + (0.0 + 0.0j)
        return rounded.tobytes()

    def to_pairs(self) -> list:
        return [[float(z.real), float(z.imag)] for z in self._amplitudes]

    def __repr__(self) -> str:
        body = ', '.join(f"{z.real:.6g}{z.imag:+.6g}j" for z in self._amplitudes)
        return f"ProjectiveState([{body}])"


def _check_same_space(a: ProjectiveState, b: ProjectiveState) -> None:
    if a.dim != b.dim:
        raise DimensionError(f"States live in dimensions {a.dim} and {b.dim}")


def fs_distances(a: np.ndarray, states: np.ndarray) -> np.ndarray:
    """
    Fubini-Study distances from one unit vector to many.

    Uses atan2(||b - <a,b> a||, |<a,b>|), which equals arccos|<a,b>| but
    keeps full precision for nearby rays.

    Args:
        a: Unit vector of shape (dim,)
        states: Unit vectors stacked as rows, shape (n, dim)

    Returns:
        Array of n distances in [0, pi/2]
    """
    rows = np.atleast_2d(states)
    if rows.shape[1] != a.shape[0]:
        raise DimensionError(f"States live in dimensions {a.shape[0]} and {rows.shape[1]}")
    inner = rows @ np.conj(a)
    perp = rows - inner[:, None] * a[None, :]
    return np.arctan2(np.linalg.norm(perp, axis=1), np.abs(inner))


def fs_distance(a: ProjectiveState, b: ProjectiveState) -> float:
    """
    Fubini-Study distance arccos(|<a,b>|) between two rays, in radians.

    Raises:
        DimensionError: If the states live in different dimensions
    """
    _check_same_space(a, b)
    return float(fs_distances(a.amplitudes, b.amplitudes[None, :])[0])


def stack_states(states: Sequence[ProjectiveState]) -> np.ndarray:
    """Amplitudes of several states as rows of one array."""
    return np.array([s.amplitudes for s in states], dtype=complex)


def dagger(matrix: np.ndarray) -> np.ndarray:
    return np.conj(np.asarray(matrix)).T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def check_hermitian(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """
    Validate M = M^dagger (tolerance relative to the largest entry).

    Returns:
        The matrix as a complex array

    Raises:
        HermiticityError: If the matrix is not square or not Hermitian
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise HermiticityError(f"Expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if np.max(np.abs(m - dagger(m))) > tol * scale:
        raise HermiticityError("Matrix is not Hermitian")
    return m


def check_unitary(matrix: np.ndarray, tol: float = UNITARY_TOL) -> np.ndarray:
    """
    Validate U^dagger U = I.

    Raises:
        UnitarityError: If the matrix is not square or not unitary
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise UnitarityError(f"Expected a square matrix, got shape {m.shape}")
    if np.max(np.abs(dagger(m) @ m - np.eye(m.shape[0]))) > tol:
        raise UnitarityError("Matrix is not unitary")
    return m


def expm_hermitian(generator: HermitianMatrix, t: float = 1.0) -> UnitaryMatrix:
    """exp(-i G t) for Hermitian G, via eigendecomposition."""
    g = np.asarray(generator, dtype=complex)
    if t == 0:
        return np.eye(g.shape[0], dtype=complex)
    eigvals, eigvecs = np.linalg.eigh(g)
    return (eigvecs * np.exp(-1j * eigvals * t)) @ dagger(eigvecs)


def evolve(hamiltonian: HermitianMatrix, t1: float, t0: float) -> UnitaryMatrix:
    """
    Free propagator U(t1, t0) = exp(-i H (t1 - t0)) for a constant Hamiltonian.

    Raises:
        HermiticityError: If H is not Hermitian
        TimeOrderError: If t1 < t0
    """
    h = check_hermitian(hamiltonian)
    if t1 < t0:
        raise TimeOrderError(f"evolve requires t1 >= t0, got t1={t1}, t0={t0}")
    return expm_hermitian(h, t1 - t0)


class FreePropagator:
    """
    U(t1, t0) for one constant Hamiltonian, reusing a single eigendecomposition.

    Negative intervals are allowed here and give the inverse propagator.
    """

    def __init__(self, hamiltonian: HermitianMatrix):
        h = check_hermitian(hamiltonian)
        self.hamiltonian = h
        self._eigvals, self._eigvecs = np.linalg.eigh(h)
        self._eigvecs_dag = dagger(self._eigvecs)

    def __call__(self, t1: float, t0: float) -> UnitaryMatrix:
        dt = t1 - t0
        if dt == 0:
            return np.eye(self.hamiltonian.shape[0], dtype=complex)
        return (self._eigvecs * np.exp(-1j * self._eigvals * dt)) @ self._eigvecs_dag


def unitary_log(unitary: UnitaryMatrix) -> HermitianMatrix:
    """
    Principal generator G with exp(-i G) = U, eigenphases in (-pi, pi].

    The unitary is diagonalized by a complex Schur decomposition (diagonal for
    normal matrices), so degenerate spectra are handled.

    Raises:
        UnitarityError: If U is not unitary
        BranchAmbiguityError: If an eigenvalue lies within 1e-12 of -1
    """
    u = check_unitary(unitary)
    schur_form, basis = scipy.linalg.schur(u, output='complex')
    angles = np.angle(np.diag(schur_form))
    if np.any(np.pi - np.abs(angles) < BRANCH_TOL):
        raise BranchAmbiguityError(
            "Eigenphase on the branch cut at -pi; perturb the input (e.g. jitter the window)"
        )
    generator = (basis * -angles) @ dagger(basis)
    return (generator + dagger(generator)) / 2


PAULI = {
    'x': np.array([[0, 1], [1, 0]], dtype=complex),
    'y': np.array([[0, -1j], [1j, 0]], dtype=complex),
    'z': np.array([[1, 0], [0, -1]], dtype=complex),
}


def rotation_hamiltonian(angle: float, axis: str = 'z') -> HermitianMatrix:
    """
    Qubit Hamiltonian (angle/2) sigma_axis: one unit of time rotates the
    Bloch vector by angle, i.e. moves rays by FS angle up to angle/2.
    """
    if axis not in PAULI:
        raise PreconditionError(f"Rotation axis must be one of x, y, z, got {axis!r}")
    return (angle / 2.0) * PAULI[axis]


def operator_norm(matrix: np.ndarray) -> float:
    """Largest singular value."""
    m = np.asarray(matrix)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def random_state(dim: int, rng: np.random.Generator) -> ProjectiveState:
    """Haar-random ray from a normalized complex Gaussian vector."""
    return ProjectiveState(rng.normal(size=dim) + 1j * rng.normal(size=dim))


def random_states(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Rows of normalized complex Gaussian vectors (not phase-canonicalized)."""
    z = rng.normal(size=(count, dim)) + 1j * rng.normal(size=(count, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def random_unitary(dim: int, rng: np.random.Generator) -> UnitaryMatrix:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> HermitianMatrix:
    """Random Hermitian matrix with operator norm equal to scale."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = (z + dagger(z)) / 2
    return h * (scale / operator_norm(h))


def state_at_distance(
    origin: ProjectiveState,
    delta: float,
    rng: np.random.Generator,
    direction: Optional[np.ndarray] = None
) -> ProjectiveState:
    """
    A state at FS distance delta (0 <= delta <= pi/2) from origin.

    Args:
        origin: Reference state
        delta: Target angle
        rng: Source of the random orthogonal direction
        direction: Optional fixed direction (projected orthogonal to origin)
    """
    if not 0 <= delta <= np.pi / 2:
        raise PreconditionError(f"FS angle must lie in [0, pi/2], got {delta}")
    w = origin.amplitudes
    if direction is None:
        direction = rng.normal(size=w.size) + 1j * rng.normal(size=w.size)
    perp = direction - w * np.vdot(w, direction)
    perp = perp / np.linalg.norm(perp)
    return ProjectiveState(np.cos(delta) * w + np.sin(delta) * perp)
