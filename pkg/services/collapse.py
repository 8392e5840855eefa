"""
Collapse service for the reversibility toolkit.

PVM collapse events, outcome domains D_j, choice rules (selectors evaluated
along the orbit) and the realized single-branch map T.
"""

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.errors import (
    AdmissibilityError,
    DimensionError,
    LabelError,
    ObservableError,
    PreconditionError,
    ZeroBornWeightError,
)
from services.qstate import (
    HermitianMatrix,
    ProjectiveState,
    UnitaryMatrix,
    check_unitary,
    dagger,
    evolve,
    fs_distance,
    fs_distances,
    random_states,
    stack_states,
    unitary_log,
)
from utils.logger import setup_logger


logger = setup_logger(__name__)

PVM_TOL = 1e-10
ZERO_WEIGHT = 1e-12
MATCH_TOL = 1e-9

# 0 is the blank (no-collapse) outcome; 1..m index the projectors
OutcomeLabel = int


@dataclass(frozen=True, eq=False)
class Observable:
    """
    Spectral projections P_1..P_m of one self-adjoint observable.

    The blank channel P_0 = I is implicit. PVM axioms are checked on
    construction.
    """

    projectors: Tuple[np.ndarray, ...]
    eigenvalues: Tuple[float, ...]

    def __post_init__(self):
        projectors = tuple(np.asarray(p, dtype=complex) for p in self.projectors)
        object.__setattr__(self, 'projectors', projectors)
        object.__setattr__(self, 'eigenvalues', tuple(float(x) for x in self.eigenvalues))
        self._validate()

    def _validate(self) -> None:
        if not self.projectors:
            raise ObservableError("Observable needs at least one projector")
        dim = self.projectors[0].shape[0]
        identity = np.eye(dim)
        for j, p in enumerate(self.projectors, start=1):
            if p.shape != (dim, dim):
                raise ObservableError(f"Projector {j} has shape {p.shape}, expected {(dim, dim)}")
            if np.max(np.abs(p - dagger(p))) > PVM_TOL:
                raise ObservableError(f"Projector {j} is not Hermitian")
            if np.max(np.abs(p @ p - p)) > PVM_TOL:
                raise ObservableError(f"Projector {j} is not idempotent")
            if np.real(np.trace(p)) < 0.5:
                raise ObservableError(f"Projector {j} is zero")
        for j in range(len(self.projectors)):
            for k in range(j + 1, len(self.projectors)):
                if np.max(np.abs(self.projectors[j] @ self.projectors[k])) > PVM_TOL:
                    raise ObservableError(f"Projectors {j + 1} and {k + 1} are not orthogonal")
        if np.max(np.abs(sum(self.projectors) - identity)) > PVM_TOL:
            raise ObservableError("Projectors do not sum to the identity")
        if len(self.eigenvalues) != len(self.projectors):
            raise ObservableError(
                f"{len(self.eigenvalues)} eigenvalues given for {len(self.projectors)} projectors"
            )
        if len(set(self.eigenvalues)) != len(self.eigenvalues):
            raise ObservableError("Eigenvalues must be pairwise distinct")

    @classmethod
    def from_eigenbasis(
        cls,
        partition: Sequence[int],
        basis: Optional[np.ndarray] = None,
        eigenvalues: Optional[Sequence[float]] = None
    ) -> 'Observable':
        """
        Build the PVM grouping basis vectors by label.

        Args:
            partition: Label in 1..m for each basis column
            basis: Orthonormal basis as columns (identity when omitted)
            eigenvalues: lambda_1..lambda_m (defaults to 1..m)
        """
        dim = len(partition)
        b = np.eye(dim, dtype=complex) if basis is None else np.asarray(basis, dtype=complex)
        if b.shape != (dim, dim):
            raise ObservableError(f"Basis shape {b.shape} does not match partition of length {dim}")
        labels = sorted(set(partition))
        if labels != list(range(1, len(labels) + 1)):
            raise ObservableError("Partition labels must be exactly 1..m")
        projectors = []
        for label in labels:
            cols = b[:, [i for i, lab in enumerate(partition) if lab == label]]
            projectors.append(cols @ dagger(cols))
        if eigenvalues is None:
            eigenvalues = [float(label) for label in labels]
        return cls(tuple(projectors), tuple(eigenvalues))

    @classmethod
    def computational(cls, dim: int) -> 'Observable':
        """Rank-1 PVM of the computational basis, |k><k| with label k+1."""
        return cls.from_eigenbasis(list(range(1, dim + 1)))

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    @property
    def outcome_count(self) -> int:
        """m, the number of non-blank outcomes."""
        return len(self.projectors)

    @property
    def labels(self) -> range:
        return range(self.outcome_count + 1)

    def projector(self, label: OutcomeLabel) -> np.ndarray:
        self.check_label(label)
        if label == 0:
            return np.eye(self.dim, dtype=complex)
        return self.projectors[label - 1]

    def operator(self) -> HermitianMatrix:
        """A = sum_j lambda_j P_j."""
        return sum(lam * p for lam, p in zip(self.eigenvalues, self.projectors))

    def check_label(self, label: OutcomeLabel) -> None:
        if not isinstance(label, (int, np.integer)) or not 0 <= label <= self.outcome_count:
            raise LabelError(f"Outcome label {label!r} outside 0..{self.outcome_count}")

    def to_dict(self) -> dict:
        return {
            'projectors': list(self.projectors),
            'eigenvalues': list(self.eigenvalues),
        }


def _check_dims(u: ProjectiveState, unitary: UnitaryMatrix, observable: Observable) -> None:
    if not (u.dim == unitary.shape[0] == observable.dim):
        raise DimensionError(
            f"State dim {u.dim}, unitary {unitary.shape}, observable dim {observable.dim} disagree"
        )


def born_weights(u: ProjectiveState, unitary: UnitaryMatrix, observable: Observable) -> np.ndarray:
    """
    Born weights after the unitary step.

    Returns:
        Array of m+1 entries: entry 0 is 1 (blank channel), entry j is ||P_j U u||^2
    """
    _check_dims(u, unitary, observable)
    psi = unitary @ u.amplitudes
    weights = np.empty(observable.outcome_count + 1)
    weights[0] = 1.0
    for j, p in enumerate(observable.projectors, start=1):
        weights[j] = float(np.real(np.vdot(psi, p @ psi)))
    return np.clip(weights, 0.0, 1.0)


def apply_collapse(
    u: ProjectiveState,
    unitary: UnitaryMatrix,
    observable: Observable,
    label: OutcomeLabel,
    zero_weight: float = ZERO_WEIGHT
) -> ProjectiveState:
    """
    Fiber map f_j([u]) = P_j U u / ||P_j U u||; label 0 gives [U u].

    Raises:
        ZeroBornWeightError: If ||P_j U u|| <= zero_weight, i.e. [u] is not in D_j
    """
    _check_dims(u, unitary, observable)
    observable.check_label(label)
    psi = unitary @ u.amplitudes
    if label == 0:
        return ProjectiveState(psi)
    collapsed = observable.projectors[label - 1] @ psi
    if np.linalg.norm(collapsed) <= zero_weight:
        raise ZeroBornWeightError(f"Outcome {label} has zero Born weight for this state")
    return ProjectiveState(collapsed)


class ChoiceRule(ABC):
    """
    Per-step outcome selector g. The realized itinerary of [u] is
    g(u), g(T u), g(T^2 u), ... which makes it compatible with the shift.

    Rules are immutable and must be deterministic functions of the state.
    """

    kind: str = ''

    @abstractmethod
    def choose(self, u: ProjectiveState, unitary: UnitaryMatrix, observable: Observable) -> OutcomeLabel:
        """Return the outcome label for state u."""

    def to_dict(self) -> dict:
        return {'kind': self.kind}


class BlankOnlyRule(ChoiceRule):
    """Never collapses: T is the free unitary step."""

    kind = 'blank-only'

    def choose(self, u, unitary, observable):
        return 0


class BornGreedyRule(ChoiceRule):
    """Picks the non-blank outcome of largest Born weight; lowest label wins ties."""

    kind = 'born-greedy'

    def __init__(self, tie_tol: float = 1e-12):
        self.tie_tol = tie_tol

    def choose(self, u, unitary, observable):
        weights = born_weights(u, unitary, observable)[1:]
        best = weights.max()
        return int(np.flatnonzero(weights >= best - self.tie_tol)[0]) + 1


class HashedBornRule(ChoiceRule):
    """
    Hashes the canonical state with a seed to a uniform number and samples
    {0} with probability p0, else the Born distribution over 1..m.

    A deterministic function of the state with no shared RNG stream.
    """

    kind = 'hashed-born'

    def __init__(self, seed: int, blank_probability: float = 0.25, zero_weight: float = ZERO_WEIGHT):
        if not 0.0 <= blank_probability <= 1.0:
            raise PreconditionError(f"blank_probability must lie in [0, 1], got {blank_probability}")
        self.seed = int(seed)
        self.blank_probability = float(blank_probability)
        self.zero_weight = zero_weight

    def uniform(self, u: ProjectiveState) -> float:
        digest = hashlib.sha256(self.seed.to_bytes(8, 'little', signed=True) + u.key()).digest()
        return int.from_bytes(digest[:8], 'little') / 2.0 ** 64

    def choose(self, u, unitary, observable):
        weights = born_weights(u, unitary, observable)
        probs = np.empty_like(weights)
        probs[0] = self.blank_probability
        admissible = np.sqrt(weights[1:]) > self.zero_weight
        probs[1:] = np.where(admissible, (1.0 - self.blank_probability) * weights[1:], 0.0)
        support = np.flatnonzero(probs > 0)
        if support.size == 0:
            return 0
        cumulative = np.cumsum(probs[support])
        idx = int(np.searchsorted(cumulative, self.uniform(u) * cumulative[-1], side='right'))
        return int(support[min(idx, support.size - 1)])

    def to_dict(self):
        return {'kind': self.kind, 'seed': self.seed, 'blank_probability': self.blank_probability}


class TableRule(ChoiceRule):
    """Explicit labels on a finite state set; other states defer to a fallback rule."""

    kind = 'table'

    def __init__(
        self,
        entries: Sequence[Tuple[ProjectiveState, OutcomeLabel]],
        fallback: Optional[ChoiceRule] = None,
        match_tol: float = MATCH_TOL
    ):
        self.entries = tuple((state, int(label)) for state, label in entries)
        self.fallback = fallback or BlankOnlyRule()
        self.match_tol = match_tol
        self._table = stack_states([s for s, _ in self.entries]) if self.entries else None

    def lookup(self, u: ProjectiveState) -> Optional[OutcomeLabel]:
        if self._table is None or self._table.shape[1] != u.dim:
            return None
        dists = fs_distances(u.amplitudes, self._table)
        best = int(np.argmin(dists))
        return self.entries[best][1] if dists[best] < self.match_tol else None

    def choose(self, u, unitary, observable):
        label = self.lookup(u)
        return self.fallback.choose(u, unitary, observable) if label is None else label

    def to_dict(self):
        return {
            'kind': self.kind,
            'entries': [{'state': s.amplitudes, 'label': lab} for s, lab in self.entries],
            'fallback': self.fallback.to_dict(),
        }


def step_realized(
    u: ProjectiveState,
    unitary: UnitaryMatrix,
    observable: Observable,
    rule: ChoiceRule,
    zero_weight: float = ZERO_WEIGHT,
    step: Optional[int] = None
) -> Tuple[ProjectiveState, OutcomeLabel]:
    """
    One step of the induced map: T([u]) = f_{g(u)}([u]).

    Raises:
        AdmissibilityError: If the rule picks a label of zero Born weight
    """
    label = rule.choose(u, unitary, observable)
    observable.check_label(label)
    if label != 0:
        weight = born_weights(u, unitary, observable)[label]
        if np.sqrt(weight) <= zero_weight:
            raise AdmissibilityError(f"Rule '{rule.kind}' chose outcome {label} of zero Born weight", step=step)
    return apply_collapse(u, unitary, observable, label, zero_weight=0.0), label


@dataclass(eq=False)
class RealizedDynamics:
    """
    The T-context (U, A, g): constant Hamiltonian H with U = exp(-iH),
    an observable and a choice rule.
    """

    hamiltonian: HermitianMatrix
    observable: Observable
    rule: ChoiceRule
    zero_weight: float = ZERO_WEIGHT
    unitary: UnitaryMatrix = field(init=False, repr=False)

    def __post_init__(self):
        self.hamiltonian = np.asarray(self.hamiltonian, dtype=complex)
        self.unitary = evolve(self.hamiltonian, 1.0, 0.0)
        if self.unitary.shape[0] != self.observable.dim:
            raise DimensionError(
                f"Hamiltonian dim {self.unitary.shape[0]} and observable dim {self.observable.dim} disagree"
            )

    @classmethod
    def from_unitary(
        cls,
        unitary: UnitaryMatrix,
        observable: Observable,
        rule: ChoiceRule,
        zero_weight: float = ZERO_WEIGHT
    ) -> 'RealizedDynamics':
        """Context whose one-step unitary is U, with H the principal generator of U."""
        return cls(unitary_log(check_unitary(unitary)), observable, rule, zero_weight)

    @property
    def dim(self) -> int:
        return self.observable.dim

    def step(self, u: ProjectiveState, step: Optional[int] = None) -> Tuple[ProjectiveState, OutcomeLabel]:
        return step_realized(u, self.unitary, self.observable, self.rule, self.zero_weight, step=step)

    def image(self, u: ProjectiveState) -> ProjectiveState:
        return self.step(u)[0]

    def orbit(self, x0: ProjectiveState, steps: int) -> List[ProjectiveState]:
        """x0, T x0, ..., T^steps x0."""
        points = [x0]
        for n in range(steps):
            points.append(self.step(points[-1], step=n)[0])
        return points

    def to_dict(self) -> dict:
        return {
            'hamiltonian': self.hamiltonian,
            'observable': self.observable.to_dict(),
            'choice_rule': self.rule.to_dict(),
        }


def realize_itinerary(
    u: ProjectiveState,
    unitary: UnitaryMatrix,
    observable: Observable,
    rule: ChoiceRule,
    steps: int,
    zero_weight: float = ZERO_WEIGHT
) -> Tuple[List[OutcomeLabel], List[ProjectiveState]]:
    """
    Realized itinerary D([u])_n = g(T^n u) for n < steps, with the visited states.

    Returns:
        (labels of length steps, states of length steps + 1)
    """
    if steps < 1:
        raise PreconditionError(f"Itinerary length must be >= 1, got {steps}")
    states = [u]
    labels: List[OutcomeLabel] = []
    for n in range(steps):
        nxt, label = step_realized(states[-1], unitary, observable, rule, zero_weight, step=n)
        labels.append(label)
        states.append(nxt)
    return labels, states


def compatibility_holds(
    u: ProjectiveState,
    unitary: UnitaryMatrix,
    observable: Observable,
    rule: ChoiceRule,
    steps: int
) -> bool:
    """sigma(D(u)) == D(T u) on the shared prefix of length steps - 1, compared exactly."""
    labels, states = realize_itinerary(u, unitary, observable, rule, steps)
    shifted, _ = realize_itinerary(states[1], unitary, observable, rule, steps)
    return labels[1:] == shifted[:steps - 1]


@dataclass(frozen=True, eq=False)
class SkewPoint:
    """Point (omega, [u]) of the skew product, omega given as a finite prefix."""

    itinerary: Tuple[OutcomeLabel, ...]
    state: ProjectiveState

    def __post_init__(self):
        object.__setattr__(self, 'itinerary', tuple(int(j) for j in self.itinerary))


def step_skew(point: SkewPoint, unitary: UnitaryMatrix, observable: Observable) -> SkewPoint:
    """
    F(omega, [u]) = (sigma omega, f_{omega_0}([u])).

    Raises:
        ZeroBornWeightError: If [u] is not in D_{omega_0}
    """
    if not point.itinerary:
        raise PreconditionError("Skew point has an empty itinerary prefix")
    head, *tail = point.itinerary
    state = apply_collapse(point.state, unitary, observable, head)
    return SkewPoint(tuple(tail), state)


def skew_distance(p: SkewPoint, q: SkewPoint) -> float:
    """Product metric d_Omega + d_FS, with d_Omega = 2^-N for the longest shared prefix N."""
    shared = 0
    for a, b in zip(p.itinerary, q.itinerary):
        if a != b:
            break
        shared += 1
    return 2.0 ** (-shared) + fs_distance(p.state, q.state)


@dataclass
class LabelDensity:
    """Nearest-neighbour statistics for one outcome label."""

    label: OutcomeLabel
    attained: int
    radius_max: float
    radius_mean: float
    radius_median: float

    def to_dict(self) -> dict:
        return {
            'label': self.label,
            'attained': self.attained,
            'radius_max': self.radius_max,
            'radius_mean': self.radius_mean,
            'radius_median': self.radius_median,
        }


def sample_label_density(
    rule: ChoiceRule,
    unitary: UnitaryMatrix,
    observable: Observable,
    samples: int,
    seed: int,
    anchors: Sequence[ProjectiveState] = (),
    chunk: int = 512
) -> Dict[OutcomeLabel, LabelDensity]:
    """
    Empirical check of the density property of the outcome sets {g = j}.

    Samples random states (plus optional anchor states), labels them with the
    rule, and for every label j measures the FS distance from each sampled
    state to the nearest sampled state labelled j. Unattained labels report
    an infinite radius.

    Args:
        rule: Choice rule under test
        unitary: One-step unitary U
        observable: PVM
        samples: Number of random states (>= 100)
        seed: Sampling seed
        anchors: Extra states appended to the sample set
        chunk: Rows per vectorized block

    Returns:
        Mapping label -> LabelDensity
    """
    if samples < 100:
        raise PreconditionError(f"Label density needs at least 100 samples, got {samples}")
    rng = np.random.default_rng(seed)
    rows = random_states(observable.dim, samples, rng)
    states = [ProjectiveState(r) for r in rows] + list(anchors)
    sampled = stack_states(states)
    labels = np.array([rule.choose(s, unitary, observable) for s in states])

    result: Dict[OutcomeLabel, LabelDensity] = {}
    for j in observable.labels:
        members = sampled[labels == j]
        if members.shape[0] == 0:
            result[j] = LabelDensity(j, 0, float('inf'), float('inf'), float('inf'))
            continue
        nearest = np.zeros(sampled.shape[0])
        others = np.flatnonzero(labels != j)
        for start in range(0, others.size, chunk):
            idx = others[start:start + chunk]
            overlap = np.abs(sampled[idx] @ dagger(members))
            nearest[idx] = np.arccos(np.clip(overlap.max(axis=1), 0.0, 1.0))
        result[j] = LabelDensity(
            j,
            int(members.shape[0]),
            float(nearest.max()),
            float(nearest.mean()),
            float(np.median(nearest)),
        )
    logger.debug(f"Label density ({rule.kind}, {samples} samples): "
                 + ', '.join(f"{j}: {d.radius_max:.4g}" for j, d in result.items()))
    return result


def domain_fraction(
    unitary: UnitaryMatrix,
    observable: Observable,
    label: OutcomeLabel,
    samples: int,
    seed: int,
    zero_weight: float = ZERO_WEIGHT
) -> float:
    """Fraction of random states lying in D_j = {||P_j U u|| > 0}."""
    rng = np.random.default_rng(seed)
    rows = random_states(observable.dim, samples, rng)
    psi = rows @ unitary.T
    projected = psi @ observable.projector(label).T
    return float(np.mean(np.linalg.norm(projected, axis=1) > zero_weight))
