"""
Recurrence service for the reversibility toolkit.

Finite-precision recurrence search: orbit stages alternating with limit
stages (heavily revisited buckets), multi-scale loop certificates at a base
point, extraction of approximately invariant internally transitive sets and
exact periodicity detection.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from services.chains import StateNet, StrongChain, all_pairs_costs, loop_costs
from services.collapse import RealizedDynamics
from services.errors import ChainError, PreconditionError, SizeCapError, StagnationError
from services.qstate import ProjectiveState, dagger, fs_distance, fs_distances, stack_states
from utils.logger import setup_logger


logger = setup_logger(__name__)

REVISIT_TOL = 1e-10
STAGE_ORBIT = 'orbit'
STAGE_LIMIT = 'limit'
CHUNK = 256


def _count_within(queries: np.ndarray, rows: np.ndarray, radius: float) -> np.ndarray:
    """For each query row, how many rows lie within FS radius (chunked Gram products)."""
    threshold = np.cos(radius)
    counts = np.empty(queries.shape[0], dtype=int)
    for start in range(0, queries.shape[0], CHUNK):
        overlap = np.abs(queries[start:start + CHUNK] @ dagger(rows))
        counts[start:start + CHUNK] = (overlap > threshold).sum(axis=1)
    return counts


@dataclass(eq=False)
class StageSequence:
    """
    Stage points in order, tagged orbit or limit.

    Orbit points after the first satisfy points[k+1] = T(points[k]); limit
    points carry the bucket radius and visit count that selected them.
    """

    points: List[ProjectiveState] = field(default_factory=list)
    kinds: List[str] = field(default_factory=list)
    provenance: List[Optional[dict]] = field(default_factory=list)
    terminated_by: str = 'budget'
    revisit: Optional[Tuple[int, int]] = None

    def append(self, point: ProjectiveState, kind: str, provenance: Optional[dict] = None) -> None:
        self.points.append(point)
        self.kinds.append(kind)
        self.provenance.append(provenance)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def limit_stages(self) -> int:
        return self.kinds.count(STAGE_LIMIT)

    def to_dict(self) -> dict:
        return {
            'points': [p.amplitudes for p in self.points],
            'kinds': self.kinds,
            'provenance': self.provenance,
            'terminated_by': self.terminated_by,
            'revisit': list(self.revisit) if self.revisit else None,
            'limit_stages': self.limit_stages,
        }


def _projective_mean(members: np.ndarray) -> ProjectiveState:
    """Top eigenvector of sum_k |x_k><x_k|."""
    density = members.T @ np.conj(members)
    _, eigvecs = np.linalg.eigh(density)
    return ProjectiveState(eigvecs[:, -1])


def run_stages(
    x0: ProjectiveState,
    dynamics: RealizedDynamics,
    orbit_len: int,
    max_limit_stages: int = 8,
    bucket_radius: float = 0.05,
    m_min: int = 5,
    revisit_tol: float = REVISIT_TOL
) -> StageSequence:
    """
    Alternate orbit runs with limit stages.

    Each orbit stage follows T for orbit_len steps. A limit stage then picks,
    among the latest orbit block, the point whose bucket (FS ball of
    bucket_radius) holds the most history points, provided at least m_min;
    the projective mean of that bucket becomes the next stage point.
    The search stops at the first exact revisit or when the limit-stage
    budget is spent.

    Raises:
        StagnationError: If no bucket of the latest block reaches m_min visits
    """
    if orbit_len < 1 or max_limit_stages < 0:
        raise PreconditionError("run_stages needs orbit_len >= 1 and max_limit_stages >= 0")

    seq = StageSequence()
    seq.append(x0, STAGE_ORBIT)
    capacity = (max_limit_stages + 1) * (orbit_len + 1) + 1
    rows = np.empty((capacity, x0.dim), dtype=complex)
    rows[0] = x0.amplitudes

    stage = 0
    while True:
        block_start = len(seq) - 1
        for _ in range(orbit_len):
            nxt, _ = dynamics.step(seq.points[-1], step=len(seq) - 1)
            n = len(seq)
            dists = fs_distances(nxt.amplitudes, rows[:n])
            earlier = int(np.argmin(dists))
            seq.append(nxt, STAGE_ORBIT)
            rows[n] = nxt.amplitudes
            if dists[earlier] < revisit_tol:
                seq.revisit = (earlier, n)
                seq.terminated_by = 'revisit'
                logger.info(f"Exact revisit: stage point {n} returns to {earlier}")
                return seq

        if stage == max_limit_stages:
            seq.terminated_by = 'budget'
            logger.info(f"Stage budget spent after {stage} limit stages, {len(seq)} points")
            return seq

        n = len(seq)
        history = rows[:n]
        counts = _count_within(history[block_start:], history, bucket_radius)
        if counts.max() < m_min:
            raise StagnationError(
                f"No bucket of radius {bucket_radius} reached {m_min} visits "
                f"(best {counts.max()}); raise orbit_len"
            )
        candidate = block_start + int(np.argmax(counts))
        members = history[fs_distances(history[candidate], history) < bucket_radius]
        limit = _projective_mean(members)
        if (fs_distances(limit.amplitudes, history) < bucket_radius).sum() < m_min:
            limit = seq.points[candidate]
        stage += 1
        seq.append(limit, STAGE_LIMIT, {
            'bucket_radius': bucket_radius,
            'visits': int(counts.max()),
            'candidate_index': candidate,
        })
        rows[n] = limit.amplitudes
        logger.info(f"Limit stage {stage}: bucket at point {candidate} with {counts.max()} visits")


@dataclass(eq=False)
class ScaleLoop:
    """A strong loop at the base for one scale."""

    epsilon: float
    chain: StrongChain
    method: str
    return_point: ProjectiveState

    def to_dict(self) -> dict:
        return {
            'epsilon': self.epsilon,
            'method': self.method,
            'length': self.chain.length,
            'cost': self.chain.total,
            'chain': self.chain.to_dict(),
        }


@dataclass(eq=False)
class RecurrenceCertificate:
    """Base point with one strong loop per tested scale (None where the search failed)."""

    base_index: int
    base_point: ProjectiveState
    scales: List[float]
    loops: List[Optional[ScaleLoop]]

    @property
    def failed_scales(self) -> List[float]:
        return [eps for eps, loop in zip(self.scales, self.loops) if loop is None]

    @property
    def partial(self) -> bool:
        return bool(self.failed_scales)

    @property
    def nested(self) -> bool:
        """Every scale certified, each return landing inside the previous scale's ball."""
        if self.partial:
            return False
        for prev, loop in zip(self.loops, self.loops[1:]):
            if fs_distance(loop.return_point, self.base_point) >= prev.epsilon:
                return False
        return True

    def to_dict(self) -> dict:
        return {
            'base_index': self.base_index,
            'base_point': self.base_point.amplitudes,
            'scales': self.scales,
            'loops': [loop.to_dict() if loop else None for loop in self.loops],
            'failed_scales': self.failed_scales,
            'partial': self.partial,
            'nested': self.nested,
        }


class _History:
    """Frozen stage history with T-images and the prefix sums of jump costs."""

    def __init__(self, seq: StageSequence, dynamics: RealizedDynamics):
        self.points = seq.points
        self.rows = stack_states(seq.points)
        images = []
        for i, point in enumerate(self.points):
            follows = i + 1 < len(self.points) and seq.kinds[i + 1] == STAGE_ORBIT
            images.append(self.points[i + 1] if follows else dynamics.step(point, step=i)[0])
        self.images = stack_states(images)
        jumps = np.array([
            fs_distance(ProjectiveState(self.images[i]), self.points[i + 1])
            for i in range(len(self.points) - 1)
        ])
        self.prefix = np.concatenate([[0.0], np.cumsum(jumps)])

    def __len__(self) -> int:
        return len(self.points)

    def rank_bases(self, radius: float, limit: int) -> List[int]:
        """Candidate bases by number of later revisits within radius; earliest wins ties."""
        n = min(len(self), limit)
        threshold = np.cos(radius)
        counts = np.empty(n, dtype=int)
        for start in range(0, n, CHUNK):
            stop = min(start + CHUNK, n)
            overlap = np.abs(self.rows[start:stop] @ dagger(self.rows))
            later = np.arange(self.rows.shape[0])[None, :] > np.arange(start, stop)[:, None]
            counts[start:stop] = ((overlap > threshold) & later).sum(axis=1)
        return sorted(range(n), key=lambda b: (-counts[b], b))

    def loop_closures(self, base: int) -> np.ndarray:
        """cost[j - base - 1] of the loop x_b..x_{j-1} -> x_b, for j = base+1..n."""
        returns = fs_distances(self.points[base].amplitudes, self.images[base:])
        return (self.prefix[base:] - self.prefix[base]) + returns


def _history_loop(
    history: _History,
    dynamics: RealizedDynamics,
    base: int,
    epsilon: float
) -> Optional[ScaleLoop]:
    closures = history.loop_closures(base)
    for offset in np.flatnonzero(closures < epsilon):
        j = base + int(offset) + 1
        points = history.points[base:j] + [history.points[base]]
        try:
            chain = StrongChain.build(points, dynamics, epsilon)
        except ChainError:
            continue
        return ScaleLoop(epsilon, chain, 'history', ProjectiveState(history.images[j - 1]))
    return None


def _net_loop(
    history: _History,
    dynamics: RealizedDynamics,
    base: int,
    epsilon: float,
    refine_nodes: int
) -> Optional[ScaleLoop]:
    """Shortest loop at the base on a net made of the history window starting there."""
    window = history.points[base:base + refine_nodes]
    if len(window) < 2:
        return None
    net = StateNet.from_states(dynamics, window)
    # reverse-graph distances from the base are forward distances into it
    back, paths = nx.single_source_dijkstra(net.graph.reverse(copy=False), 0, weight='weight')
    best_cost, best_path = net.costs[0, 0], [0, 0]
    for first, dist in back.items():
        if first != 0 and net.costs[0, first] + dist < best_cost:
            best_cost = net.costs[0, first] + dist
            best_path = [0] + list(reversed(paths[first]))
    if best_cost >= epsilon:
        return None
    try:
        chain = StrongChain.build([net.nodes[i] for i in best_path], dynamics, epsilon)
    except ChainError:
        return None
    return ScaleLoop(epsilon, chain, 'net', net.images[best_path[-2]])


def certify_recurrence(
    seq: StageSequence,
    dynamics: RealizedDynamics,
    scales: Sequence[float],
    max_bases: int = 8,
    base_search_limit: int = 2000,
    refine_nodes: int = 200
) -> RecurrenceCertificate:
    """
    Look for strong loops at a heavily revisited stage point, one per scale.

    Bases are ranked by the number of later stage points within half the
    finest scale. For each scale the loop is read off the stage history;
    failing that, a shortest loop is searched on a net of nearby history.
    The first base certified at every scale wins; otherwise the base with
    the most certified scales gives a partial certificate.
    """
    if len(seq) == 0:
        raise PreconditionError("Stage sequence is empty")
    scales = [float(eps) for eps in scales]
    if not scales or any(b >= a for a, b in zip(scales, scales[1:])) or scales[-1] <= 0:
        raise PreconditionError(f"Scales must be positive and strictly decreasing, got {scales}")

    history = _History(seq, dynamics)
    bases = history.rank_bases(min(scales) / 2.0, base_search_limit)[:max_bases]
    best: Optional[RecurrenceCertificate] = None
    for base in bases:
        loops = []
        for eps in scales:
            loop = _history_loop(history, dynamics, base, eps)
            if loop is None:
                loop = _net_loop(history, dynamics, base, eps, refine_nodes)
            loops.append(loop)
        cert = RecurrenceCertificate(base, seq.points[base], scales, loops)
        if not cert.partial:
            logger.info(f"Recurrence certificate at stage point {base} for scales {scales}")
            return cert
        if best is None or len(cert.failed_scales) < len(best.failed_scales):
            best = cert
    logger.warning(f"Partial certificate at stage point {best.base_index}: failed scales {best.failed_scales}")
    return best


@dataclass(eq=False)
class TransitiveSetApprox:
    """Approximately invariant, internally chain-transitive finite set at one scale."""

    members: List[ProjectiveState]
    scale: float
    pairwise_costs: np.ndarray
    invariance_gap: float
    base_index: int

    @property
    def invariant(self) -> bool:
        return self.invariance_gap < self.scale

    @property
    def transitive(self) -> bool:
        return bool(np.all(self.pairwise_costs < self.scale))

    def to_dict(self) -> dict:
        return {
            'members': [m.amplitudes for m in self.members],
            'scale': self.scale,
            'pairwise_costs': self.pairwise_costs,
            'invariance_gap': self.invariance_gap,
            'invariant': self.invariant,
            'transitive': self.transitive,
            'base_index': self.base_index,
        }


def _invariance_gaps(members: List[ProjectiveState], dynamics: RealizedDynamics) -> Tuple[np.ndarray, List[ProjectiveState]]:
    rows = stack_states(members)
    images = [dynamics.image(m) for m in members]
    gaps = np.array([fs_distances(img.amplitudes, rows).min() for img in images])
    return gaps, images


def internal_costs(members: List[ProjectiveState], dynamics: RealizedDynamics) -> np.ndarray:
    """Pairwise chain costs with chains inside the set; the diagonal holds the cheapest loop."""
    if len(members) == 1:
        image = dynamics.image(members[0])
        return np.array([[fs_distance(image, members[0])]])
    net = StateNet.from_states(dynamics, members)
    costs = all_pairs_costs(net)
    np.fill_diagonal(costs, loop_costs(net))
    return costs


def is_internally_transitive(members: List[ProjectiveState], dynamics: RealizedDynamics, epsilon: float) -> bool:
    """Strong epsilon-chains between all ordered pairs (loops included) through set points only."""
    return bool(np.all(internal_costs(members, dynamics) < epsilon))


def extract_transitive_set(
    seq: StageSequence,
    dynamics: RealizedDynamics,
    epsilon: float,
    size_cap: int = 4096,
    base_index: Optional[int] = None
) -> TransitiveSetApprox:
    """
    Stage points between the first and second visit to the base bucket,
    closed under T-images until every image lies within epsilon of the set.

    Args:
        seq: Stage history
        dynamics: T-context
        epsilon: Scale
        size_cap: Maximum member count during closure
        base_index: Base stage point (most revisited when omitted)

    Raises:
        PreconditionError: If the orbit never returns to the base bucket
        SizeCapError: If closure exceeds size_cap members
    """
    history = _History(seq, dynamics)
    radius = epsilon / 2.0
    if base_index is None:
        base_index = history.rank_bases(radius, len(history))[0]
    later = fs_distances(seq.points[base_index].amplitudes, history.rows[base_index + 1:])
    returns = np.flatnonzero(later < radius)
    if returns.size == 0:
        raise PreconditionError(f"No return to the bucket of stage point {base_index} at scale {epsilon}")
    second_visit = base_index + 1 + int(returns[0])
    members = list(seq.points[base_index:second_visit])
    if len(members) > size_cap:
        raise SizeCapError(f"Return segment has {len(members)} points, above cap {size_cap}")

    gaps, images = _invariance_gaps(members, dynamics)
    while gaps.max() >= epsilon:
        added = [images[i] for i in np.flatnonzero(gaps >= epsilon)]
        members.extend(added)
        if len(members) > size_cap:
            raise SizeCapError(f"Closure grew past {size_cap} members at scale {epsilon}")
        logger.debug(f"Closure added {len(added)} images, {len(members)} members")
        gaps, images = _invariance_gaps(members, dynamics)

    costs = internal_costs(members, dynamics)
    result = TransitiveSetApprox(members, epsilon, costs, float(gaps.max()), base_index)
    logger.info(
        f"Transitive set at scale {epsilon}: {len(members)} members, "
        f"invariant={result.invariant}, transitive={result.transitive}"
    )
    return result


@dataclass(eq=False)
class PeriodicOrbit:
    """Exact cycle reached after preperiod steps."""

    preperiod: int
    period: int
    orbit: List[ProjectiveState]

    def to_dict(self) -> dict:
        return {
            'preperiod': self.preperiod,
            'period': self.period,
            'orbit': [p.amplitudes for p in self.orbit],
        }


def detect_periodicity(
    x0: ProjectiveState,
    dynamics: RealizedDynamics,
    horizon: int,
    tol: float = REVISIT_TOL
) -> Optional[PeriodicOrbit]:
    """
    First exact revisit (FS distance < tol) within horizon steps.

    Returns:
        PeriodicOrbit, or None when the orbit does not close
    """
    if horizon < 1:
        raise PreconditionError(f"Horizon must be >= 1, got {horizon}")
    points = [x0]
    rows = np.empty((horizon + 1, x0.dim), dtype=complex)
    rows[0] = x0.amplitudes
    for n in range(1, horizon + 1):
        nxt, _ = dynamics.step(points[-1], step=n - 1)
        dists = fs_distances(nxt.amplitudes, rows[:n])
        earlier = int(np.argmin(dists))
        if dists[earlier] < tol:
            return PeriodicOrbit(earlier, n - earlier, points[earlier:n])
        points.append(nxt)
        rows[n] = nxt.amplitudes
    return None
