"""
Chain service for the reversibility toolkit.

Strong chains (pseudo-orbits with summed jump budget), minimal forward cost
estimation on sampled state nets, composite steering along a chain, the
operational reversibility report and the naive grid refinement diagnostic.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from services.collapse import OutcomeLabel, RealizedDynamics
from services.errors import BudgetError, ChainError, InfeasibleError, PreconditionError
from services.qstate import (
    FreePropagator,
    HermitianMatrix,
    ProjectiveState,
    UnitaryMatrix,
    fs_distance,
    fs_distances,
    random_states,
    stack_states,
)
from services.steering import (
    IntegrationResult,
    SteeringPlan,
    synthesize_steering,
    verify_steering_by_integration,
)
from utils.logger import setup_logger


logger = setup_logger(__name__)

DENSE_MAX_DIM = 4
DENSE_MAX_NODES = 500
ASYMMETRY_TOL = 1e-9


def chain_cost(
    points: Sequence[ProjectiveState],
    dynamics: RealizedDynamics
) -> Tuple[List[float], float]:
    """
    Jump costs d(T(x_i), x_{i+1}) of a point sequence and their sum.

    Raises:
        ChainError: If fewer than two points are given
        AdmissibilityError: If the choice rule is inadmissible along the way
    """
    if len(points) < 2:
        raise ChainError(f"A chain needs at least 2 points, got {len(points)}")
    jumps = []
    for i in range(len(points) - 1):
        image, _ = dynamics.step(points[i], step=i)
        jumps.append(fs_distance(image, points[i + 1]))
    return jumps, float(sum(jumps))


def is_epsilon_chain(points: Sequence[ProjectiveState], dynamics: RealizedDynamics, epsilon: float) -> bool:
    """Plain pseudo-orbit test: every single jump below epsilon."""
    jumps, _ = chain_cost(points, dynamics)
    return max(jumps) < epsilon


@dataclass(eq=False)
class StrongChain:
    """x_0..x_n with summed jump costs below epsilon."""

    points: List[ProjectiveState]
    jump_costs: List[float]
    epsilon: float

    def __post_init__(self):
        if len(self.points) < 2:
            raise ChainError("A strong chain needs at least one jump")
        if len(self.jump_costs) != len(self.points) - 1:
            raise ChainError(f"{len(self.jump_costs)} jump costs for {len(self.points)} points")
        if not self.total < self.epsilon:
            raise ChainError(f"Chain cost {self.total:.12g} is not below epsilon {self.epsilon}")

    @classmethod
    def build(cls, points: Sequence[ProjectiveState], dynamics: RealizedDynamics, epsilon: float) -> 'StrongChain':
        jumps, _ = chain_cost(points, dynamics)
        return cls(list(points), jumps, epsilon)

    @property
    def total(self) -> float:
        return float(sum(self.jump_costs))

    @property
    def length(self) -> int:
        return len(self.jump_costs)

    def to_dict(self) -> dict:
        return {
            'points': [p.amplitudes for p in self.points],
            'jump_costs': self.jump_costs,
            'total': self.total,
            'epsilon': self.epsilon,
        }


class StateNet:
    """
    Finite set of nodes with forward edge costs C[i, j] = d(T(node_i), node_j).

    Anchor states come first in the node list and are exempt from the
    thinning radius. Immutable after construction.
    """

    def __init__(
        self,
        dynamics: RealizedDynamics,
        nodes: List[ProjectiveState],
        anchor_count: int = 0,
        seed: Optional[int] = None,
        thinning_radius: float = 0.0,
        oversample: int = 0,
        neighbors: int = 16
    ):
        if len(nodes) < 2:
            raise PreconditionError(f"A state net needs at least 2 nodes, got {len(nodes)}")
        self.dynamics = dynamics
        self.nodes = list(nodes)
        self.anchor_count = anchor_count
        self.seed = seed
        self.thinning_radius = thinning_radius
        self.oversample = oversample
        self.neighbors = neighbors

        self._rows = stack_states(self.nodes)
        steps = [dynamics.step(node) for node in self.nodes]
        self.images = [image for image, _ in steps]
        self.labels: List[OutcomeLabel] = [label for _, label in steps]
        self.costs = np.array([fs_distances(image.amplitudes, self._rows) for image in self.images])
        self.dense = dynamics.dim <= DENSE_MAX_DIM and len(self.nodes) <= DENSE_MAX_NODES
        self.graph = self._build_graph()
        logger.info(
            f"State net: {len(self.nodes)} nodes ({anchor_count} anchors), "
            f"{self.graph.number_of_edges()} edges, {'dense' if self.dense else 'sparse'}"
        )

    @classmethod
    def build(
        cls,
        dynamics: RealizedDynamics,
        node_count: int,
        seed: int,
        thinning_radius: float = 0.0,
        oversample: int = 8,
        anchors: Sequence[ProjectiveState] = (),
        neighbors: int = 16
    ) -> 'StateNet':
        """
        Sample a net by farthest-point thinning of complex Gaussian candidates.

        Args:
            dynamics: The T-context the edge costs are computed for
            node_count: Total node count including anchors
            seed: Sampling seed
            thinning_radius: Stop adding nodes once the cover radius drops below it
            oversample: Candidates drawn per requested node
            anchors: States placed first in the node list
            neighbors: Out-degree per node when the graph is sparsified
        """
        nodes = list(anchors)
        wanted = node_count - len(nodes)
        if wanted > 0:
            rng = np.random.default_rng(seed)
            candidates = random_states(dynamics.dim, max(wanted * max(oversample, 1), wanted), rng)
            nodes.extend(cls._farthest_points(candidates, nodes, wanted, thinning_radius))
        return cls(dynamics, nodes, len(anchors), seed, thinning_radius, oversample, neighbors)

    @classmethod
    def from_states(cls, dynamics: RealizedDynamics, states: Sequence[ProjectiveState]) -> 'StateNet':
        """Net whose nodes are exactly the given states."""
        return cls(dynamics, list(states), anchor_count=len(states))

    @staticmethod
    def _farthest_points(
        candidates: np.ndarray,
        fixed: Sequence[ProjectiveState],
        count: int,
        radius: float
    ) -> List[ProjectiveState]:
        """Greedy max-min selection; the first pick is the candidate farthest from the fixed states."""
        min_dist = np.full(candidates.shape[0], np.inf)
        for state in fixed:
            min_dist = np.minimum(min_dist, fs_distances(state.amplitudes, candidates))
        chosen: List[ProjectiveState] = []
        nxt = 0 if not fixed else int(np.argmax(min_dist))
        while len(chosen) < count:
            if chosen or fixed:
                if min_dist[nxt] < max(radius, 1e-12):
                    logger.debug(f"Thinning stopped at {len(chosen)} sampled nodes (cover radius {min_dist[nxt]:.4g})")
                    break
            chosen.append(ProjectiveState(candidates[nxt]))
            min_dist = np.minimum(min_dist, fs_distances(candidates[nxt], candidates))
            nxt = int(np.argmax(min_dist))
        return chosen

    def _build_graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        n = len(self.nodes)
        graph.add_nodes_from(range(n))
        for i in range(n):
            if self.dense:
                targets = [j for j in range(n) if j != i]
            else:
                order = np.argsort(self.costs[i], kind='stable')
                targets = [int(j) for j in order if j != i][:self.neighbors]
            graph.add_weighted_edges_from((i, j, float(self.costs[i, j])) for j in targets)
        return graph

    def __len__(self) -> int:
        return len(self.nodes)

    def nearest(self, state: ProjectiveState) -> Tuple[int, float]:
        """Index of the node closest to state, and its FS distance."""
        dists = fs_distances(state.amplitudes, self._rows)
        idx = int(np.argmin(dists))
        return idx, float(dists[idx])

    def resolution(self) -> float:
        """Largest distance from a sampled node to its nearest other node (coarse cover estimate)."""
        gaps = []
        for i in range(len(self.nodes)):
            dists = fs_distances(self._rows[i], self._rows)
            dists[i] = np.inf
            gaps.append(dists.min())
        return float(max(gaps))

    def to_dict(self) -> dict:
        return {
            'node_count': len(self.nodes),
            'anchor_count': self.anchor_count,
            'seed': self.seed,
            'thinning_radius': self.thinning_radius,
            'oversample': self.oversample,
            'neighbors': self.neighbors,
            'dense': self.dense,
            'resolution': self.resolution(),
        }


def min_cost_search(
    net: StateNet,
    source: int,
    target: int,
    cost_cap: float = np.inf,
    path_length_cap: Optional[int] = None
) -> Tuple[float, List[int]]:
    """
    Cheapest forward chain between two net nodes (Dijkstra on jump costs).

    Returns:
        (cost, path of node indices); source == target gives (0.0, [source])

    Raises:
        InfeasibleError: If the target is unreachable, or only above the caps
    """
    for idx in (source, target):
        if not 0 <= idx < len(net):
            raise PreconditionError(f"Node index {idx} outside net of {len(net)} nodes")
    if source == target:
        return 0.0, [source]
    try:
        cost, path = nx.single_source_dijkstra(net.graph, source, target, weight='weight')
    except nx.NetworkXNoPath:
        raise InfeasibleError(f"Node {target} is unreachable from node {source}")
    if cost > cost_cap:
        raise InfeasibleError(f"Cheapest chain {source}->{target} costs {cost:.6g}, above cap {cost_cap}")
    if path_length_cap is not None and len(path) - 1 > path_length_cap:
        raise InfeasibleError(f"Cheapest chain {source}->{target} has {len(path) - 1} jumps, above cap {path_length_cap}")
    return float(cost), [int(i) for i in path]


def path_to_chain(net: StateNet, path: Sequence[int], epsilon: float) -> StrongChain:
    """Replay a net path as a StrongChain, revalidating its cost."""
    return StrongChain.build([net.nodes[i] for i in path], net.dynamics, epsilon)


def all_pairs_costs(net: StateNet, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Forward cost matrix among the chosen nodes (diagonal 0, unreachable inf)."""
    chosen = list(range(len(net))) if indices is None else [int(i) for i in indices]
    costs = np.full((len(chosen), len(chosen)), np.inf)
    for a, src in enumerate(chosen):
        lengths = nx.single_source_dijkstra_path_length(net.graph, src, weight='weight')
        for b, dst in enumerate(chosen):
            costs[a, b] = 0.0 if src == dst else lengths.get(dst, np.inf)
    return costs


def loop_costs(net: StateNet, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Cheapest chain of at least one jump from each chosen node back to itself."""
    chosen = list(range(len(net))) if indices is None else [int(i) for i in indices]
    reverse = net.graph.reverse(copy=False)
    result = np.empty(len(chosen))
    for a, node in enumerate(chosen):
        back = nx.single_source_dijkstra_path_length(reverse, node, weight='weight')
        best = net.costs[node, node]
        for other, dist in back.items():
            if other != node:
                best = min(best, net.costs[node, other] + dist)
        result[a] = best
    return result


@dataclass
class PairReversibility:
    """Forward and backward cost estimates for one ordered pair."""

    source: int
    target: int
    forward_cost: float
    backward_cost: float
    symmetric: bool
    arrow_of_time: bool
    resolution: float

    def to_dict(self) -> dict:
        return {
            'source': self.source,
            'target': self.target,
            'forward_cost': self.forward_cost,
            'backward_cost': self.backward_cost,
            'symmetric': self.symmetric,
            'arrow_of_time': self.arrow_of_time,
            'resolution': self.resolution,
        }


@dataclass
class ReversibilityReport:
    """Per-pair results and the verdict at scale epsilon."""

    epsilon: float
    pairs: List[PairReversibility] = field(default_factory=list)

    @property
    def reversible(self) -> bool:
        """Operationally reversible at epsilon: every pair symmetric."""
        return all(p.symmetric for p in self.pairs)

    @property
    def arrow_of_time(self) -> bool:
        return any(p.arrow_of_time for p in self.pairs)

    def to_dict(self) -> dict:
        return {
            'epsilon': self.epsilon,
            'pairs': [p.to_dict() for p in self.pairs],
            'reversible': self.reversible,
            'arrow_of_time': self.arrow_of_time,
        }


def reversibility_report(
    net: StateNet,
    pairs: Sequence[Tuple[ProjectiveState, ProjectiveState]],
    epsilon: float,
    cost_cap: float = np.inf
) -> ReversibilityReport:
    """
    Estimate d(u->v) and d(v->u) for each pair on the net.

    Pair states are snapped to their nearest nodes; the snap distance is
    reported as the pair's resolution. Infeasible directions (unreachable
    or above cost_cap) report inf.
    """
    lengths: Dict[int, Dict[int, float]] = {}

    def cost(source: int, target: int) -> float:
        if source == target:
            return 0.0
        if source not in lengths:
            lengths[source] = nx.single_source_dijkstra_path_length(net.graph, source, weight='weight')
        value = lengths[source].get(target, np.inf)
        return float(value) if value <= cost_cap else float('inf')

    report = ReversibilityReport(epsilon=epsilon)
    for u, v in pairs:
        i, du = net.nearest(u)
        j, dv = net.nearest(v)
        forward = cost(i, j)
        backward = cost(j, i)
        symmetric = forward < epsilon and backward < epsilon
        arrow = not symmetric and abs(forward - backward) > ASYMMETRY_TOL
        report.pairs.append(PairReversibility(i, j, forward, backward, symmetric, arrow, max(du, dv)))
    logger.info(
        f"Reversibility at epsilon={epsilon}: {len(report.pairs)} pairs, "
        f"reversible={report.reversible}, arrow={report.arrow_of_time}"
    )
    return report


@dataclass(eq=False)
class SteeredRun:
    """
    A chain realized by steering: one plan per jump, perturbation windows
    (k + 1/3, k + 2/3) inside the unit segment [k, k + 1].
    """

    chain: StrongChain
    plans: List[SteeringPlan]
    labels: List[OutcomeLabel]
    step_errors: List[float]

    @property
    def total_cost(self) -> float:
        return float(sum(plan.cost for plan in self.plans))

    @property
    def final_error(self) -> float:
        return self.step_errors[-1]

    def to_dict(self) -> dict:
        return {
            'chain': self.chain.to_dict(),
            'plans': [plan.to_dict() for plan in self.plans],
            'labels': self.labels,
            'step_errors': self.step_errors,
            'total_cost': self.total_cost,
            'final_error': self.final_error,
        }


def steer_along_chain(chain: StrongChain, dynamics: RealizedDynamics) -> SteeredRun:
    """
    Replace every chain jump by a steering perturbation.

    Jump k takes w_k = T(x_{k-1}) at time k onto x_k's free image
    U(k + 2/3, k) x_k at time k + 2/3, so the perturbed unitary segment
    followed by the realized collapse reproduces T(x_k) at time k + 1.

    Raises:
        NearOrthogonalError: If some jump is too close to pi/2
    """
    prop = FreePropagator(dynamics.hamiltonian)
    forward = prop(2.0 / 3.0, 0.0)
    backward = prop(0.0, 2.0 / 3.0)
    plans: List[SteeringPlan] = []
    labels: List[OutcomeLabel] = []
    errors: List[float] = []
    for k in range(1, len(chain.points)):
        w_k, label = dynamics.step(chain.points[k - 1], step=k - 1)
        labels.append(label)
        target = ProjectiveState(forward @ chain.points[k].amplitudes)
        plan = synthesize_steering(w_k, dynamics.hamiltonian, k, k + 1.0 / 3.0, k + 2.0 / 3.0, target, prop)
        plans.append(plan)
        steered = plan.closed_form_V @ prop(plan.window[0], plan.tau0) @ w_k.amplitudes
        errors.append(fs_distance(ProjectiveState(backward @ steered), chain.points[k]))
        logger.debug(f"Jump {k}: delta={plan.delta:.6g}, label={label}, error={errors[-1]:.3g}")
    run = SteeredRun(chain, plans, labels, errors)
    logger.info(f"Steered {len(plans)} jumps: total cost {run.total_cost:.6g}, final error {run.final_error:.3g}")
    return run


def composite_propagator(run: SteeredRun, hamiltonian: HermitianMatrix) -> UnitaryMatrix:
    """
    Left-ordered product of the steered segments over [0, n + 1].

    Only a single unitary when no collapse fires along the run, i.e. every
    realized label before the last point is blank; then W x_0 ~ U x_n.
    """
    if any(label != 0 for label in run.labels):
        raise ChainError("Composite propagator requires a run whose realized labels are all blank")
    prop = FreePropagator(hamiltonian)
    total = prop(1.0, 0.0)
    for plan in run.plans:
        tau, tau1 = plan.window
        segment = prop(plan.tau0 + 1.0, tau1) @ plan.closed_form_V @ prop(tau, plan.tau0)
        total = segment @ total
    return total


def verify_run_by_integration(
    run: SteeredRun,
    hamiltonian: HermitianMatrix,
    steps: int = 1000
) -> List[IntegrationResult]:
    """ODE check of every plan of a run."""
    prop = FreePropagator(hamiltonian)
    return [verify_steering_by_integration(plan, hamiltonian, steps, prop) for plan in run.plans]


@dataclass
class GridScale:
    """Outcome of the cover scan at one scale."""

    scale: float
    radius: float
    center_index: int
    revisit_index: int
    center: ProjectiveState
    loop_cost: float
    nests_previous: bool

    def to_dict(self) -> dict:
        return {
            'scale': self.scale,
            'radius': self.radius,
            'center_index': self.center_index,
            'revisit_index': self.revisit_index,
            'center': self.center.amplitudes,
            'loop_cost': self.loop_cost,
            'nests_previous': self.nests_previous,
        }


def grid_refinement_diagnostic(
    dynamics: RealizedDynamics,
    x0: ProjectiveState,
    scales: Sequence[float],
    budget: int = 4096
) -> List[GridScale]:
    """
    Naive scale-by-scale cover scan.

    At scale eps the orbit is covered online by balls of radius eps/2
    centered at orbit points; the first orbit point falling into an existing
    ball picks the repeated cell, whose return closes a strong eps-loop.
    Cells nest when the finer ball lies inside the coarser one.

    Raises:
        BudgetError: If some scale sees no revisit within budget steps
    """
    if not scales:
        raise PreconditionError("Grid diagnostic needs at least one scale")
    orbit = dynamics.orbit(x0, budget)
    rows = stack_states(orbit)

    results: List[GridScale] = []
    for scale in scales:
        radius = scale / 2.0
        centers: List[int] = []
        hit: Optional[Tuple[int, int]] = None
        for n in range(len(orbit)):
            if centers:
                dists = fs_distances(rows[n], rows[centers])
                k = int(np.argmin(dists))
                if dists[k] < radius:
                    hit = (centers[k], n)
                    break
            centers.append(n)
        if hit is None:
            raise BudgetError(f"No cell revisited at scale {scale} within {budget} steps")
        center_index, revisit_index = hit
        loop_cost = fs_distance(orbit[revisit_index], orbit[center_index])
        if results:
            prev = results[-1]
            nests = fs_distance(orbit[center_index], prev.center) + radius <= prev.radius + 1e-15
        else:
            nests = True
        results.append(GridScale(
            scale, radius, center_index, revisit_index, orbit[center_index], loop_cost, nests
        ))
        logger.debug(f"Scale {scale}: cell {center_index} revisited at {revisit_index}, nests={nests}")
    return results
