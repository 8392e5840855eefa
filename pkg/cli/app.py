"""
Experiment runner for the reversibility toolkit.

Each command is a numbered workflow over one scenario: build the objects,
run the library operations, write the reports.
"""

from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from cli.reports import (
    CERTIFICATE_HEADER,
    CHAIN_HEADER,
    GRID_HEADER,
    ReportWriter,
    certificate_rows,
    chain_rows,
    grid_rows,
    state_header,
    state_rows,
)
from services.chains import (
    ASYMMETRY_TOL,
    StateNet,
    grid_refinement_diagnostic,
    min_cost_search,
    path_to_chain,
    reversibility_report,
    steer_along_chain,
    verify_run_by_integration,
)
from services.collapse import compatibility_holds, realize_itinerary
from services.errors import BudgetError, ReversibilityError
from services.qstate import FreePropagator, ProjectiveState, fs_distance, operator_norm
from services.recurrence import (
    certify_recurrence,
    detect_periodicity,
    extract_transitive_set,
    run_stages,
)
from services.scenario_service import Scenario, build_scenario
from services.steering import synthesize_steering, verify_steering_by_integration
from utils.logger import setup_logger


DEFAULT_WINDOW = (1.0, 4.0 / 3.0, 5.0 / 3.0)


class ExperimentRunner:
    """Runs one command against a resolved scenario and writes its reports."""

    def __init__(self, scenario: Scenario, output_dir: Optional[str] = None):
        self.logger = setup_logger(__name__)
        self.scenario = scenario
        self.dynamics = scenario.dynamics
        directory = output_dir or scenario.value('output.directory', 'reports')
        self.writer = ReportWriter(directory, scenario.value('output.formats', ['json', 'csv']))

    def _step(self, index: int, total: int, message: str) -> None:
        self.logger.info(f"Step {index}/{total}: {message}")

    def _done(self, message: str) -> None:
        self.logger.info(f"✓ {message}")

    def _x0(self, spec: Any) -> ProjectiveState:
        return self.scenario.state(spec if spec is not None else 'basis:0', 'x0')

    def _epsilon(self, epsilon: Optional[float]) -> float:
        return float(epsilon) if epsilon is not None else min(self.scenario.scales)

    def _distinct(self, states: Sequence[ProjectiveState]) -> List[ProjectiveState]:
        """Drop states within the match tolerance of an earlier one."""
        tol = float(self.scenario.value('tolerances.match'))
        kept: List[ProjectiveState] = []
        for state in states:
            if all(fs_distance(state, other) > tol for other in kept):
                kept.append(state)
        return kept

    def _build_net(self, anchors: Sequence[ProjectiveState]) -> StateNet:
        value = self.scenario.value
        return StateNet.build(
            self.dynamics,
            node_count=max(int(value('net.node_count')), len(anchors) + 2),
            seed=int(value('net.seed')),
            thinning_radius=float(value('net.thinning_radius')),
            oversample=int(value('net.oversample')),
            anchors=anchors,
            neighbors=int(value('net.neighbors')),
        )

    def _stages(self, x0: ProjectiveState):
        value = self.scenario.value
        bucket = value('stages.bucket_radius') or min(self.scenario.scales) / 2.0
        return run_stages(
            x0,
            self.dynamics,
            orbit_len=int(value('budgets.orbit_len')),
            max_limit_stages=int(value('budgets.max_limit_stages')),
            bucket_radius=float(bucket),
            m_min=int(value('stages.m_min')),
            revisit_tol=float(value('tolerances.revisit')),
        )

    # simulate

    def simulate(self, x0_spec: Any, steps: int) -> Dict[str, Any]:
        """Realize the itinerary of x0 for N steps and write the state trace."""
        total = 3
        self._step(1, total, f"Realizing {steps} steps")
        x0 = self._x0(x0_spec)
        labels, states = realize_itinerary(
            x0, self.dynamics.unitary, self.dynamics.observable, self.dynamics.rule, steps,
            self.dynamics.zero_weight,
        )
        self._done(f"{len(states)} states, {sum(1 for j in labels if j)} collapses")

        self._step(2, total, "Checking shift compatibility")
        compatible = compatibility_holds(
            x0, self.dynamics.unitary, self.dynamics.observable, self.dynamics.rule, steps
        )
        if not compatible:
            self.logger.warning("Itinerary of T(x0) is not the shifted itinerary of x0")
        self._done(f"Compatible: {compatible}")

        self._step(3, total, "Writing reports")
        self.writer.write_scenario(self.scenario.config)
        report = {
            'command': 'simulate',
            'steps': steps,
            'labels': labels,
            'states': [s.amplitudes for s in states],
            'compatible': compatible,
            'dynamics': self.dynamics.to_dict(),
        }
        self.writer.write_csv('states.csv', state_header(self.dynamics.dim), state_rows(states, labels))
        self.writer.write_json('simulate.json', report)
        self._done("Reports written")
        return report

    # steer

    def steer(self, u_spec: Any, v_spec: Any, window: Tuple[float, float, float] = DEFAULT_WINDOW) -> Dict[str, Any]:
        """Synthesize one steering plan and verify it in closed form and by ODE."""
        total = 3
        tau0, tau, tau1 = window
        hamiltonian = self.dynamics.hamiltonian
        prop = FreePropagator(hamiltonian)

        self._step(1, total, "Synthesizing steering plan")
        u = self.scenario.state(u_spec, 'x0')
        v = self.scenario.state(v_spec, 'target')
        plan = synthesize_steering(u, hamiltonian, tau0, tau, tau1, v, prop)
        self._done(f"delta = {plan.delta:.12g}, cost = {plan.cost:.12g}")

        self._step(2, total, "Verifying closed form and integrating")
        reached = ProjectiveState(plan.closed_form_V @ prop(tau, tau0) @ u.amplitudes)
        closed_form = {
            'fs_error': fs_distance(reached, v),
            'distance_to_free': operator_norm(plan.closed_form_V - prop(tau1, tau)),
        }
        ode = verify_steering_by_integration(plan, hamiltonian, int(self.scenario.value('steering.ode_steps')), prop)
        self._done(f"ODE propagator error {ode.propagator_error:.3g}")

        self._step(3, total, "Writing reports")
        self.writer.write_scenario(self.scenario.config)
        report = {
            'command': 'steer',
            'plan': plan.to_dict(),
            'closed_form': closed_form,
            'ode': ode.to_dict(),
            'cost': plan.cost,
        }
        self.writer.write_json('steer.json', report)
        self._done("Reports written")
        return report

    # chain-search

    def chain_search(self, x0_spec: Any, target_spec: Any, epsilon: Optional[float] = None) -> Dict[str, Any]:
        """Cheapest net chain from x0 to target, realized by steering and ODE-verified."""
        total = 4
        eps = self._epsilon(epsilon)
        x0 = self._x0(x0_spec)
        target = self.scenario.state(target_spec, 'target')

        self._step(1, total, "Building state net")
        net = self._build_net([x0, target])
        self._done(f"{len(net)} nodes")

        self._step(2, total, f"Searching cheapest chain below epsilon = {eps}")
        cost, path = min_cost_search(
            net, 0, 1, cost_cap=eps, path_length_cap=int(self.scenario.value('budgets.path_length_cap'))
        )
        self._done(f"Cost {cost:.6g} over {len(path) - 1} jumps")

        report: Dict[str, Any] = {
            'command': 'chain-search',
            'epsilon': eps,
            'net': net.to_dict(),
            'cost': cost,
            'path': path,
        }
        if len(path) < 2:
            self.logger.info("Source and target coincide; nothing to steer")
            self.writer.write_scenario(self.scenario.config)
            self.writer.write_json('chain.json', report)
            return report

        self._step(3, total, "Steering along the chain")
        chain = path_to_chain(net, path, eps)
        run = steer_along_chain(chain, self.dynamics)
        checks = verify_run_by_integration(run, self.dynamics.hamiltonian, int(self.scenario.value('steering.ode_steps')))
        self._done(f"Total cost {run.total_cost:.6g}, final error {run.final_error:.3g}")

        self._step(4, total, "Writing reports")
        self.writer.write_scenario(self.scenario.config)
        report['run'] = run.to_dict()
        report['ode'] = [c.to_dict() for c in checks]
        self.writer.write_csv('chain.csv', CHAIN_HEADER, chain_rows(run, path))
        self.writer.write_json('chain.json', report)
        self._done("Reports written")
        return report

    # recurrence

    def recurrence(self, x0_spec: Any) -> Dict[str, Any]:
        """Stage search, multi-scale certificate and periodicity check."""
        total = 4
        x0 = self._x0(x0_spec)

        self._step(1, total, "Running orbit and limit stages")
        seq = self._stages(x0)
        self._done(f"{len(seq)} stage points, {seq.limit_stages} limit stages, stopped by {seq.terminated_by}")

        self._step(2, total, f"Certifying recurrence at scales {self.scenario.scales}")
        cert = certify_recurrence(seq, self.dynamics, self.scenario.scales)
        self._done(f"Base {cert.base_index}, failed scales {cert.failed_scales}, nested {cert.nested}")

        self._step(3, total, "Checking for exact periodicity")
        periodic = detect_periodicity(
            x0, self.dynamics, int(self.scenario.value('budgets.horizon')), float(self.scenario.value('tolerances.revisit'))
        )
        self._done(f"Period {periodic.period}" if periodic else "No exact revisit within horizon")

        self._step(4, total, "Writing reports")
        self.writer.write_scenario(self.scenario.config)
        report = {
            'command': 'recurrence',
            'stages': seq.to_dict(),
            'certificate': cert.to_dict(),
            'periodicity': periodic.to_dict() if periodic else None,
        }
        self.writer.write_csv('certificate.csv', CERTIFICATE_HEADER, certificate_rows(cert))
        self.writer.write_json('recurrence.json', report)
        self._done("Reports written")
        return report

    # reversibility

    def _phase(self, report: Dict[str, Any], name: str, action: Callable[[], Any]) -> Any:
        """Run one pipeline phase; failures are recorded instead of aborting."""
        try:
            result = action()
        except ReversibilityError as e:
            self.logger.error(f"Phase '{name}' failed: {e}", exc_info=True)
            report['phases'][name] = {'status': 'incomplete', 'error': type(e).__name__, 'message': str(e)}
            return None
        report['phases'][name] = {'status': 'complete'}
        return result

    def reversibility(self, x0_spec: Any, epsilon: Optional[float] = None) -> Dict[str, Any]:
        """
        Full pipeline: stages, certificate, transitive set, pairwise
        reversibility on a net and a steered spot check.
        """
        total = 5
        eps = self._epsilon(epsilon)
        x0 = self._x0(x0_spec)
        report: Dict[str, Any] = {'command': 'reversibility', 'epsilon': eps, 'phases': {}}

        self._step(1, total, "Running stages and certifying recurrence")
        seq = self._phase(report, 'stages', lambda: self._stages(x0))
        cert = None
        if seq is not None:
            report['stages'] = {'points': len(seq), 'limit_stages': seq.limit_stages,
                                'terminated_by': seq.terminated_by}
            cert = self._phase(report, 'certificate', lambda: certify_recurrence(seq, self.dynamics, self.scenario.scales))
        if cert is not None:
            report['certificate'] = cert.to_dict()

        self._step(2, total, f"Extracting transitive set at epsilon = {eps}")
        members: List[ProjectiveState] = []
        if seq is not None:
            tset = self._phase(report, 'transitive_set', lambda: extract_transitive_set(
                seq, self.dynamics, eps, int(self.scenario.value('budgets.size_cap')),
                cert.base_index if cert is not None else None,
            ))
            if tset is not None:
                members = tset.members
                report['transitive_set'] = tset.to_dict()
                self._done(f"{len(members)} members, transitive {tset.transitive}")

        self._step(3, total, "Estimating pairwise forward costs")
        pairs = self.scenario.pairs()
        if not pairs:
            pairs = [(a, b) for i, a in enumerate(members) for b in members[i + 1:]]
        anchors = self._distinct(members + [s for pair in self.scenario.pairs() for s in pair])
        net = None
        if anchors:
            net = self._phase(report, 'net', lambda: self._build_net(anchors))
        rev = None
        if net is not None:
            report['net'] = net.to_dict()
            rev = self._phase(report, 'pairs', lambda: reversibility_report(net, pairs, eps))
        if rev is not None:
            report['reversibility'] = rev.to_dict()
            self._done(f"Reversible at {eps}: {rev.reversible}; arrow of time: {rev.arrow_of_time}")

        self._step(4, total, "Steering a sampled chain")
        if rev is not None:
            run_report = self._phase(report, 'steered_run', lambda: self._spot_check(net, rev, eps))
            if run_report is not None:
                report['steered_run'] = run_report

        self._step(5, total, "Writing reports")
        self.writer.write_scenario(self.scenario.config)
        self.writer.write_json('reversibility.json', report)
        if cert is not None:
            self.writer.write_csv('certificate.csv', CERTIFICATE_HEADER, certificate_rows(cert))
        self._done("Reports written")
        return report

    def _spot_check(self, net: StateNet, rev, eps: float) -> Dict[str, Any]:
        """Steer the costliest feasible forward chain among the reported pairs."""
        feasible = [p for p in rev.pairs if ASYMMETRY_TOL < p.forward_cost < eps]
        if not feasible:
            self.logger.info(f"No pair needs a non-trivial chain below {eps}; spot check skipped")
            return {'skipped': True}
        pair = max(feasible, key=lambda p: (p.forward_cost, -p.source, -p.target))
        _, path = min_cost_search(net, pair.source, pair.target, cost_cap=eps)
        run = steer_along_chain(path_to_chain(net, path, eps), self.dynamics)
        checks = verify_run_by_integration(run, self.dynamics.hamiltonian, int(self.scenario.value('steering.ode_steps')))
        return {
            'source': pair.source,
            'target': pair.target,
            'path': path,
            'total_cost': run.total_cost,
            'final_error': run.final_error,
            'ode_max_propagator_error': max(c.propagator_error for c in checks),
            'ode_max_achieved_error': max(c.achieved_error for c in checks),
        }

    # grid-diagnostic

    def grid_diagnostic(self, x0_spec: Any, levels: int = 6, seeds: int = 1, base_seed: int = 0) -> Dict[str, Any]:
        """
        Naive cover refinement at scales 2^-1..2^-levels; with several seeds,
        counts the runs showing a non-nesting transition.
        """
        total = 2
        scales = [2.0 ** -k for k in range(1, levels + 1)]
        budget = int(self.scenario.value('budgets.grid_budget'))
        x0 = self._x0(x0_spec)

        self._step(1, total, f"Scanning {len(scales)} scales over {seeds} seed(s)")
        runs = []
        rows: List[list] = []
        for s in range(seeds):
            seed = base_seed + s
            dynamics = self.dynamics if seeds == 1 else build_scenario(self.scenario.config, seed).dynamics
            try:
                results = grid_refinement_diagnostic(dynamics, x0, scales, budget)
            except BudgetError as e:
                if seeds == 1:
                    raise
                self.logger.warning(f"Seed {seed}: {e}")
                runs.append({'seed': seed, 'status': 'budget', 'message': str(e)})
                continue
            non_nesting = sum(1 for r in results if not r.nests_previous)
            runs.append({'seed': seed, 'status': 'complete', 'scales': [r.to_dict() for r in results],
                         'non_nesting_transitions': non_nesting})
            rows += grid_rows(seed, results)
        seeds_non_nesting = sum(1 for r in runs if r.get('non_nesting_transitions', 0) > 0)
        self._done(f"{seeds_non_nesting} of {seeds} seed(s) show a non-nesting transition")

        self._step(2, total, "Writing reports")
        self.writer.write_scenario(self.scenario.config)
        report = {
            'command': 'grid-diagnostic',
            'scales': scales,
            'budget': budget,
            'runs': runs,
            'seeds_with_non_nesting': seeds_non_nesting,
        }
        self.writer.write_csv('grid.csv', GRID_HEADER, rows)
        self.writer.write_json('grid.json', report)
        self._done("Reports written")
        return report
