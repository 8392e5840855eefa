"""
Scenario service for the reversibility toolkit.

Turns a merged scenario document into live objects: Hamiltonian, observable,
choice rule, dynamics and state specs. Every failure surfaces as a
ConfigError naming the offending field.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from services.collapse import (
    BlankOnlyRule,
    BornGreedyRule,
    ChoiceRule,
    HashedBornRule,
    Observable,
    RealizedDynamics,
    TableRule,
)
from services.errors import ConfigError, PreconditionError
from services.qstate import ProjectiveState, check_hermitian, random_state, rotation_hamiltonian
from services.validation_service import (
    validate_matrix_literal,
    validate_scales,
    validate_scenario_path,
    validate_seed,
    validate_state_spec,
)
from utils.config import get_config_value, load_config, merge_defaults, set_config_value
from utils.logger import setup_logger
from utils.serialization import pairs_to_array


logger = setup_logger(__name__)

RULE_KINDS = ('blank-only', 'born-greedy', 'hashed-born', 'table')


def _require(ok_message: Tuple[bool, str], field: str) -> None:
    ok, message = ok_message
    if not ok:
        raise ConfigError(message, field=field)
    if message:
        logger.warning(message)


def parse_state(spec: Any, dim: int, field: str = 'state') -> ProjectiveState:
    """
    Build a state from a spec string or an amplitude list.

    "random:<seed>" draws a Haar-random state from that seed.
    """
    _require(validate_state_spec(spec, dim), field)
    if isinstance(spec, list):
        return ProjectiveState(pairs_to_array(spec))
    if spec == 'plus':
        return ProjectiveState.plus(dim)
    if spec == 'minus':
        return ProjectiveState.minus(dim)
    kind, _, arg = spec.partition(':')
    if kind == 'basis':
        return ProjectiveState.basis(dim, int(arg))
    return random_state(dim, np.random.default_rng(int(arg)))


def parse_hamiltonian(config: Dict[str, Any], dim: int) -> np.ndarray:
    """Hamiltonian from a matrix literal or a rotation spec."""
    if 'hamiltonian' in config:
        _require(validate_matrix_literal(config['hamiltonian'], dim), 'hamiltonian')
        try:
            return check_hermitian(pairs_to_array(config['hamiltonian'], ndim=2))
        except PreconditionError as e:
            raise ConfigError(str(e), field='hamiltonian')

    spec = config.get('hamiltonian_spec')
    if spec is None:
        raise ConfigError("Scenario needs 'hamiltonian' or 'hamiltonian_spec'", field='hamiltonian')
    kind = spec.get('kind') if isinstance(spec, dict) else None
    if kind == 'zero':
        return np.zeros((dim, dim), dtype=complex)
    if kind == 'rotation':
        if dim != 2:
            raise ConfigError("Rotation Hamiltonians are defined for qubits only", field='hamiltonian_spec.kind')
        angle = spec.get('angle')
        if isinstance(angle, bool) or not isinstance(angle, (int, float)):
            raise ConfigError("Rotation angle must be a number", field='hamiltonian_spec.angle')
        try:
            return rotation_hamiltonian(float(angle), spec.get('axis', 'z'))
        except PreconditionError as e:
            raise ConfigError(str(e), field='hamiltonian_spec.axis')
    raise ConfigError(f"Unknown Hamiltonian kind {kind!r} (use rotation or zero)", field='hamiltonian_spec.kind')


def parse_observable(config: Dict[str, Any], dim: int) -> Observable:
    """Observable from projectors, from an eigenbasis partition, or the computational basis by default."""
    spec = config.get('observable')
    try:
        if spec is None:
            return Observable.computational(dim)
        if not isinstance(spec, dict):
            raise ConfigError("Observable must be an object", field='observable')
        if 'projectors' in spec:
            for k, p in enumerate(spec['projectors']):
                _require(validate_matrix_literal(p, dim), f'observable.projectors[{k}]')
            projectors = tuple(pairs_to_array(p, ndim=2) for p in spec['projectors'])
            eigenvalues = spec.get('eigenvalues') or [float(j) for j in range(1, len(projectors) + 1)]
            return Observable(projectors, tuple(eigenvalues))
        partition = spec.get('partition')
        if not isinstance(partition, list) or len(partition) != dim:
            raise ConfigError(f"Partition must list one label per basis vector ({dim})", field='observable.partition')
        basis = spec.get('basis')
        if basis is not None:
            _require(validate_matrix_literal(basis, dim), 'observable.basis')
            basis = pairs_to_array(basis, ndim=2)
        return Observable.from_eigenbasis(partition, basis, spec.get('eigenvalues'))
    except PreconditionError as e:
        raise ConfigError(str(e), field='observable')


def parse_rule(
    spec: Any,
    dim: int,
    zero_weight: float,
    match_tol: float,
    seed_override: Optional[int] = None,
    field: str = 'choice_rule'
) -> ChoiceRule:
    """
    Choice rule from its config block.

    Raises:
        ConfigError: For unknown kinds, missing seeds or bad table entries
    """
    if not isinstance(spec, dict):
        raise ConfigError("Choice rule must be an object", field=field)
    kind = spec.get('kind')
    if kind == 'blank-only':
        return BlankOnlyRule()
    if kind == 'born-greedy':
        return BornGreedyRule()
    if kind == 'hashed-born':
        seed = seed_override if seed_override is not None else spec.get('seed')
        if seed is None:
            raise ConfigError("hashed-born rule needs an integer seed", field=f'{field}.seed')
        _require(validate_seed(seed), f'{field}.seed')
        try:
            return HashedBornRule(seed, float(spec.get('blank_probability', 0.25)), zero_weight)
        except PreconditionError as e:
            raise ConfigError(str(e), field=f'{field}.blank_probability')
    if kind == 'table':
        entries = []
        for k, entry in enumerate(spec.get('entries', [])):
            if not isinstance(entry, dict) or 'state' not in entry or not isinstance(entry.get('label'), int):
                raise ConfigError("Table entries need 'state' and an integer 'label'", field=f'{field}.entries[{k}]')
            entries.append((parse_state(entry['state'], dim, f'{field}.entries[{k}].state'), entry['label']))
        fallback = spec.get('fallback', {'kind': 'blank-only'})
        return TableRule(
            entries,
            parse_rule(fallback, dim, zero_weight, match_tol, seed_override, f'{field}.fallback'),
            match_tol,
        )
    raise ConfigError(f"Unknown choice rule kind {kind!r} (use {', '.join(RULE_KINDS)})", field=f'{field}.kind')


@dataclass(eq=False)
class Scenario:
    """Resolved scenario: the merged document plus the objects built from it."""

    config: Dict[str, Any]
    dynamics: RealizedDynamics

    @property
    def dim(self) -> int:
        return self.dynamics.dim

    @property
    def scales(self) -> List[float]:
        return [float(eps) for eps in self.config['scales']]

    def value(self, key: str, default: Any = None) -> Any:
        return get_config_value(self.config, key, default)

    def state(self, spec: Any, field: str = 'state') -> ProjectiveState:
        return parse_state(spec, self.dim, field)

    def pairs(self) -> List[Tuple[ProjectiveState, ProjectiveState]]:
        result = []
        for k, pair in enumerate(self.config.get('pairs') or []):
            if not isinstance(pair, list) or len(pair) != 2:
                raise ConfigError("Each pair must be a two-element list", field=f'pairs[{k}]')
            result.append((self.state(pair[0], f'pairs[{k}][0]'), self.state(pair[1], f'pairs[{k}][1]')))
        return result


def build_scenario(config: Dict[str, Any], seed_override: Optional[int] = None) -> Scenario:
    """
    Build live objects from a scenario document (defaults merged in).

    Args:
        config: Scenario document
        seed_override: Replaces every seed in the scenario when given

    Raises:
        ConfigError: If any part of the document is invalid
    """
    config = merge_defaults(config)
    if seed_override is not None:
        _require(validate_seed(seed_override), 'seed')
        set_config_value(config, 'net.seed', seed_override)
        if isinstance(config['choice_rule'], dict) and config['choice_rule'].get('kind') == 'hashed-born':
            set_config_value(config, 'choice_rule.seed', seed_override)

    dim = config.get('hilbert_dim')
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 2:
        raise ConfigError(f"hilbert_dim must be an integer >= 2, got {dim!r}", field='hilbert_dim')
    _require(validate_scales(config.get('scales')), 'scales')
    _require(validate_seed(get_config_value(config, 'net.seed')), 'net.seed')

    zero_weight = float(get_config_value(config, 'tolerances.zero_weight'))
    match_tol = float(get_config_value(config, 'tolerances.match'))
    hamiltonian = parse_hamiltonian(config, dim)
    observable = parse_observable(config, dim)
    rule = parse_rule(config['choice_rule'], dim, zero_weight, match_tol, seed_override)
    dynamics = RealizedDynamics(hamiltonian, observable, rule, zero_weight)
    logger.debug(f"Scenario: dim={dim}, rule={rule.kind}, {observable.outcome_count} outcomes")
    return Scenario(config, dynamics)


def load_scenario(path: str, seed_override: Optional[int] = None) -> Scenario:
    """Validate the path, load the document and build the scenario."""
    _require(validate_scenario_path(path), 'scenario')
    return build_scenario(load_config(path), seed_override)
