"""
Tests for configuration loading, validation, scenario parsing, report
serialization and logging setup.
"""

import json
import logging

import numpy as np
import pytest

from services.collapse import BlankOnlyRule, BornGreedyRule, HashedBornRule, TableRule
from services.errors import BudgetError, ConfigError, PreconditionError, StagnationError
from services.qstate import ProjectiveState, fs_distance
from services.scenario_service import build_scenario, load_scenario, parse_state
from services.validation_service import (
    validate_epsilon,
    validate_matrix_literal,
    validate_output_dir,
    validate_scales,
    validate_scenario_path,
    validate_seed,
    validate_state_spec,
)
from utils.config import (
    DEFAULT_SCENARIO,
    get_config_value,
    load_config,
    merge_defaults,
    save_config,
    set_config_value,
)
from utils.logger import LOG_LEVEL_ENV, resolve_log_level, setup_logger
from utils.serialization import clean_float, dumps_canonical, pairs_to_array, to_jsonable

ROTATION = {'hilbert_dim': 2, 'hamiltonian_spec': {'kind': 'rotation', 'angle': 1.0, 'axis': 'x'}}


class TestConfig:

    def test_merge_keeps_defaults(self):
        merged = merge_defaults({'net': {'seed': 9}, 'scales': [0.2]})
        assert merged['net']['seed'] == 9
        assert merged['net']['node_count'] == DEFAULT_SCENARIO['net']['node_count']
        assert merged['scales'] == [0.2]
        assert DEFAULT_SCENARIO['net']['seed'] == 0

    def test_dotted_access(self):
        config = {'a': {'b': 1, 'c': None}}
        assert get_config_value(config, 'a.b') == 1
        assert get_config_value(config, 'a.c', 'fallback') == 'fallback'
        assert get_config_value(config, 'a.b.d', 3) == 3
        set_config_value(config, 'x.y', 5)
        assert config['x'] == {'y': 5}

    def test_round_trip_through_file(self, tmp_path):
        path = tmp_path / 'scenario.json'
        assert save_config(ROTATION, str(path))
        loaded = load_config(str(path))
        assert loaded['hamiltonian_spec'] == ROTATION['hamiltonian_spec']
        assert loaded['budgets']['orbit_len'] == 1000

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc_info:
            load_config(str(tmp_path / 'absent.json'))
        assert exc_info.value.field == 'scenario'

    def test_syntax_error_reports_position(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{\n  "hilbert_dim": 2,\n  oops\n}\n')
        with pytest.raises(ConfigError) as exc_info:
            load_config(str(path))
        assert exc_info.value.line == 3
        assert exc_info.value.exit_code == 2

    def test_top_level_must_be_object(self, tmp_path):
        path = tmp_path / 'list.json'
        path.write_text('[1, 2]')
        with pytest.raises(ConfigError):
            load_config(str(path))


class TestValidation:

    @pytest.mark.parametrize("value,ok", [
        (0.1, True), (np.pi / 2, True), (0, False), (-0.1, False),
        (float('inf'), False), (2.0, False), ('0.1', False), (True, False),
    ])
    def test_epsilon(self, value, ok):
        assert validate_epsilon(value)[0] is ok

    def test_scales(self):
        assert validate_scales([0.1, 0.05])[0]
        assert not validate_scales([])[0]
        assert not validate_scales([0.05, 0.1])[0]
        assert not validate_scales(0.1)[0]

    def test_scenario_path(self, tmp_path):
        good = tmp_path / 'ok.json'
        good.write_text('{}')
        other = tmp_path / 'ok.txt'
        other.write_text('{}')
        assert validate_scenario_path(str(good)) == (True, "")
        ok, message = validate_scenario_path(str(other))
        assert ok and message.startswith('Warning')
        assert not validate_scenario_path('')[0]
        assert not validate_scenario_path(str(tmp_path))[0]

    def test_output_dir(self, tmp_path):
        assert validate_output_dir(str(tmp_path / 'new' / 'nested')) == (True, "")
        (tmp_path / 'file').write_text('x')
        assert not validate_output_dir(str(tmp_path / 'file'))[0]
        ok, message = validate_output_dir(str(tmp_path))
        assert ok and message.startswith('Warning')

    def test_matrix_literal(self):
        assert validate_matrix_literal([[0, [1, 0]], [[1, 0], 0]], 2)[0]
        assert not validate_matrix_literal([[0, 1]])[0]
        assert not validate_matrix_literal([[0, 1], [1, 0]], 3)[0]
        assert not validate_matrix_literal([[0, 'a'], [1, 0]])[0]

    @pytest.mark.parametrize("spec,ok", [
        ('basis:1', True), ('basis:2', False), ('plus', True), ('random:3', True), ('random:-3', False),
        ('bogus', False), ([1, [0, 1]], True), ([0, 0], False), ([1, 0, 0], False), (3, False),
    ])
    def test_state_spec(self, spec, ok):
        assert validate_state_spec(spec, 2)[0] is ok

    @pytest.mark.parametrize("value,ok", [
        (0, True), (2 ** 63 - 1, True), (2 ** 63, False), (-1, False), (True, False), (1.5, False), (None, False),
    ])
    def test_seed(self, value, ok):
        assert validate_seed(value)[0] is ok


class TestScenario:

    def test_rotation_scenario(self):
        scenario = build_scenario(ROTATION)
        assert scenario.dim == 2
        assert isinstance(scenario.dynamics.rule, BlankOnlyRule)
        assert np.allclose(scenario.dynamics.hamiltonian, [[0, 0.5], [0.5, 0]])
        assert scenario.scales == [0.1, 0.05]

    def test_matrix_hamiltonian_and_partition(self):
        scenario = build_scenario({
            'hilbert_dim': 3,
            'hamiltonian': [[1, 0, 0], [0, 0, [0, 1]], [0, [0, -1], 0]],
            'observable': {'partition': [1, 1, 2]},
            'choice_rule': {'kind': 'born-greedy'},
        })
        assert scenario.dynamics.observable.outcome_count == 2
        assert isinstance(scenario.dynamics.rule, BornGreedyRule)

    def test_non_hermitian_hamiltonian(self):
        with pytest.raises(ConfigError) as exc_info:
            build_scenario({'hilbert_dim': 2, 'hamiltonian': [[0, 1], [0, 0]]})
        assert exc_info.value.field == 'hamiltonian'

    def test_missing_hamiltonian(self):
        with pytest.raises(ConfigError):
            build_scenario({'hilbert_dim': 2})

    def test_rotation_needs_qubit(self):
        with pytest.raises(ConfigError) as exc_info:
            build_scenario({'hilbert_dim': 3, 'hamiltonian_spec': {'kind': 'rotation', 'angle': 1.0}})
        assert exc_info.value.field == 'hamiltonian_spec.kind'

    def test_bad_projectors(self):
        with pytest.raises(ConfigError) as exc_info:
            build_scenario(dict(ROTATION, observable={'projectors': [[[1, 0], [0, 0]], [[1, 0], [0, 0]]]}))
        assert exc_info.value.field == 'observable'

    def test_hashed_rule_seed_override(self):
        config = dict(ROTATION, choice_rule={'kind': 'hashed-born', 'seed': 1, 'blank_probability': 0.5})
        scenario = build_scenario(config, seed_override=42)
        assert isinstance(scenario.dynamics.rule, HashedBornRule)
        assert scenario.dynamics.rule.seed == 42
        assert scenario.value('net.seed') == 42

    def test_seed_override_out_of_range(self):
        config = dict(ROTATION, choice_rule={'kind': 'hashed-born', 'seed': 1})
        with pytest.raises(ConfigError) as exc_info:
            build_scenario(config, seed_override=2 ** 63)
        assert exc_info.value.field == 'seed'

    @pytest.mark.parametrize("key,seed", [('choice_rule', -2), ('net', -1), ('net', 2 ** 64)])
    def test_scenario_seeds_checked(self, key, seed):
        block = {'kind': 'hashed-born', 'seed': seed} if key == 'choice_rule' else {'seed': seed}
        with pytest.raises(ConfigError) as exc_info:
            build_scenario(dict(ROTATION, **{key: block}))
        assert exc_info.value.field == f'{key}.seed'

    def test_hashed_rule_needs_seed(self):
        with pytest.raises(ConfigError) as exc_info:
            build_scenario(dict(ROTATION, choice_rule={'kind': 'hashed-born'}))
        assert exc_info.value.field == 'choice_rule.seed'

    def test_table_rule(self):
        config = dict(ROTATION, choice_rule={
            'kind': 'table',
            'entries': [{'state': 'plus', 'label': 1}],
            'fallback': {'kind': 'born-greedy'},
        })
        rule = build_scenario(config).dynamics.rule
        assert isinstance(rule, TableRule)
        assert isinstance(rule.fallback, BornGreedyRule)
        assert rule.lookup(ProjectiveState.plus()) == 1

    def test_unknown_rule(self):
        with pytest.raises(ConfigError) as exc_info:
            build_scenario(dict(ROTATION, choice_rule={'kind': 'oracle'}))
        assert exc_info.value.field == 'choice_rule.kind'

    def test_bad_scales_and_dimension(self):
        with pytest.raises(ConfigError):
            build_scenario(dict(ROTATION, scales=[0.05, 0.1]))
        with pytest.raises(ConfigError):
            build_scenario(dict(ROTATION, hilbert_dim=1))

    def test_states_and_pairs(self):
        scenario = build_scenario(dict(ROTATION, pairs=[['basis:0', [[0.6, 0], [0, 0.8]]]]))
        (u, v), = scenario.pairs()
        assert fs_distance(u, ProjectiveState.basis(2, 0)) < 1e-15
        assert fs_distance(v, ProjectiveState(np.array([0.6, 0.8j]))) < 1e-15
        a = parse_state('random:5', 2)
        b = parse_state('random:5', 2)
        assert fs_distance(a, b) < 1e-15
        with pytest.raises(ConfigError):
            build_scenario(dict(ROTATION, pairs=[['plus']])).pairs()

    def test_load_scenario(self, tmp_path):
        path = tmp_path / 'scenario.json'
        path.write_text(json.dumps(ROTATION))
        assert load_scenario(str(path)).dim == 2


class TestSerialization:

    def test_clean_float(self):
        assert clean_float(-0.0) == 0.0
        assert str(clean_float(-1e-17)) == '0.0'
        assert clean_float(float('inf')) == 'inf'
        assert clean_float(float('nan')) == 'nan'

    def test_complex_arrays_become_pairs(self):
        data = to_jsonable({'v': np.array([1 + 2j, 0.5]), 'n': np.int64(3), 'b': np.bool_(True)})
        assert data == {'v': [[1.0, 2.0], [0.5, 0.0]], 'n': 3, 'b': True}

    def test_pairs_decode(self):
        assert np.allclose(pairs_to_array([[1, 0], [0, -1]]), [1, -1j])
        assert np.allclose(pairs_to_array([[0, [0, 1]], [[0, -1], 0]], ndim=2), [[0, 1j], [-1j, 0]])
        assert np.allclose(pairs_to_array([[0, 1], [1, 0]], ndim=2), [[0, 1], [1, 0]])
        with pytest.raises(ValueError):
            pairs_to_array(['x'])

    def test_canonical_text_is_stable(self):
        text = dumps_canonical({'b': 1.0, 'a': [np.float64(0.1)]})
        assert text == '{\n  "a": [\n    0.1\n  ],\n  "b": 1.0\n}\n'


class TestLogging:

    def test_level_from_environment(self, monkeypatch):
        monkeypatch.setenv(LOG_LEVEL_ENV, 'debug')
        assert resolve_log_level() == logging.DEBUG
        assert resolve_log_level('WARNING') == logging.WARNING
        monkeypatch.delenv(LOG_LEVEL_ENV)
        assert resolve_log_level() == logging.INFO

    def test_file_handler(self, tmp_path):
        logger = setup_logger('qrev.tests.file', logging.INFO, str(tmp_path))
        logger.info("hello")
        for handler in logger.handlers:
            handler.flush()
        files = list(tmp_path.glob('app_*.log'))
        assert len(files) == 1
        assert 'hello' in files[0].read_text(encoding='utf-8')
        assert setup_logger('qrev.tests.file') is logger
        assert len(logger.handlers) == 2


class TestExitCodes:

    def test_error_families(self):
        assert ConfigError("x").exit_code == 2
        assert PreconditionError("x").exit_code == 3
        assert StagnationError("x").exit_code == 4
        assert issubclass(StagnationError, BudgetError)

    def test_config_error_location(self):
        err = ConfigError("bad", field='scales', line=2, column=5)
        assert str(err) == "[field 'scales'; line 2, column 5] bad"
