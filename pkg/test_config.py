"""
Tests for experiment configuration loading and validation
"""
import copy
import glob
import math
import os

import pytest
import yaml

from experiments.config_loader import (
    KINDS,
    ConfigParseError,
    ConfigValidationError,
    config_digest,
    exponent,
    load_config,
    validate_config,
)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), 'config')


@pytest.fixture
def raw_config():
    with open(os.path.join(CONFIG_DIR, 'default_config.yaml'), 'r') as f:
        return yaml.safe_load(f)


def hm_decay_raw():
    with open(os.path.join(CONFIG_DIR, 'hm_decay.yaml'), 'r') as f:
        return yaml.safe_load(f)


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CONFIG_DIR, '*.yaml'))))
def test_shipped_configs_validate(path):
    config = load_config(path)
    assert config['experiment']['kind'] in KINDS
    assert config['output']['dir']


def test_defaults_are_filled_in(raw_config):
    config = validate_config(raw_config)
    assert config['experiment']['params']['trials'] == 100
    assert config['workers'] is None
    assert config['logging']['level'] == 'INFO'

    del raw_config['logging']
    assert validate_config(raw_config)['logging']['format'].startswith('%(asctime)s')


def test_missing_kind(raw_config):
    del raw_config['experiment']['kind']
    with pytest.raises(ConfigValidationError) as info:
        validate_config(raw_config)
    assert info.value.field == 'experiment.kind'


def test_unknown_kind(raw_config):
    raw_config['experiment']['kind'] = 'navier_stokes'
    with pytest.raises(ConfigValidationError, match="expected one of"):
        validate_config(raw_config)


def test_unknown_keys_are_rejected(raw_config):
    raw_config['plotting'] = True
    with pytest.raises(ConfigValidationError, match="unknown keys"):
        validate_config(raw_config)


def test_unknown_params_are_rejected(raw_config):
    raw_config['experiment']['params']['tau'] = 1.0
    with pytest.raises(ConfigValidationError) as info:
        validate_config(raw_config)
    assert info.value.field == 'experiment.params'


def test_missing_required_param(raw_config):
    del raw_config['experiment']['params']['r']
    with pytest.raises(ConfigValidationError, match="missing"):
        validate_config(raw_config)


def test_tolerances_have_no_defaults(raw_config):
    del raw_config['tolerances']['reproducing']
    with pytest.raises(ConfigValidationError, match="no defaults"):
        validate_config(raw_config)


def test_decay_needs_three_times():
    raw = hm_decay_raw()
    raw['experiment']['params']['t_grid'] = [0.005, 0.01]
    with pytest.raises(ConfigValidationError, match="at least 3"):
        validate_config(raw)

    raw['experiment']['params']['t_grid'] = [0.005, 0.005, 0.01]
    with pytest.raises(ConfigValidationError, match="distinct"):
        validate_config(raw)


def test_n_set_is_checked():
    raw = hm_decay_raw()
    raw['experiment']['params']['n_set'] = [1, 3]
    with pytest.raises(ConfigValidationError, match="not in"):
        validate_config(raw)


def test_strichartz_pairs_are_checked():
    with open(os.path.join(CONFIG_DIR, 'strichartz_sweep.yaml'), 'r') as f:
        raw = yaml.safe_load(f)
    bad = copy.deepcopy(raw)
    bad['experiment']['params']['p'] = 3
    with pytest.raises(ConfigValidationError, match="not admissible"):
        validate_config(bad)

    endpoint = copy.deepcopy(raw)
    endpoint['experiment']['params']['p'] = 4
    endpoint['experiment']['params']['q'] = 'inf'
    with pytest.raises(ConfigValidationError, match="q != inf"):
        validate_config(endpoint)


def test_space_validation(raw_config):
    raw_config['space']['n'] = 3
    with pytest.raises(ConfigValidationError, match=">= 4"):
        validate_config(raw_config)

    raw_config['space'] = {'geometry': 'sphere', 'd': 2}
    with pytest.raises(ConfigValidationError) as info:
        validate_config(raw_config)
    assert info.value.field == 'space.geometry'


def test_number_validation(raw_config):
    raw_config['experiment']['params']['trials'] = 2.5
    with pytest.raises(ConfigValidationError, match="integer"):
        validate_config(raw_config)

    raw_config['experiment']['params']['trials'] = True
    with pytest.raises(ConfigValidationError, match="expected a number"):
        validate_config(raw_config)


def test_exponent_accepts_infinity():
    assert exponent('q', 'inf') == math.inf
    assert exponent('q', '.inf') == math.inf
    assert exponent('q', float('inf')) == math.inf
    assert exponent('q', 4) == 4.0
    with pytest.raises(ConfigValidationError):
        exponent('q', 0.5)


def test_parse_errors(tmp_path):
    with pytest.raises(ConfigParseError):
        load_config(str(tmp_path / 'missing.yaml'))

    broken = tmp_path / 'broken.yaml'
    broken.write_text("experiment: [unclosed\n")
    with pytest.raises(ConfigParseError):
        load_config(str(broken))

    scalar = tmp_path / 'scalar.yaml'
    scalar.write_text("just a string\n")
    with pytest.raises(ConfigParseError, match="mapping"):
        load_config(str(scalar))


def test_digest_ignores_output_workers_and_logging(raw_config):
    base = config_digest(validate_config(raw_config))

    moved = copy.deepcopy(raw_config)
    moved['output']['dir'] = 'elsewhere'
    moved['workers'] = 8
    moved['logging']['level'] = 'DEBUG'
    assert config_digest(validate_config(moved)) == base

    reseeded = copy.deepcopy(raw_config)
    reseeded['seed'] = 1
    assert config_digest(validate_config(reseeded)) != base
    assert len(base) == 64


@pytest.mark.parametrize("n", [2, 3])
def test_interval_needs_four_points(raw_config, n):
    raw_config['space'] = {'geometry': 'interval_grid', 'd': 1, 'n': n, 'length': 1.0, 'bc': 'dirichlet'}
    with pytest.raises(ConfigValidationError, match=">= 4") as info:
        validate_config(raw_config)
    assert info.value.field == 'space.n'

    raw_config['space']['n'] = 4
    assert validate_config(raw_config)['space']['n'] == 4


def test_optional_tolerances_follow_their_params():
    raw = hm_decay_raw()
    del raw['tolerances']['monotonicity']
    with pytest.raises(ConfigValidationError, match="no defaults"):
        validate_config(raw)

    del raw['experiment']['params']['m_list']
    config = validate_config(raw)
    assert 'monotonicity' not in config['tolerances']

    with open(os.path.join(CONFIG_DIR, 'transmutation.yaml'), 'r') as f:
        transmutation = yaml.safe_load(f)
    del transmutation['tolerances']['regime_consistency']
    with pytest.raises(ConfigValidationError) as info:
        validate_config(transmutation)
    assert info.value.field == 'tolerances.regime_consistency'

    del transmutation['experiment']['params']['regime_t']
    assert 'regime_consistency' not in validate_config(transmutation)['tolerances']


def test_m_list_must_ascend():
    raw = hm_decay_raw()
    raw['experiment']['params']['m_list'] = [3, 1, 2]
    with pytest.raises(ConfigValidationError, match="ascending"):
        validate_config(raw)


def test_unknown_tolerances_are_rejected(raw_config):
    raw_config['tolerances']['bogus'] = 1.0
    with pytest.raises(ConfigValidationError, match="unknown keys"):
        validate_config(raw_config)
