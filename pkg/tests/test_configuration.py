import numpy as np
import pytest
import yaml

from conftest import constant_dict, inflow_dict, write_yaml
from vortexflux.configuration import SimConfig, config_from_dict, config_hash, parse_config, resolved_dict
from vortexflux.data import BoundarySamples
from vortexflux.exceptions import ConfigurationError, DataError
from vortexflux.geometry import build_grid


def line_of(path, line):
    with open(path) as src:
        return src.read().splitlines()[line - 1]


def test_defaults_are_listed(tmp_path):
    config = parse_config(write_yaml(tmp_path / 'vflux.yaml', constant_dict()))
    assert config.source.endswith('vflux.yaml')
    assert config.picard_tol == 1e-10
    assert config.picard_max_iters == 50
    assert config.boundary_mode == 'neumann'
    assert 'picard.tol' in config.defaults
    assert 'time.dt' in config.defaults
    assert 'seed' in config.defaults
    assert 'model.epsilon' not in config.defaults
    assert config.aleph == 1.0
    assert config.sigma1 == pytest.approx(0.125)


def test_aleph_defaults_to_data_bound():
    raw = inflow_dict(counts=21)
    config = config_from_dict(raw)
    assert config.aleph == 1.0
    assert 'data.aleph' in config.defaults


@pytest.mark.parametrize(
    'section,key,value,message',
    [
        ('model', 'R', 0, 'R must be positive'),
        ('model', 'epsilon', -1.0, 'epsilon must be nonnegative'),
        ('time', 'T', 0.0, 'T must be positive'),
        ('time', 'output_interval', -0.1, 'output_interval must be positive'),
    ],
)
def test_invalid_values_carry_line_numbers(tmp_path, section, key, value, message):
    raw = constant_dict()
    raw[section][key] = value
    path = write_yaml(tmp_path / 'bad.yaml', raw)
    with pytest.raises(ConfigurationError) as e:
        parse_config(path)
    assert message in str(e.value)
    assert e.value.key == '{0}.{1}'.format(section, key)
    assert e.value.line is not None
    assert line_of(path, e.value.line).strip().startswith('{0}:'.format(key))
    assert e.value.errno == 2


def test_unknown_key(tmp_path):
    raw = constant_dict()
    raw['model']['viscosity'] = 0.1
    path = write_yaml(tmp_path / 'bad.yaml', raw)
    with pytest.raises(ConfigurationError) as e:
        parse_config(path)
    assert e.value.key == 'model.viscosity'
    assert 'viscosity' in line_of(path, e.value.line)


def test_unknown_section():
    raw = constant_dict()
    raw['plotting'] = {'dpi': 300}
    with pytest.raises(ConfigurationError) as e:
        config_from_dict(raw)
    assert e.value.key == 'plotting'


def test_missing_required_key():
    raw = constant_dict()
    del raw['model']['R']
    with pytest.raises(ConfigurationError) as e:
        config_from_dict(raw)
    assert e.value.key == 'model.R'
    assert 'missing' in str(e.value)


def test_aleph_below_data(tmp_path):
    raw = constant_dict(value=2.0)
    raw['data']['aleph'] = 1.0
    with pytest.raises(ConfigurationError) as e:
        config_from_dict(raw)
    assert e.value.key == 'data.aleph'


def test_malformed_yaml(tmp_path):
    path = tmp_path / 'broken.yaml'
    path.write_text('grid:\n  dimension: [1\nmodel: {')
    with pytest.raises(ConfigurationError) as e:
        parse_config(str(path))
    assert 'malformed' in str(e.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        parse_config(str(tmp_path / 'nothing.yaml'))


def test_find_config_file(tmp_path, monkeypatch):
    locations = [str(tmp_path / 'first.yaml'), str(tmp_path / 'second.yaml')]
    monkeypatch.setattr(SimConfig, 'all_config_locations', staticmethod(lambda: locations))
    with pytest.raises(ConfigurationError) as e:
        SimConfig.from_file()
    assert 'first.yaml' in str(e.value)
    write_yaml(locations[1], constant_dict())
    assert SimConfig.from_file().source == locations[1]


def test_omega0_list_length():
    raw = constant_dict()
    raw['data']['omega0'] = [1.0] * 5
    with pytest.raises(ConfigurationError) as e:
        config_from_dict(raw)
    assert e.value.key == 'data.omega0'


def test_boundary_data_from_csv(tmp_path):
    (tmp_path / 'a.csv').write_text('time,s,value\n0,0,-0.2\n0,1,0.2\n1,0,-0.4\n1,1,0.4\n')
    raw = constant_dict()
    raw['data']['a'] = 'a.csv'
    config = parse_config(write_yaml(tmp_path / 'vflux.yaml', raw))
    np.testing.assert_allclose(config.a.at(0.5), [-0.3, 0.3])


def test_config_hash(constant_config):
    assert config_hash(constant_config) == config_hash(config_from_dict(constant_dict()))
    assert config_hash(constant_config) != config_hash(constant_config.replace(epsilon=2e-3))
    assert len(config_hash(constant_config)) == 64


def test_resolved_dict_round_trips_through_yaml(constant_config):
    raw = resolved_dict(constant_config)
    raw['data'].update({'omega0': 1.0, 'a': 0.0, 'b': 1.0})
    back = config_from_dict(yaml.safe_load(yaml.safe_dump(raw)))
    assert config_hash(back) == config_hash(constant_config)


def test_repr_mentions_defaults(constant_config):
    text = repr(constant_config)
    assert 'Cut-off R: 4.0' in text
    assert 'picard.tol' in text


def test_boundary_samples_interpolation(grid_2d):
    rows = [[0.0, 0.0, 0.0], [0.0, 2.0, 1.0], [1.0, 0.0, 2.0], [1.0, 2.0, 2.0]]
    samples = BoundarySamples.from_rows(grid_2d, rows)
    first = samples.at(0.0)
    # periodic in arc length: s = 1 sits halfway between s = 0 and s = 2, as does s = 3
    assert first[8] == pytest.approx(0.5)
    assert first[24] == pytest.approx(0.5)
    np.testing.assert_allclose(samples.at(0.5)[16], 1.5)
    np.testing.assert_allclose(samples.at(5.0), 2.0)
    assert samples.max() == 2.0
    frame = samples.to_frame(grid_2d)
    assert frame.columns.tolist() == ['time', 's', 'value']
    assert len(frame) == 2 * grid_2d.boundary_count


def test_boundary_samples_validation(grid_1d):
    with pytest.raises(DataError):
        BoundarySamples([0.0, 0.0], [[1, 1], [1, 1]])
    with pytest.raises(DataError):
        BoundarySamples([0.0], [[1, 1], [1, 1]])
    with pytest.raises(DataError):
        BoundarySamples([0.0], [[np.nan, 1]])
    with pytest.raises(DataError):
        BoundarySamples.from_rows(grid_1d, [[0.0, 1.0]])
    with pytest.raises(DataError):
        BoundarySamples.from_csv(grid_1d, 'does-not-exist.csv')
    assert BoundarySamples.constant(build_grid(1, [2.0], [5]), 0.3).at(7.0).tolist() == [0.3, 0.3]
