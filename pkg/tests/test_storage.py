import os

import numpy as np
import pandas as pd
import pytest

from vortexflux import storage
from vortexflux.configuration import config_hash
from vortexflux.coupling import Simulation
from vortexflux.exceptions import DataError
from vortexflux.geometry import build_grid


def test_field_file_is_exact(tmp_path, rng):
    grid = build_grid(2, [1.0, 0.5], [7, 5])
    values = rng.normal(size=grid.shape)
    path = str(tmp_path / 'omega_0000.csv')
    storage.write_field(path, grid, values, 0.125)
    field = storage.read_field(path)
    assert field.grid == grid
    assert field.time == 0.125
    np.testing.assert_array_equal(field.values, values)
    with open(path) as src:
        assert src.readline().strip() == '# dimension 2'


def test_truncated_field_file(tmp_path, grid_1d):
    path = tmp_path / 'omega_0000.csv'
    storage.write_field(str(path), grid_1d, np.zeros(21))
    lines = path.read_text().splitlines()
    path.write_text('\n'.join(lines[:-3]) + '\n')
    with pytest.raises(DataError):
        storage.read_field(str(path))
    with pytest.raises(DataError):
        storage.read_field(str(tmp_path / 'missing.csv'))


def test_run_directory_round_trip(tmp_path, constant_config):
    simulation = Simulation(constant_config)
    traj = simulation.run()
    run_dir = str(tmp_path)
    written = storage.write_config(run_dir, constant_config) + storage.write_trajectory(run_dir, traj)
    assert 'steps.csv' in written
    assert os.path.join('fields', 'omega_0010.csv') in written

    back = storage.read_trajectory(run_dir, constant_config.epsilon, constant_config.R)
    assert back.times == traj.times
    for a, b in zip(back.omegas, traj.omegas):
        np.testing.assert_array_equal(a, b)

    config = storage.read_config(run_dir)
    assert config_hash(config) == config_hash(constant_config)
    steps = storage.read_table(os.path.join(run_dir, 'steps.csv'))
    assert len(steps) == len(traj.steps)


def test_read_trajectory_needs_fields(tmp_path):
    with pytest.raises(DataError):
        storage.read_trajectory(str(tmp_path))


def test_manifest(tmp_path, constant_config):
    manifest = storage.RunManifest.start(constant_config, extra={'lagged': False})
    assert manifest.run_id.startswith(config_hash(constant_config)[:12])
    assert manifest.elapsed is None
    manifest.finish(['config.yaml', 'config.yaml', 'steps.csv'])
    assert manifest.outputs == ['config.yaml', 'steps.csv']
    assert manifest.elapsed >= 0
    manifest.to_file(str(tmp_path))
    back = storage.RunManifest.from_file(str(tmp_path))
    assert back.to_dict() == manifest.to_dict()
    assert 'seed' in back.defaults


def test_manifest_missing(tmp_path):
    with pytest.raises(DataError):
        storage.RunManifest.from_file(str(tmp_path))


def test_tables_and_plot_files(tmp_path):
    frame = pd.DataFrame({'epsilon': [1e-2, 5e-3], 'distance': [0.1, 0.05]})
    name = storage.write_table(str(tmp_path / 'cauchy_table.csv'), frame)
    assert name == 'cauchy_table.csv'
    pd.testing.assert_frame_equal(storage.read_table(str(tmp_path / name)), frame)
    storage.write_plot_file(str(tmp_path / 'l1.dat'), [0.0, 1.0], [2.0, 3.0], 't l1')
    np.testing.assert_array_equal(np.loadtxt(str(tmp_path / 'l1.dat')), [[0.0, 2.0], [1.0, 3.0]])
    with pytest.raises(DataError):
        storage.read_table(str(tmp_path / 'missing.csv'))
