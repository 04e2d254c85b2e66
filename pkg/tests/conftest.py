import numpy as np
import pytest
import yaml

from vortexflux.configuration import config_from_dict
from vortexflux.geometry import build_grid

INFLOW_A = -0.2
OUTFLOW_A = 0.2
EPS_FAMILY = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
STEADY_TOL = 1e-12
POSITIVITY_TOL = 1e-10


def constant_dict(value=1.0, counts=21, epsilon=1e-3, R=4.0, T=1.0):
    '''omega0 = b = value, a = 0 on [0, 1]: every snapshot should stay at value'''
    return {
        'grid': {'dimension': 1, 'extents': [1.0], 'counts': [counts]},
        'time': {'T': T, 'output_interval': 0.1},
        'model': {'epsilon': epsilon, 'R': R},
        'data': {'omega0': value, 'a': 0.0, 'b': value, 'aleph': value},
    }


def inflow_dict(counts=101, epsilon=1e-2, R=4.0, T=1.0, implicit=True, output_interval=0.05):
    '''[0, 1] with inflow a = -0.2, b = 1 at x = 0 and outflow a = 0.2, b = 0 at x = 1; omega0 = 0'''
    return {
        'grid': {'dimension': 1, 'extents': [1.0], 'counts': [counts]},
        'time': {'T': T, 'output_interval': output_interval, 'dt_max': 1.0},
        'model': {'epsilon': epsilon, 'R': R, 'implicit_diffusion': implicit},
        'data': {
            'omega0': 0.0,
            'a': {'samples': [[0.0, 0.0, INFLOW_A], [0.0, 1.0, OUTFLOW_A]]},
            'b': {'samples': [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]},
        },
        'extension': {'implicit': True},
    }


def random_square_dict(seed, counts=33, T=0.5, epsilon=1e-2, R=50.0):
    '''unit square with a smooth random nonnegative omega0, inflow on the left edge and outflow
    on the right edge (tangential top/bottom), random nonnegative b'''
    rng = np.random.default_rng(seed)
    grid = build_grid(2, [1.0, 1.0], [counts, counts])
    x, y = grid.coordinates
    omega0 = rng.uniform(0.2, 1.0) * (1 + np.sin(rng.integers(1, 4) * np.pi * x + rng.uniform(0, 6)) * np.cos(np.pi * y)) / 2
    perimeter = grid.perimeter
    speed_in = rng.uniform(0.1, 0.5)
    speed_out = rng.uniform(0.1, 0.5)
    a_rows = [
        [0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 1.0 + 1e-9, speed_out],
        [0.0, 2.0 - 1e-9, speed_out],
        [0.0, 2.0, 0.0],
        [0.0, 3.0, 0.0],
        [0.0, 3.0 + 1e-9, -speed_in],
        [0.0, perimeter - 1e-9, -speed_in],
    ]
    level = rng.uniform(0.0, 1.5)
    b_rows = [[0.0, s, level * (1 + 0.5 * np.sin(2 * np.pi * s))] for s in np.linspace(0, perimeter, 17)[:-1]]
    return {
        'grid': {'dimension': 2, 'extents': [1.0, 1.0], 'counts': [counts, counts]},
        'time': {'T': T, 'output_interval': T / 5},
        'model': {'epsilon': epsilon, 'R': R},
        'data': {'omega0': omega0.reshape(-1).tolist(), 'a': {'samples': a_rows}, 'b': {'samples': b_rows}},
        'extension': {'implicit': True},
        'seed': seed,
    }


def write_yaml(path, raw):
    with open(path, 'w') as out:
        yaml.safe_dump(raw, out, default_flow_style=False, sort_keys=False)
    return str(path)


@pytest.fixture
def constant_config():
    return config_from_dict(constant_dict())


@pytest.fixture
def inflow_config():
    return config_from_dict(inflow_dict())


@pytest.fixture
def grid_1d():
    return build_grid(1, [1.0], [21])


@pytest.fixture
def grid_2d():
    return build_grid(2, [1.0, 1.0], [9, 9])


@pytest.fixture
def rng():
    return np.random.default_rng(20231019)
