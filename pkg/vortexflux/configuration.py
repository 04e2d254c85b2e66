import os
import json
import hashlib
import logging
import dataclasses

import yaml
import numpy as np

from vortexflux.data import BoundarySamples
from vortexflux.exceptions import ConfigurationError
from vortexflux.geometry import Grid, build_grid

logger = logging.getLogger(__name__)

REQUIRED = object()

# section -> key -> (default, attribute on SimConfig)
SCHEMA = {
    'grid': {'dimension': (REQUIRED, None), 'extents': (REQUIRED, None), 'counts': (REQUIRED, None)},
    'time': {
        'T': (REQUIRED, 'T'),
        'dt': (None, 'dt'),
        'cfl_target': (0.45, 'cfl_target'),
        'dt_max': (0.05, 'dt_max'),
        'output_interval': (None, 'output_interval'),
    },
    'model': {
        'epsilon': (REQUIRED, 'epsilon'),
        'R': (REQUIRED, 'R'),
        'tol_sign': (0.0, 'tol_sign'),
        'implicit_diffusion': (False, 'implicit_diffusion'),
        'boundary_mode': ('neumann', 'boundary_mode'),
        'robin_coefficient': (1.0, 'robin_coefficient'),
    },
    'solver': {'tol': (1e-10, 'solver_tol'), 'dense_cap': (4096, 'dense_cap')},
    'picard': {
        'tol': (1e-10, 'picard_tol'),
        'max_iters': (50, 'picard_max_iters'),
        'relaxation': (1.0, 'relaxation'),
    },
    'data': {'omega0': (REQUIRED, None), 'a': (REQUIRED, None), 'b': (REQUIRED, None), 'aleph': (None, None)},
    'extension': {
        'dt': (None, 'extension_dt'),
        'implicit': (False, 'extension_implicit'),
        'taper_length': (None, 'taper_length'),
        'mollifier_scale': (1.0, 'mollifier_scale'),
    },
    'diagnostics': {'sigma1_fraction': (0.125, 'sigma1_fraction'), 'test_functions': (3, 'test_functions')},
}


@dataclasses.dataclass(eq=False)
class SimConfig:
    '''fully resolved run configuration. Every section.key that fell back to its default is listed in defaults'''

    grid: Grid
    T: float
    epsilon: float
    R: float
    omega0: np.ndarray
    a: BoundarySamples
    b: BoundarySamples
    aleph: float
    dt: float = None
    cfl_target: float = 0.45
    dt_max: float = 0.05
    output_interval: float = None
    picard_tol: float = 1e-10
    picard_max_iters: int = 50
    relaxation: float = 1.0
    solver_tol: float = 1e-10
    dense_cap: int = 4096
    tol_sign: float = 0.0
    implicit_diffusion: bool = False
    boundary_mode: str = 'neumann'
    robin_coefficient: float = 1.0
    extension_dt: float = None
    extension_implicit: bool = False
    taper_length: float = None
    mollifier_scale: float = 1.0
    sigma1_fraction: float = 0.125
    test_functions: int = 3
    seed: int = 0
    source: str = None
    defaults: list = dataclasses.field(default_factory=list)

    def __post_init__(self):
        self.omega0 = np.asarray(self.omega0, dtype=float).reshape(self.grid.shape)
        checks = [
            (self.T > 0, 'T must be positive', 'time.T'),
            (self.epsilon >= 0, 'epsilon must be nonnegative', 'model.epsilon'),
            (self.R > 0, 'R must be positive', 'model.R'),
            (self.picard_tol > 0, 'picard tol must be positive', 'picard.tol'),
            (self.picard_max_iters >= 1, 'picard max_iters must be at least 1', 'picard.max_iters'),
            (0 < self.relaxation <= 1, 'relaxation must lie in (0, 1]', 'picard.relaxation'),
            (0 < self.cfl_target <= 1, 'cfl_target must lie in (0, 1]', 'time.cfl_target'),
            (self.dt_max > 0, 'dt_max must be positive', 'time.dt_max'),
            (self.dt is None or self.dt > 0, 'dt must be positive', 'time.dt'),
            (self.output_interval is None or self.output_interval > 0, 'output_interval must be positive', 'time.output_interval'),
            (self.solver_tol > 0, 'solver tol must be positive', 'solver.tol'),
            (self.tol_sign >= 0, 'tol_sign must be nonnegative', 'model.tol_sign'),
            (self.boundary_mode in ('neumann', 'robin', 'dirichlet'), 'unknown boundary_mode', 'model.boundary_mode'),
            (0 < self.sigma1_fraction < 0.5, 'sigma1_fraction must lie in (0, 0.5)', 'diagnostics.sigma1_fraction'),
            (bool(np.all(self.omega0 >= 0)), 'omega0 must be nonnegative', 'data.omega0'),
            (self.aleph >= float(self.omega0.max()) - 1e-12, 'aleph must be at least max(omega0)', 'data.aleph'),
            (self.aleph >= self.b.max() - 1e-12, 'aleph must be at least max(b)', 'data.aleph'),
        ]
        for ok, message, key in checks:
            if not ok:
                raise ConfigurationError(message, key=key)
        if self.a.values.shape[1] != self.grid.boundary_count or self.b.values.shape[1] != self.grid.boundary_count:
            raise ConfigurationError('boundary data do not match the grid', key='data.a')

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def sigma1(self):
        return self.sigma1_fraction * self.grid.min_extent

    def __repr__(self):
        return '\n'.join(
            [
                'vortexflux configuration:',
                '  Source: {0}'.format(self.source),
                '  Grid: {0}'.format(self.grid),
                '  Final time T: {0}'.format(self.T),
                '  Time step: {0} (cfl {1}, max {2}, output every {3})'.format(
                    self.dt or 'adaptive', self.cfl_target, self.dt_max, self.output_interval or 'step'
                ),
                '  Viscosity epsilon: {0}'.format(self.epsilon),
                '  Cut-off R: {0}'.format(self.R),
                '  Data bound aleph: {0}'.format(self.aleph),
                '  Boundary mode: {0}'.format(self.boundary_mode),
                '  Implicit diffusion? {0}'.format(self.implicit_diffusion),
                '  Picard: tol {0}, max {1} iterations, relaxation {2}'.format(
                    self.picard_tol, self.picard_max_iters, self.relaxation
                ),
                '  Solver tol: {0} (dense cap {1})'.format(self.solver_tol, self.dense_cap),
                '  Extension: dt {0}, implicit? {1}, taper {2}, mollifier scale {3}'.format(
                    self.extension_dt or 'auto', self.extension_implicit, self.taper_length or 'auto', self.mollifier_scale
                ),
                '  Seed: {0}'.format(self.seed),
                '  Defaults applied: {0}'.format(', '.join(self.defaults) or 'none'),
            ]
        )

    def __str__(self):
        return repr(self)

    @staticmethod
    def all_config_locations():
        return [os.path.expanduser(x) for x in ['./vflux.yaml', '~/.config/vflux/vflux.yaml', '~/.vflux.yaml']]

    @staticmethod
    def find_config_file():
        for possible_loc in SimConfig.all_config_locations():
            if os.path.isfile(possible_loc):
                return possible_loc
        raise ConfigurationError(
            'No configuration file found; pass --config or create one of: {0}'.format(
                ', '.join(SimConfig.all_config_locations())
            )
        )

    @staticmethod
    def from_file(filename=None):
        if filename is None:
            filename = SimConfig.find_config_file()
        return parse_config(filename)


def _line_numbers(node, prefix=''):
    '''map dotted keys to 1-based line numbers from a composed YAML node tree'''
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = prefix + str(key_node.value)
            lines[key] = key_node.start_mark.line + 1
            lines.update(_line_numbers(value_node, key + '.'))
    return lines


def _boundary_data(grid, value, key, base_dir):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return BoundarySamples.constant(grid, value)
    if isinstance(value, str):
        return BoundarySamples.from_csv(grid, os.path.join(base_dir, value))
    if isinstance(value, dict) and 'samples' in value:
        return BoundarySamples.from_rows(grid, value['samples'])
    raise ConfigurationError('expected a number, a CSV path or {samples: [[t, s, value], ...]}', key=key)


def _initial_density(grid, value, base_dir):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(grid.shape, float(value))
    if isinstance(value, str):
        from vortexflux.storage import read_field

        field = read_field(os.path.join(base_dir, value))
        if field.grid != grid:
            raise ConfigurationError('omega0 file was written for {0}'.format(field.grid), key='data.omega0')
        return field.values
    if isinstance(value, (list, tuple)):
        values = np.asarray(value, dtype=float)
        if values.size != grid.size:
            raise ConfigurationError('omega0 needs {0} values'.format(grid.size), key='data.omega0')
        return values.reshape(grid.shape)
    raise ConfigurationError('expected a number, a field CSV path or a list of nodal values', key='data.omega0')


def config_from_dict(raw, base_dir='.', lines=None, source=None):
    '''resolve a nested dict (as read from YAML) into a SimConfig

    :param dict raw: sections grid/time/model/solver/picard/data/extension/diagnostics and seed
    :param str base_dir: directory relative data paths are resolved against
    :param dict lines: dotted key -> line number, for error messages
    '''
    lines = lines or {}
    if not isinstance(raw, dict):
        raise ConfigurationError('configuration must be a mapping of sections')
    for section, body in raw.items():
        if section == 'seed':
            continue
        if section not in SCHEMA:
            raise ConfigurationError('unknown section', key=section, line=lines.get(section))
        if not isinstance(body, dict):
            raise ConfigurationError('section must be a mapping', key=section, line=lines.get(section))
        for key in body:
            if key not in SCHEMA[section]:
                dotted = '{0}.{1}'.format(section, key)
                raise ConfigurationError('unknown key', key=dotted, line=lines.get(dotted))
    resolved, defaults = {}, []
    for section, keys in SCHEMA.items():
        body = raw.get(section) or {}
        for key, (default, _) in keys.items():
            dotted = '{0}.{1}'.format(section, key)
            if key in body and body[key] is not None:
                resolved[dotted] = body[key]
            elif default is REQUIRED:
                raise ConfigurationError('missing required key', key=dotted, line=lines.get(section))
            else:
                resolved[dotted] = default
                if dotted != 'data.aleph':
                    defaults.append(dotted)
    try:
        grid = build_grid(resolved['grid.dimension'], resolved['grid.extents'], resolved['grid.counts'])
        omega0 = _initial_density(grid, resolved['data.omega0'], base_dir)
        a = _boundary_data(grid, resolved['data.a'], 'data.a', base_dir)
        b = _boundary_data(grid, resolved['data.b'], 'data.b', base_dir)
        aleph = resolved['data.aleph']
        if aleph is None:
            aleph = max(float(omega0.max()), b.max())
            defaults.append('data.aleph')
            logger.info('aleph defaulted to %.6g', aleph)
        kwargs = {}
        for section, keys in SCHEMA.items():
            for key, (_, attr) in keys.items():
                if attr is not None:
                    kwargs[attr] = resolved['{0}.{1}'.format(section, key)]
        seed = raw.get('seed')
        if seed is None:
            seed = 0
            defaults.append('seed')
        return SimConfig(
            grid=grid,
            omega0=omega0,
            a=a,
            b=b,
            aleph=float(aleph),
            seed=int(seed),
            source=source,
            defaults=defaults,
            **kwargs
        )
    except ConfigurationError as e:
        if e.line is None and e.key is not None and e.key in lines:
            raise ConfigurationError(e.reason, key=e.key, line=lines[e.key])
        raise
    except (TypeError, ValueError) as e:
        raise ConfigurationError('invalid configuration: {0}'.format(e))


def parse_config(path):
    '''read a YAML configuration file into a SimConfig'''
    if not os.path.isfile(path):
        raise ConfigurationError('configuration file {0} does not exist'.format(path))
    with open(path, 'r') as config_yaml:
        text = config_yaml.read()
    try:
        lines = _line_numbers(yaml.compose(text, Loader=yaml.SafeLoader))
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        raise ConfigurationError('malformed YAML: {0}'.format(e), line=mark.line + 1 if mark else None)
    return config_from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)), lines=lines, source=path)


def resolved_dict(config):
    '''the resolved configuration as plain data (arrays summarized by shape), suitable for YAML or JSON'''
    out = {
        'grid': {
            'dimension': config.grid.dimension,
            'extents': list(config.grid.extents),
            'counts': list(config.grid.counts),
        },
        'data': {'aleph': config.aleph},
        'seed': config.seed,
    }
    for section, keys in SCHEMA.items():
        for key, (_, attr) in keys.items():
            if attr is not None:
                value = getattr(config, attr)
                out.setdefault(section, {})[key] = value.item() if isinstance(value, np.generic) else value
    return out


def config_hash(config):
    '''sha256 over the canonical resolved config and the bytes of every data array'''
    digest = hashlib.sha256()
    digest.update(json.dumps(resolved_dict(config), sort_keys=True).encode('utf8'))
    for array in (config.omega0, config.a.times, config.a.values, config.b.times, config.b.values):
        digest.update(np.ascontiguousarray(array, dtype=float).tobytes())
    return digest.hexdigest()
