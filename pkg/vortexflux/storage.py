'''Run directories on disk.

A run directory holds:

    config.yaml          self-contained resolved configuration (data in the CSVs below)
    omega0.csv a.csv b.csv
    fields/omega_NNNN.csv, fields/h_NNNN.csv
    steps.csv            per-step statistics
    diagnostics.csv      InvariantReport
    manifest.yaml        RunManifest

Field files carry a comment header (# dimension, # extents, # counts, # time) followed
by one row per node: index columns, coordinate columns, value. Numbers are written with
17 significant digits so a reread is exact.
'''
import glob
import logging
import os
import uuid

import arrow
import numpy as np
import pandas as pd
import yaml

from vortexflux import __version__
from vortexflux.configuration import config_hash, parse_config, resolved_dict
from vortexflux.coupling import SimState, Trajectory
from vortexflux.elliptic import velocity
from vortexflux.exceptions import DataError
from vortexflux.geometry import Grid, ScalarField

logger = logging.getLogger(__name__)

FIELDS_DIR = 'fields'
MANIFEST = 'manifest.yaml'
CONFIG = 'config.yaml'


def write_field(path, grid, values, time=None):
    values = np.asarray(values, dtype=float).reshape(grid.shape)
    index = np.indices(grid.shape).reshape(grid.dimension, -1).T
    coords = np.stack([x.reshape(-1) for x in grid.coordinates], axis=1)
    table = np.column_stack([index, coords, values.reshape(-1)])
    header = grid.header()
    if time is not None:
        header.append('# time {0!r}'.format(float(time)))
    fmt = ['%d'] * grid.dimension + ['%.17g'] * (grid.dimension + 1)
    with open(path, 'w') as out:
        out.write('\n'.join(header) + '\n')
        np.savetxt(out, table, fmt=fmt, delimiter=',')


def read_field(path):
    '''read a field file back into a ScalarField (grid rebuilt from the header)'''
    if not os.path.isfile(path):
        raise DataError('Field file {0} does not exist'.format(path))
    with open(path, 'r') as src:
        header = []
        for line in src:
            if not line.startswith('#'):
                break
            header.append(line.strip())
    grid = Grid.from_header(header)
    time = None
    for line in header:
        parts = line.lstrip('#').split()
        if parts and parts[0] == 'time':
            time = float(parts[1])
    table = np.loadtxt(path, delimiter=',', comments='#', ndmin=2)
    if table.shape != (grid.size, 2 * grid.dimension + 1):
        raise DataError('Field file {0} has {1} rows for a grid of {2} nodes'.format(path, len(table), grid.size))
    values = np.empty(grid.shape)
    index = tuple(table[:, k].astype(int) for k in range(grid.dimension))
    values[index] = table[:, -1]
    return ScalarField(grid, values, time)


def _field_name(kind, k):
    return os.path.join(FIELDS_DIR, '{0}_{1:04d}.csv'.format(kind, k))


def write_trajectory(run_dir, traj):
    '''write every snapshot as omega/h field files; returns the relative paths written'''
    os.makedirs(os.path.join(run_dir, FIELDS_DIR), exist_ok=True)
    written = []
    for k, (t, omega, h) in enumerate(zip(traj.times, traj.omegas, traj.hs)):
        for kind, values in (('omega', omega), ('h', h)):
            name = _field_name(kind, k)
            write_field(os.path.join(run_dir, name), traj.grid, values, t)
            written.append(name)
    if traj.steps:
        traj.step_table().to_csv(os.path.join(run_dir, 'steps.csv'), index=False, float_format='%.17g')
        written.append('steps.csv')
    logger.debug('wrote %d snapshot files to %s', len(written), run_dir)
    return written


def read_trajectory(run_dir, epsilon=0.0, R=np.inf):
    '''rebuild a Trajectory from the field files of a run directory; v is recomputed from h'''
    omega_files = sorted(glob.glob(os.path.join(run_dir, FIELDS_DIR, 'omega_*.csv')))
    if not omega_files:
        raise DataError('No field files under {0}'.format(os.path.join(run_dir, FIELDS_DIR)))
    traj = None
    for path in omega_files:
        omega = read_field(path)
        h_path = path.replace('omega_', 'h_')
        h = read_field(h_path)
        if h.grid != omega.grid or h.time != omega.time:
            raise DataError('{0} does not match {1}'.format(h_path, path))
        if traj is None:
            traj = Trajectory(omega.grid, epsilon, R)
        traj.append(SimState(omega.time, omega.values, h.values, velocity(h.values, omega.grid)))
    return traj


def write_config(run_dir, config):
    '''resolved configuration plus the data it refers to, so the directory can be rerun or validated alone'''
    grid = config.grid
    raw = resolved_dict(config)
    write_field(os.path.join(run_dir, 'omega0.csv'), grid, config.omega0, 0.0)
    config.a.to_frame(grid).to_csv(os.path.join(run_dir, 'a.csv'), index=False, float_format='%.17g')
    config.b.to_frame(grid).to_csv(os.path.join(run_dir, 'b.csv'), index=False, float_format='%.17g')
    raw['data'].update({'omega0': 'omega0.csv', 'a': 'a.csv', 'b': 'b.csv'})
    with open(os.path.join(run_dir, CONFIG), 'w') as out:
        yaml.safe_dump(raw, out, default_flow_style=False, sort_keys=True)
    return [CONFIG, 'omega0.csv', 'a.csv', 'b.csv']


def read_config(run_dir):
    return parse_config(os.path.join(run_dir, CONFIG))


class RunManifest:
    '''who/what/when of a run directory; the hash identifies the resolved configuration'''

    def __init__(self, config_hash, run_id, started, finished=None, outputs=None, seed=0, defaults=None, extra=None):
        self.config_hash = config_hash
        self.run_id = run_id
        self.started = started
        self.finished = finished
        self.outputs = list(outputs or [])
        self.seed = seed
        self.defaults = list(defaults or [])
        self.extra = dict(extra or {})

    @staticmethod
    def start(config, extra=None):
        digest = config_hash(config)
        run_id = '{0}-{1}'.format(digest[:12], uuid.uuid4().hex[:8])
        return RunManifest(
            digest, run_id, arrow.utcnow().isoformat(), seed=config.seed, defaults=config.defaults, extra=extra
        )

    def finish(self, outputs):
        for name in outputs:
            if name not in self.outputs:
                self.outputs.append(name)
        self.finished = arrow.utcnow().isoformat()

    @property
    def elapsed(self):
        if self.finished is None:
            return None
        return (arrow.get(self.finished) - arrow.get(self.started)).total_seconds()

    def to_dict(self):
        return {
            'config_hash': self.config_hash,
            'run_id': self.run_id,
            'started': self.started,
            'finished': self.finished,
            'outputs': self.outputs,
            'seed': self.seed,
            'defaults': self.defaults,
            'extra': self.extra,
            'version': __version__,
        }

    def to_file(self, run_dir):
        with open(os.path.join(run_dir, MANIFEST), 'w') as out:
            yaml.safe_dump(self.to_dict(), out, default_flow_style=False, sort_keys=True)

    @staticmethod
    def from_file(run_dir):
        path = os.path.join(run_dir, MANIFEST)
        if not os.path.isfile(path):
            raise DataError('No manifest at {0}'.format(path))
        with open(path, 'r') as src:
            raw = yaml.safe_load(src) or {}
        raw.pop('version', None)
        try:
            return RunManifest(**raw)
        except TypeError as e:
            raise DataError('Malformed manifest {0}: {1}'.format(path, e))

    def __repr__(self):
        return 'RunManifest({0}, hash {1}, {2} outputs)'.format(self.run_id, self.config_hash[:12], len(self.outputs))


def write_table(path, frame):
    frame.to_csv(path, index=False, float_format='%.17g')
    return os.path.basename(path)


def write_plot_file(path, x, y, header):
    '''two whitespace-separated columns, ready for gnuplot or np.loadtxt'''
    np.savetxt(path, np.column_stack([x, y]), fmt='%.17g', header=header)
    return os.path.basename(path)


def read_table(path):
    if not os.path.isfile(path):
        raise DataError('Table {0} does not exist'.format(path))
    return pd.read_csv(path, comment='#')
