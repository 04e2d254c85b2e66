'''Boundary data sampled in time along the boundary (normal velocity a, inflow density b).'''
import logging
import os

import numpy as np
import pandas as pd

from vortexflux.exceptions import DataError

logger = logging.getLogger(__name__)

CSV_COLUMNS = ['time', 's', 'value']


class BoundarySamples:
    '''values per boundary node at a set of sample times; linear in time between samples,
    held constant outside the sampled range

    :param array times: ascending sample times
    :param array values: shape (len(times), boundary_count)
    '''

    def __init__(self, times, values):
        self.times = np.atleast_1d(np.asarray(times, dtype=float))
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if self.values.shape[0] != len(self.times):
            raise DataError('Got {0} sample times but {1} rows of values'.format(len(self.times), self.values.shape[0]))
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise DataError('Sample times must be strictly increasing')
        if not np.all(np.isfinite(self.values)):
            raise DataError('Boundary samples contain non-finite values')

    def at(self, t):
        if len(self.times) == 1 or t <= self.times[0]:
            return self.values[0].copy()
        if t >= self.times[-1]:
            return self.values[-1].copy()
        k = int(np.searchsorted(self.times, t, side='right')) - 1
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1 - w) * self.values[k] + w * self.values[k + 1]

    def max(self):
        return float(self.values.max())

    def min(self):
        return float(self.values.min())

    def __repr__(self):
        return 'BoundarySamples({0} times, range [{1:.6g}, {2:.6g}])'.format(len(self.times), self.min(), self.max())

    @staticmethod
    def constant(grid, value):
        return BoundarySamples([0.0], np.full((1, grid.boundary_count), float(value)))

    @staticmethod
    def from_rows(grid, rows):
        '''build from (time, arc-length position, value) rows, interpolating along the boundary.
        In 2-D the arc-length coordinate is periodic with the perimeter; in 1-D the positions are 0 and L.
        '''
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != 3 or len(rows) == 0:
            raise DataError('Boundary samples need rows of (time, s, value)')
        times = np.unique(rows[:, 0])
        target = grid.boundary_arclength
        values = []
        for t in times:
            block = rows[rows[:, 0] == t]
            order = np.argsort(block[:, 1])
            s, v = block[order, 1], block[order, 2]
            if grid.dimension == 2:
                values.append(np.interp(target, s, v, period=grid.perimeter))
            else:
                values.append(np.interp(target, s, v))
        return BoundarySamples(times, np.array(values))

    @staticmethod
    def from_csv(grid, path):
        '''read a (time, s, value) table; a header row is optional'''
        if not os.path.isfile(path):
            raise DataError('Boundary data file {0} does not exist'.format(path))
        frame = pd.read_csv(path, comment='#', header=None, names=CSV_COLUMNS)
        frame = frame.apply(pd.to_numeric, errors='coerce').dropna()
        if frame.empty:
            raise DataError('Boundary data file {0} has no numeric rows'.format(path))
        logger.debug('read %d boundary rows from %s', len(frame), path)
        return BoundarySamples.from_rows(grid, frame[CSV_COLUMNS].to_numpy())

    def to_frame(self, grid):
        '''long-format table in the same layout from_csv reads'''
        t = np.repeat(self.times, grid.boundary_count)
        s = np.tile(grid.boundary_arclength, len(self.times))
        return pd.DataFrame({'time': t, 's': s, 'value': self.values.reshape(-1)})
