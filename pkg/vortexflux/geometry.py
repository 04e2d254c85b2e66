'''Structured grids on an interval or a rectangle, boundary bookkeeping, and the
distance function / cut-off of unity used by the boundary-layer diagnostics.

Fields are numpy arrays shaped like ``grid.counts``; node (i, j) sits at
(i*hx, j*hy). Boundary nodes are listed counter-clockwise by arc length starting
at the origin corner, and every per-boundary array follows that order.
'''
import enum
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from vortexflux.exceptions import ConfigurationError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    '''uniform vertex-centred grid; immutable and hashable so solvers can cache factorizations per grid'''

    dimension: int
    extents: tuple
    counts: tuple

    @cached_property
    def spacing(self):
        return tuple(L / (n - 1) for L, n in zip(self.extents, self.counts))

    @property
    def shape(self):
        return tuple(self.counts)

    @property
    def size(self):
        return int(np.prod(self.counts))

    @property
    def min_extent(self):
        return min(self.extents)

    @property
    def perimeter(self):
        if self.dimension == 1:
            return 2.0
        return 2.0 * sum(self.extents)

    @cached_property
    def axes(self):
        return tuple(np.arange(n) * h for n, h in zip(self.counts, self.spacing))

    @cached_property
    def coordinates(self):
        '''tuple of coordinate arrays, one per axis, each shaped like the grid'''
        return tuple(np.meshgrid(*self.axes, indexing='ij'))

    @cached_property
    def axis_weights(self):
        '''trapezoid weights per axis: h in the interior, h/2 at both ends'''
        weights = []
        for n, h in zip(self.counts, self.spacing):
            w = np.full(n, h)
            w[0] = w[-1] = h / 2
            weights.append(w)
        return tuple(weights)

    @cached_property
    def cell_volumes(self):
        '''measure of the dual cell around every node'''
        vol = self.axis_weights[0]
        for w in self.axis_weights[1:]:
            vol = np.multiply.outer(vol, w)
        return vol

    @cached_property
    def _boundary(self):
        if self.dimension == 1:
            n = self.counts[0]
            nodes = np.array([0, n - 1])
            normals = np.array([[-1.0], [1.0]])
            arclength = np.array([0.0, self.extents[0]])
            return nodes, normals, arclength
        nx, ny = self.counts
        hx, hy = self.spacing
        Lx, Ly = self.extents
        index, normals, arclength = [], [], []
        for i in range(nx - 1):
            index.append((i, 0))
            normals.append((0.0, -1.0))
            arclength.append(i * hx)
        for j in range(ny - 1):
            index.append((nx - 1, j))
            normals.append((1.0, 0.0))
            arclength.append(Lx + j * hy)
        for i in range(nx - 1, 0, -1):
            index.append((i, ny - 1))
            normals.append((0.0, 1.0))
            arclength.append(Lx + Ly + (Lx - i * hx))
        for j in range(ny - 1, 0, -1):
            index.append((0, j))
            normals.append((-1.0, 0.0))
            arclength.append(2 * Lx + Ly + (Ly - j * hy))
        flat = np.ravel_multi_index(tuple(np.array(index).T), self.shape)
        return flat, np.array(normals), np.array(arclength)

    @property
    def boundary_nodes(self):
        '''flat node indices of the boundary, in arc-length order'''
        return self._boundary[0]

    @property
    def boundary_normals(self):
        '''unit outward normal per boundary node, shape (nb, dimension); corners take the normal of the edge they start'''
        return self._boundary[1]

    @property
    def boundary_arclength(self):
        return self._boundary[2]

    @property
    def boundary_count(self):
        return len(self.boundary_nodes)

    @cached_property
    def boundary_measure(self):
        '''discrete arc length carried by each boundary node (counting measure in 1-D)'''
        if self.dimension == 1:
            return np.ones(2)
        s = self.boundary_arclength
        nxt = np.roll(s, -1)
        nxt[-1] += self.perimeter
        prv = np.roll(s, 1)
        prv[0] -= self.perimeter
        return (nxt - prv) / 2

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.size, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask.reshape(self.shape)

    @property
    def interior_mask(self):
        return ~self.boundary_mask

    def boundary_values(self, u):
        return np.asarray(u).reshape(-1)[self.boundary_nodes]

    def with_boundary(self, u, values):
        '''copy of u with the boundary nodes overwritten by values'''
        out = np.array(u, dtype=float).reshape(-1)
        out[self.boundary_nodes] = values
        return out.reshape(self.shape)

    def integrate(self, u):
        return float(np.sum(self.cell_volumes * u))

    def dirichlet_energy(self, u):
        '''sum over grid faces of |du/h|^2 times the face's dual volume'''
        total = 0.0
        for axis, h in enumerate(self.spacing):
            diff = np.diff(u, axis=axis) / h
            total += float(np.sum(diff ** 2 * _face_volume(self, axis)))
        return total

    def header(self):
        return [
            '# dimension {0}'.format(self.dimension),
            '# extents {0}'.format(' '.join(repr(float(L)) for L in self.extents)),
            '# counts {0}'.format(' '.join(str(int(n)) for n in self.counts)),
        ]

    @staticmethod
    def from_header(lines):
        '''rebuild a grid from the comment header of a field file'''
        found = {}
        for line in lines:
            parts = line.lstrip('#').split()
            if parts:
                found[parts[0]] = parts[1:]
        try:
            return build_grid(
                int(found['dimension'][0]), [float(x) for x in found['extents']], [int(x) for x in found['counts']]
            )
        except KeyError as e:
            raise DataError('Field header is missing the {0} line'.format(e.args[0]))

    def __str__(self):
        return 'Grid(dim={0}, extents={1}, counts={2})'.format(self.dimension, list(self.extents), list(self.counts))


def _face_volume(grid, axis):
    '''dual volume of the faces normal to axis, broadcastable to np.diff(u, axis=axis)'''
    h = grid.spacing[axis]
    for other in range(grid.dimension):
        w = np.ones(grid.counts[other] - 1) * h if other == axis else grid.axis_weights[other]
        vol = np.multiply.outer(vol, w) if other else w
    return vol


def build_grid(dimension, extents, counts):
    '''validate and construct a Grid

    :param int dimension: 1 or 2
    :param list extents: physical length per axis
    :param list counts: nodes per axis, at least 3 each
    '''
    if dimension not in (1, 2):
        raise ConfigurationError('dimension must be 1 or 2', key='grid.dimension')
    extents = tuple(float(L) for L in np.atleast_1d(extents))
    counts = tuple(int(n) for n in np.atleast_1d(counts))
    if len(extents) != dimension or len(counts) != dimension:
        raise ConfigurationError('extents and counts need one entry per axis', key='grid.extents')
    if any(L <= 0 or not np.isfinite(L) for L in extents):
        raise ConfigurationError('extents must be positive', key='grid.extents')
    if any(n < 3 for n in counts):
        raise ConfigurationError('counts must be at least 3 per axis', key='grid.counts')
    return Grid(dimension, extents, counts)


class ScalarField:
    '''nodal values bound to their grid (and optionally a time); used where a field travels with its grid'''

    def __init__(self, grid, values, time=None):
        values = np.asarray(values, dtype=float)
        if values.size != grid.size:
            raise DataError('Field has {0} values but the grid has {1} nodes'.format(values.size, grid.size))
        if not np.all(np.isfinite(values)):
            raise DataError('Field contains non-finite values')
        self.grid = grid
        self.values = values.reshape(grid.shape)
        self.time = time

    def __repr__(self):
        return 'ScalarField({0}, t={1}, min={2:.6g}, max={3:.6g})'.format(
            self.grid, self.time, self.values.min(), self.values.max()
        )


class Label(enum.IntEnum):
    MINUS = -1
    ZERO = 0
    PLUS = 1


class BoundaryClassification:
    '''inflow/tangential/outflow partition of the boundary nodes'''

    def __init__(self, grid, labels, tol_sign=0.0):
        self.grid = grid
        self.labels = np.asarray(labels, dtype=int)
        self.tol_sign = tol_sign

    def mask(self, label):
        return self.labels == int(label)

    @property
    def plus(self):
        return self.mask(Label.PLUS)

    @property
    def zero(self):
        return self.mask(Label.ZERO)

    @property
    def minus(self):
        return self.mask(Label.MINUS)

    def measure(self, label):
        return float(np.sum(self.grid.boundary_measure[self.mask(label)]))

    @property
    def measures(self):
        return {l.name: self.measure(l) for l in Label}

    def nodes(self, label):
        return self.grid.boundary_nodes[self.mask(label)]

    def __eq__(self, other):
        return isinstance(other, BoundaryClassification) and np.array_equal(self.labels, other.labels)

    def __repr__(self):
        m = self.measures
        return 'BoundaryClassification(+{0:.4g} 0:{1:.4g} -{2:.4g})'.format(m['PLUS'], m['ZERO'], m['MINUS'])


def classify_boundary(grid, a, tol_sign=0.0):
    '''label each boundary node Plus / Zero / Minus by the sign of the normal velocity a

    :param Grid grid: grid the samples live on
    :param array a: one normal-velocity value per boundary node
    :param float tol_sign: values within +-tol_sign are labelled Zero
    '''
    a = np.asarray(a, dtype=float)
    labels = np.where(a > tol_sign, Label.PLUS, np.where(a < -tol_sign, Label.MINUS, Label.ZERO))
    return BoundaryClassification(grid, labels, tol_sign)


def assert_fixed_partition(grid, times, a_values, tol_sign=0.0):
    '''classify at the first sample time and require every later sample to agree

    :param array times: sample times, ascending
    :param array a_values: shape (len(times), boundary_count)
    '''
    a_values = np.atleast_2d(a_values)
    reference = classify_boundary(grid, a_values[0], tol_sign)
    for t, row in zip(times[1:], a_values[1:]):
        current = classify_boundary(grid, row, tol_sign)
        if current != reference:
            changed = np.flatnonzero(current.labels != reference.labels)
            raise DataError(
                'Boundary sign pattern of a changes at t={0:.6g} on {1} node(s) (first: boundary index {2})'.format(
                    t, len(changed), changed[0]
                )
            )
    return reference


class DistanceField:
    '''exact distance to the boundary of a rectangle/interval, positive inside'''

    def __init__(self, grid):
        self.grid = grid
        gaps = self._gaps()
        self.values = np.min(gaps, axis=0)
        self._nearest = np.argmin(gaps, axis=0)

    def _gaps(self):
        gaps = []
        for x, L in zip(self.grid.coordinates, self.grid.extents):
            gaps.append(x)
            gaps.append(L - x)
        return np.array(gaps)

    @property
    def nearest_face(self):
        '''index 2*axis + side of the closest face for every node (side 0 is the low face)'''
        return self._nearest

    def gradient(self):
        '''unit inward normal of the nearest face (first axis wins ties); equals -n on boundary nodes'''
        grad = np.zeros((self.grid.dimension,) + self.grid.shape)
        for face in range(2 * self.grid.dimension):
            axis, sign = divmod(face, 2)
            grad[axis][self._nearest == face] = 1.0 if sign == 0 else -1.0
        flat = grad.reshape(self.grid.dimension, -1)
        flat[:, self.grid.boundary_nodes] = -self.grid.boundary_normals.T
        return grad


def distance_field(grid):
    return DistanceField(grid)


def check_sigma(grid, sigma):
    '''the band sigma < d < 2 sigma must fit inside half the shortest extent'''
    if not (sigma > 0 and 2 * sigma < grid.min_extent / 2):
        raise ConfigurationError(
            'sigma={0} out of range: need 0 < 2*sigma < {1:.6g}'.format(sigma, grid.min_extent / 2), key='sigma'
        )


def unit_approx(distance, sigma):
    '''cut-off of unity: 0 for d <= sigma, (d - sigma)/sigma up to 2 sigma, 1 beyond

    :param DistanceField distance: distance to the boundary
    :param float sigma: inner band width
    '''
    check_sigma(distance.grid, sigma)
    return np.clip((distance.values - sigma) / sigma, 0.0, 1.0)
