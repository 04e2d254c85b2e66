'''Field solver for -lap(h) + h = source with boundary flux data, the velocity v = -grad(h),
and a dense Green-operator mode for small grids.

The operator is the vertex-centred 3/5-point stencil with ghost-node closure. Scaling
every row by its dual cell volume gives a symmetric positive definite matrix S = W A,
which is factored once per grid and boundary mode.
'''
import logging
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from vortexflux.exceptions import ConfigurationError, DenseCapExceeded, SolverError

logger = logging.getLogger(__name__)

BOUNDARY_MODES = ('neumann', 'robin', 'dirichlet')


def _axis_operator(n, h):
    '''1-D -d2/dx2 with mirrored ghost rows [2, -2] / h^2 at both ends'''
    main = np.full(n, 2.0)
    lower = np.full(n - 1, -1.0)
    upper = np.full(n - 1, -1.0)
    upper[0] = -2.0
    lower[-1] = -2.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format='csr') / h ** 2


def assemble_operator(grid):
    '''unscaled sparse matrix A of -lap + I over all nodes, ghost-node closure on every boundary row'''
    ops = [_axis_operator(n, h) for n, h in zip(grid.counts, grid.spacing)]
    eyes = [sp.identity(n, format='csr') for n in grid.counts]
    if grid.dimension == 1:
        lap = ops[0]
    else:
        lap = sp.kron(ops[0], eyes[1]) + sp.kron(eyes[0], ops[1])
    return (lap + sp.identity(grid.size)).tocsr()


def flux_load(grid):
    '''sparse N x nb matrix scattering boundary-node arc measures onto their nodes'''
    nb = grid.boundary_count
    return sp.csr_matrix((grid.boundary_measure, (grid.boundary_nodes, np.arange(nb))), shape=(grid.size, nb))


class HelmholtzOperator:
    '''factored discrete problem for one grid and boundary mode

    neumann:   -grad(h).n = a
    robin:     dh/dn + kappa h = a
    dirichlet: h = a
    '''

    def __init__(self, grid, mode='neumann', robin_coefficient=1.0):
        if mode not in BOUNDARY_MODES:
            raise ConfigurationError(
                'boundary mode must be one of {0}'.format(', '.join(BOUNDARY_MODES)), key='model.boundary_mode'
            )
        self.grid = grid
        self.mode = mode
        self.robin_coefficient = robin_coefficient
        self.A = assemble_operator(grid)
        self.weights = grid.cell_volumes.reshape(-1)
        self.B = flux_load(grid)
        S = sp.diags(self.weights) @ self.A
        if mode == 'robin':
            S = S + sp.csr_matrix(
                (robin_coefficient * grid.boundary_measure, (grid.boundary_nodes, grid.boundary_nodes)),
                shape=S.shape,
            )
        self.S = S.tocsc()
        if mode == 'dirichlet':
            self.interior = np.flatnonzero(grid.interior_mask.reshape(-1))
            self.S_II = self.S[self.interior][:, self.interior].tocsc()
            self.S_IB = self.S[self.interior][:, grid.boundary_nodes].tocsc()
            self.lu = spla.splu(self.S_II)
        else:
            self.lu = spla.splu(self.S)
        logger.debug('factored %s operator on %s', mode, grid)

    def rhs(self, source, a):
        f = self.weights * np.asarray(source, dtype=float).reshape(-1)
        a = np.asarray(a, dtype=float)
        if self.mode == 'neumann':
            return f - self.B @ a
        if self.mode == 'robin':
            return f + self.B @ a
        return f[self.interior] - self.S_IB @ a

    def solve(self, source, a):
        b = self.rhs(source, a)
        x = self.lu.solve(b)
        if self.mode == 'dirichlet':
            h = np.empty(self.grid.size)
            h[self.interior] = x
            h[self.grid.boundary_nodes] = a
            return h, b
        return x, b

    def residual(self, h, b):
        '''max-norm residual of the unscaled rows, relative to max(1, |rhs|)'''
        if self.mode == 'dirichlet':
            w = self.weights[self.interior]
            # boundary coupling is already folded into b
            r = self.S_II @ h[self.interior] - b
        else:
            w = self.weights
            r = self.S @ h - b
        return float(np.max(np.abs(r / w)) / max(1.0, np.max(np.abs(b / w))))


@lru_cache(maxsize=32)
def helmholtz_operator(grid, mode='neumann', robin_coefficient=1.0):
    return HelmholtzOperator(grid, mode, robin_coefficient)


def solve_h(omega, a, grid, mode='neumann', robin_coefficient=1.0, tol=1e-10):
    '''solve -lap(h) + h = omega with boundary data a (one value per boundary node)

    :param array omega: source, shaped like the grid
    :param array a: boundary data in arc-length order
    :param Grid grid: grid both live on
    :param str mode: neumann (default), robin or dirichlet
    :param float tol: accepted relative residual
    '''
    op = helmholtz_operator(grid, mode, float(robin_coefficient))
    h, b = op.solve(omega, a)
    residual = op.residual(h, b)
    if residual > tol:
        # one pass of iterative refinement before giving up
        if mode == 'dirichlet':
            h[op.interior] += op.lu.solve(b - op.S_II @ h[op.interior])
        else:
            h += op.lu.solve(b - op.S @ h)
        residual = op.residual(h, b)
        logger.debug('refined field solve, residual now %.3e', residual)
        if residual > tol:
            raise SolverError('Field solve did not reach tolerance {0:.1e}'.format(tol), residual)
    return h.reshape(grid.shape)


def elliptic_residual(h, source, a, grid, mode='neumann', robin_coefficient=1.0):
    '''relative residual of a stored field against its source and boundary data'''
    op = helmholtz_operator(grid, mode, float(robin_coefficient))
    h = np.asarray(h, dtype=float).reshape(-1)
    residual = op.residual(h, op.rhs(source, a))
    if mode == 'dirichlet':
        residual = max(residual, float(np.max(np.abs(h[grid.boundary_nodes] - np.asarray(a, dtype=float)))))
    return residual


def velocity(h, grid):
    '''nodal v = -grad(h): centred inside, one-sided second order on the boundary; shape (dimension, *grid.shape)'''
    grad = np.gradient(np.asarray(h, dtype=float), *grid.spacing, edge_order=2)
    if grid.dimension == 1:
        grad = [grad]
    return -np.stack(grad)


def face_velocity(h, grid):
    '''compact v = -grad(h) on the faces between neighbouring nodes, one array per axis.
    At interior nodes the discrete divergence of these faces equals source - h.
    '''
    return tuple(-np.diff(h, axis=axis) / step for axis, step in enumerate(grid.spacing))


def dual_norm(u, grid):
    '''discrete H^-1 norm: sqrt(sum W u (-lap + I)^-1 u) with u restricted to interior nodes'''
    u = np.where(grid.interior_mask, u, 0.0)
    k = solve_h(u, np.zeros(grid.boundary_count), grid)
    return float(np.sqrt(max(np.sum(grid.cell_volumes * u * k), 0.0)))


class GreenOperators:
    '''dense K1 (source -> field) and K2 (boundary flux -> field) for the Neumann problem

    K1 = S^-1 W, which equals A^-1, and K2 = -S^-1 B, so that h = K1 omega + K2 a.
    '''

    def __init__(self, grid, K1, K2):
        self.grid = grid
        self.K1 = K1
        self.K2 = K2

    def apply(self, omega, a):
        return (self.K1 @ np.asarray(omega).reshape(-1) + self.K2 @ np.asarray(a)).reshape(self.grid.shape)

    @property
    def min_entry(self):
        return float(self.K1.min())


def build_green_operators(grid, cap=4096):
    if grid.size > cap:
        raise DenseCapExceeded(grid.size, cap)
    op = helmholtz_operator(grid)
    factor = scipy.linalg.cho_factor(op.S.toarray())
    K1 = scipy.linalg.cho_solve(factor, np.diag(op.weights))
    K2 = -scipy.linalg.cho_solve(factor, op.B.toarray())
    logger.info('assembled dense Green operators for %d nodes', grid.size)
    return GreenOperators(grid, K1, K2)


def kernel_bound_check(green, grid, constant=None):
    '''compare the discrete kernel G(x, y) = K1[x, y] / cell_volume[y] with the envelope C (1 + |ln|x - y||)

    Returns a dict with the smallest envelope constant that holds off the diagonal, the
    fraction of off-diagonal entries above C times the envelope (C defaults to that constant),
    and the number of entries scanned.
    '''
    if grid.dimension != 2:
        raise ConfigurationError('kernel bound check needs a 2-D grid', key='grid.dimension')
    points = np.stack([x.reshape(-1) for x in grid.coordinates], axis=1)
    dist = np.sqrt(np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1))
    kernel = green.K1 / grid.cell_volumes.reshape(-1)[None, :]
    off = ~np.eye(grid.size, dtype=bool)
    envelope = 1.0 + np.abs(np.log(dist[off]))
    ratios = np.abs(kernel[off]) / envelope
    measured = float(ratios.max())
    C = measured if constant is None else float(constant)
    violations = float(np.mean(ratios > C * (1 + 1e-12)))
    return {'envelope_constant': measured, 'violation_fraction': violations, 'entries': int(off.sum())}


def kernel_value(green, grid, x, y):
    '''discrete kernel between two nodes given as index tuples'''
    i = np.ravel_multi_index(x, grid.shape)
    j = np.ravel_multi_index(y, grid.shape)
    return float(green.K1[i, j] / grid.cell_volumes.reshape(-1)[j])


def dump_operator(grid, path, mode='neumann', robin_coefficient=1.0):
    '''write the symmetric scaled operator as (row, col, value) text'''
    coo = helmholtz_operator(grid, mode, float(robin_coefficient)).S.tocoo()
    table = np.column_stack([coo.row, coo.col, coo.data])
    np.savetxt(path, table, fmt=['%d', '%d', '%.17g'], header='row col value')
    return len(coo.data)
