'''One time step of w_t + div(w v) = eps lap(w) with Dirichlet data on the whole boundary.

Advection is first-order upwind in conservative form on face velocities; diffusion is
explicit by default or backward Euler (operator split) on request. Boundary nodes are
overwritten with the Dirichlet values after every step.
'''
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from vortexflux.elliptic import face_velocity, velocity
from vortexflux.exceptions import ConfigurationError, StabilityError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransportParams:
    epsilon: float
    R: float
    dt: float
    cfl_target: float = 0.45
    implicit_diffusion: bool = False
    dt_max: float = 0.05

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigurationError('epsilon must be nonnegative', key='model.epsilon')
        if self.R <= 0:
            raise ConfigurationError('R must be positive', key='model.R')
        if self.dt <= 0:
            raise ConfigurationError('dt must be positive', key='time.dt')
        if not 0 < self.cfl_target <= 1:
            raise ConfigurationError('cfl_target must lie in (0, 1]', key='time.cfl_target')


def cutoff(phi, R):
    '''clamp to [0, R]'''
    if R <= 0:
        raise ConfigurationError('R must be positive', key='model.R')
    return np.clip(phi, 0.0, R)


def _slab(ndim, axis, sl):
    index = [slice(None)] * ndim
    index[axis] = sl
    return tuple(index)


def faces_from_nodes(v, grid):
    '''average a nodal vector field (dimension, *shape) onto the faces between neighbours'''
    v = np.asarray(v, dtype=float).reshape((grid.dimension,) + grid.shape)
    d = grid.dimension
    return tuple(
        0.5 * (v[axis][_slab(d, axis, slice(None, -1))] + v[axis][_slab(d, axis, slice(1, None))])
        for axis in range(d)
    )


def _as_faces(v, grid):
    if isinstance(v, (tuple, list)):
        return tuple(np.asarray(f, dtype=float) for f in v)
    return faces_from_nodes(v, grid)


def cfl_dt(v, epsilon, grid, cfl_target=0.45, dt_max=0.05):
    '''cfl_target / (sum over axes of max|v_axis| / h + 2 eps sum h^-2); dt_max when nothing limits the step

    :param v: nodal field (dimension, *shape) or a tuple of face arrays
    '''
    if isinstance(v, (tuple, list)):
        speeds = [float(np.max(np.abs(f))) if np.size(f) else 0.0 for f in v]
    else:
        v = np.asarray(v, dtype=float).reshape((grid.dimension,) + grid.shape)
        speeds = [float(np.max(np.abs(c))) for c in v]
    rate = sum(s / h for s, h in zip(speeds, grid.spacing))
    rate += 2.0 * epsilon * sum(h ** -2 for h in grid.spacing)
    if rate == 0:
        return dt_max
    return cfl_target / rate


def stability_limit(faces, epsilon, grid, implicit=False):
    '''largest dt keeping every interior update a convex combination: 1 / max(outflow rate + diffusion rate)'''
    d = grid.dimension
    rate = np.zeros(grid.shape)
    for axis, (f, h) in enumerate(zip(faces, grid.spacing)):
        out_hi = np.maximum(f, 0.0) / h
        out_lo = np.maximum(-f, 0.0) / h
        rate[_slab(d, axis, slice(None, -1))] += out_hi
        rate[_slab(d, axis, slice(1, None))] += out_lo
    if not implicit:
        rate += 2.0 * epsilon * sum(h ** -2 for h in grid.spacing)
    worst = float(np.max(rate[grid.interior_mask])) if np.any(grid.interior_mask) else 0.0
    return np.inf if worst == 0 else 1.0 / worst


def upwind_fluxes(omega, faces, grid):
    d = grid.dimension
    fluxes = []
    for axis, f in enumerate(faces):
        left = omega[_slab(d, axis, slice(None, -1))]
        right = omega[_slab(d, axis, slice(1, None))]
        fluxes.append(np.maximum(f, 0.0) * left + np.minimum(f, 0.0) * right)
    return fluxes


def upwind_divergence(omega, faces, grid):
    '''conservative divergence of the upwind flux; meaningful at interior nodes only'''
    d = grid.dimension
    div = np.zeros(grid.shape)
    for axis, (F, h) in enumerate(zip(upwind_fluxes(omega, faces, grid), grid.spacing)):
        div[_slab(d, axis, slice(1, -1))] += np.diff(F, axis=axis) / h
    return div


def laplacian(omega, grid):
    d = grid.dimension
    lap = np.zeros(grid.shape)
    for axis, h in enumerate(grid.spacing):
        lo = omega[_slab(d, axis, slice(None, -2))]
        mid = omega[_slab(d, axis, slice(1, -1))]
        hi = omega[_slab(d, axis, slice(2, None))]
        lap[_slab(d, axis, slice(1, -1))] += (lo - 2 * mid + hi) / h ** 2
    return lap


@lru_cache(maxsize=16)
def implicit_diffusion_solver(grid, coefficient):
    '''factored I - coefficient * lap on interior nodes plus the interior/boundary coupling block'''
    second = []
    for n, h in zip(grid.counts, grid.spacing):
        second.append(sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h ** 2)
    if grid.dimension == 1:
        lap = second[0]
    else:
        lap = sp.kron(second[0], sp.identity(grid.counts[1])) + sp.kron(sp.identity(grid.counts[0]), second[1])
    lap = lap.tocsr()
    interior = np.flatnonzero(grid.interior_mask.reshape(-1))
    L_II = lap[interior][:, interior]
    L_IB = lap[interior][:, grid.boundary_nodes]
    M = (sp.identity(len(interior)) - coefficient * L_II).tocsc()
    return interior, spla.splu(M), (coefficient * L_IB).tocsr()


def advect_diffuse_step(omega, v, params, dirichlet, grid):
    '''advance omega by params.dt

    :param array omega: current density, shaped like the grid
    :param v: face velocities (tuple per axis) or a nodal vector field
    :param TransportParams params: epsilon, R, dt and scheme switches
    :param array dirichlet: boundary values at the new time, in arc-length order
    '''
    omega = np.asarray(omega, dtype=float)
    faces = _as_faces(v, grid)
    limit = stability_limit(faces, params.epsilon, grid, params.implicit_diffusion)
    if params.dt > limit * (1 + 1e-12):
        raise StabilityError(params.dt, limit)
    new = omega - params.dt * upwind_divergence(omega, faces, grid)
    if params.epsilon > 0 and not params.implicit_diffusion:
        new += params.dt * params.epsilon * laplacian(omega, grid)
    new = grid.with_boundary(new, dirichlet)
    if params.epsilon > 0 and params.implicit_diffusion:
        interior, lu, coupling = implicit_diffusion_solver(grid, params.dt * params.epsilon)
        flat = new.reshape(-1)
        flat[interior] = lu.solve(flat[interior] + coupling @ np.asarray(dirichlet, dtype=float))
    return new


def _boundary_face_slices(grid, axis):
    '''index tuples selecting, on an axis face array, the faces between boundary and interior nodes'''
    d = grid.dimension
    first = [slice(1, -1)] * d
    last = [slice(1, -1)] * d
    first[axis] = 0
    last[axis] = -1
    return tuple(first), tuple(last)


def mass_defect(omega, omega_new, faces, params, grid):
    '''residual of the discrete mass balance over interior cells for one step:
    change in interior mass + dt * (advective outflow - eps * normal-derivative flux) through
    the interior/boundary faces. Normalized by the larger L1 norm of the two states.
    '''
    faces = _as_faces(faces, grid)
    interior = grid.interior_mask
    vol = grid.cell_volumes
    change = float(np.sum((omega_new - omega)[interior] * vol[interior]))
    diffused = omega_new if params.implicit_diffusion else omega
    fluxes = upwind_fluxes(omega, faces, grid)
    outflow = 0.0
    normal_derivative = 0.0
    d = grid.dimension
    for axis, (F, h) in enumerate(zip(fluxes, grid.spacing)):
        area = float(np.prod([s for k, s in enumerate(grid.spacing) if k != axis])) if d > 1 else 1.0
        first, last = _boundary_face_slices(grid, axis)
        outflow += area * (float(np.sum(F[last])) - float(np.sum(F[first])))
        jumps = np.diff(diffused, axis=axis) / h
        normal_derivative += area * (float(np.sum(jumps[last])) - float(np.sum(jumps[first])))
    residual = change + params.dt * outflow - params.dt * params.epsilon * normal_derivative
    scale = max(float(np.sum(np.abs(omega) * vol)), float(np.sum(np.abs(omega_new) * vol)))
    return abs(residual) / scale if scale > 0 else abs(residual)


def nonconservative_gap(omega, h, source, grid):
    '''max over interior nodes of |upwind div(w v) - (v . grad w + w (source - h))| with v = -grad(h)'''
    conservative = upwind_divergence(omega, face_velocity(h, grid), grid)
    grad = np.gradient(omega, *grid.spacing)
    if grid.dimension == 1:
        grad = [grad]
    v = velocity(h, grid)
    expanded = sum(v[k] * grad[k] for k in range(grid.dimension)) + omega * (source - h)
    return float(np.max(np.abs(conservative - expanded)[grid.interior_mask]))
