'''Space-time extension of the inflow data b and the initial density into the whole domain,
followed by mollification at scale eps.

The pipeline is: classify the boundary from a at t = 0, extend b from the inflow part to
the whole boundary with a cosine taper in arc length that decays to zero, run the heat equation with that
boundary trace and the initial density, then smooth the result (and a) with a Gaussian of
radius proportional to eps and project back onto the bounds and sign pattern.
'''
import logging

import numpy as np
from scipy.ndimage import gaussian_filter1d

from vortexflux import geometry
from vortexflux.exceptions import DataError, StabilityError
from vortexflux.transport import implicit_diffusion_solver, laplacian

logger = logging.getLogger(__name__)

MOLLIFIER_FAMILY = 'gaussian'


def _arc_gaps(grid, source, target):
    '''arc-length distance between boundary nodes (periodic around a rectangle)'''
    s = grid.boundary_arclength
    gaps = np.abs(s[target][:, None] - s[source][None, :])
    if grid.dimension == 2:
        gaps = np.minimum(gaps, grid.perimeter - gaps)
    return gaps


def extend_gamma(b, classification, grid, taper_length=None):
    '''extend inflow values to the whole boundary

    Inflow nodes keep b. Every other node takes the value of its nearest inflow node (in arc
    length) times the weight 0.5 (1 + cos(pi delta / L)), which falls from 1 next to the inflow
    part to 0 at the taper length L; samples of b off the inflow part are ignored. Without
    inflow nodes the trace is b itself.

    :param array b: boundary values in arc-length order, shape (nb,) or (nt, nb)
    :param BoundaryClassification classification: partition fixed at t = 0
    :param float taper_length: L, defaults to a quarter of the shortest extent
    '''
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise DataError('Inflow data b must be nonnegative (min {0:.6g})'.format(b.min()))
    if taper_length is None:
        taper_length = 0.25 * grid.min_extent
    minus = np.flatnonzero(classification.minus)
    out = b.copy()
    if len(minus) == 0:
        return out
    others = np.flatnonzero(~classification.minus)
    if len(others):
        gaps = _arc_gaps(grid, minus, others)
        nearest = np.argmin(gaps, axis=1)
        delta = gaps[np.arange(len(others)), nearest]
        taper = np.where(delta < taper_length, 0.5 * (1 + np.cos(np.pi * delta / taper_length)), 0.0)
        out[..., others] = taper * b[..., minus[nearest]]
    return out


def explicit_heat_limit(grid):
    return 1.0 / (2.0 * sum(h ** -2 for h in grid.spacing))


def heat_extend(boundary, omega0, grid, T, dt=None, implicit=False, max_stored=2001):
    '''solve w_t = lap(w) on the grid with Dirichlet trace boundary(t) and w(0) = omega0

    :param boundary: callable t -> values per boundary node
    :param array omega0: initial density; also the value stored at t = 0 on the boundary
    :param float T: final time
    :param float dt: step; defaults to 0.9 of the explicit bound (explicit) or T/400 (implicit)
    :param int max_stored: cap on stored time levels (strided evenly, endpoints kept)
    :returns: (times, values) with values shaped (len(times), *grid.shape)
    '''
    omega0 = np.asarray(omega0, dtype=float).reshape(grid.shape)
    if np.any(omega0 < 0):
        raise DataError('Initial density must be nonnegative')
    limit = explicit_heat_limit(grid)
    if dt is None:
        dt = T / 400 if implicit else 0.9 * limit
    if not implicit and dt > limit * (1 + 1e-12):
        raise StabilityError(dt, limit)
    steps = max(1, int(np.ceil(T / dt - 1e-9)))
    dt = T / steps
    stride = max(1, int(np.ceil(steps / max(max_stored - 1, 1))))

    w = omega0.copy()
    times, stored = [0.0], [w.copy()]
    for k in range(1, steps + 1):
        t = k * dt
        g = np.asarray(boundary(t), dtype=float)
        if implicit:
            interior, lu, coupling = implicit_diffusion_solver(grid, dt)
            w = grid.with_boundary(w, g)
            flat = w.reshape(-1)
            flat[interior] = lu.solve(flat[interior] + coupling @ g)
        else:
            w = grid.with_boundary(w + dt * laplacian(w, grid), g)
        if k % stride == 0 or k == steps:
            times.append(t)
            stored.append(w.copy())
    logger.debug('heat extension: %d steps of %.3g, %d levels stored', steps, dt, len(times))
    return np.array(times), np.array(stored)


def _smooth_boundary(a, grid, radius):
    if grid.dimension == 1 or radius <= 0:
        return a.copy()
    sigma = radius / float(np.mean(grid.boundary_measure))
    return gaussian_filter1d(a, sigma, axis=-1, mode='wrap')


def mollify(omega_breve, a, eps, grid, classification, aleph, scale=1.0):
    '''Gaussian smoothing of radius scale * eps followed by projection

    The density is clamped back to [0, aleph]. The normal velocity keeps the sign pattern of
    the classification: Plus nodes max(a_eps, a/2), Minus nodes min(a_eps, a/2), Zero nodes 0.
    eps = 0 returns the inputs projected but unsmoothed.

    :param array omega_breve: shape (nt, *grid.shape)
    :param array a: shape (nt, nb)
    '''
    radius = scale * eps
    smoothed = np.array(omega_breve, dtype=float)
    if radius > 0:
        for axis, h in enumerate(grid.spacing):
            smoothed = gaussian_filter1d(smoothed, radius / h, axis=axis + 1, mode='nearest')
    smoothed = np.clip(smoothed, 0.0, aleph)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    a_eps = _smooth_boundary(a, grid, radius)
    plus = classification.plus
    minus = classification.minus
    a_eps[:, plus] = np.maximum(a_eps[:, plus], 0.5 * a[:, plus])
    a_eps[:, minus] = np.minimum(a_eps[:, minus], 0.5 * a[:, minus])
    a_eps[:, classification.zero] = 0.0
    return smoothed, a_eps


def _at(times, values, t):
    if t <= times[0]:
        return values[0]
    if t >= times[-1]:
        return values[-1]
    k = int(np.searchsorted(times, t, side='right')) - 1
    w = (t - times[k]) / (times[k + 1] - times[k])
    return (1 - w) * values[k] + w * values[k + 1]


class ExtensionResult:
    '''extension and its mollified counterparts on a common set of time levels'''

    def __init__(self, grid, times, omega_breve, omega_breve_eps, a_eps, classification, mollifier):
        self.grid = grid
        self.times = times
        self.omega_breve = omega_breve
        self.omega_breve_eps = omega_breve_eps
        self.a_eps = a_eps
        self.classification = classification
        self.mollifier = mollifier

    @property
    def aleph_measured(self):
        return float(self.omega_breve.max())

    def omega_breve_at(self, t):
        return _at(self.times, self.omega_breve, t)

    def omega_eps_at(self, t):
        return _at(self.times, self.omega_breve_eps, t)

    def a_eps_at(self, t):
        return _at(self.times, self.a_eps, t)

    def dirichlet_at(self, t):
        return self.grid.boundary_values(self.omega_eps_at(t))

    def summary(self):
        return {
            'time_levels': len(self.times),
            'aleph_measured': self.aleph_measured,
            'min_omega_breve': float(self.omega_breve.min()),
            'measure_plus': self.classification.measure(geometry.Label.PLUS),
            'measure_zero': self.classification.measure(geometry.Label.ZERO),
            'measure_minus': self.classification.measure(geometry.Label.MINUS),
            'mollifier': self.mollifier['family'],
            'mollifier_radius': self.mollifier['radius'],
        }


def build_extension(config, epsilon=None):
    '''run classification, boundary extension, heat extension and mollification for a SimConfig'''
    grid = config.grid
    eps = config.epsilon if epsilon is None else epsilon
    classification = geometry.assert_fixed_partition(grid, config.a.times, config.a.values, config.tol_sign)
    taper = config.taper_length

    def trace(t):
        return extend_gamma(config.b.at(t), classification, grid, taper)

    times, omega_breve = heat_extend(
        trace, config.omega0, grid, config.T, dt=config.extension_dt, implicit=config.extension_implicit
    )
    if omega_breve.max() > config.aleph + 1e-12:
        raise DataError(
            'Extension reaches {0:.6g}, above aleph = {1:.6g}'.format(float(omega_breve.max()), config.aleph)
        )
    a = np.array([config.a.at(t) for t in times])
    omega_eps, a_eps = mollify(omega_breve, a, eps, grid, classification, config.aleph, config.mollifier_scale)
    mollifier = {'family': MOLLIFIER_FAMILY, 'radius': config.mollifier_scale * eps}
    logger.info('built extension: %d time levels, max %.6g', len(times), float(omega_breve.max()))
    return ExtensionResult(grid, times, omega_breve, omega_eps, a_eps, classification, mollifier)
