'''Time marching of the coupled field/density problem with a fixed-point loop per step,
plus the cut-off threshold search and viscosity-continuation families built on it.
'''
import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from vortexflux.data import BoundarySamples
from vortexflux.elliptic import dual_norm, face_velocity, solve_h, velocity
from vortexflux.exceptions import CertificationError, ConfigurationError, DataError, PicardFailure, StabilityError, VortexFluxException
from vortexflux.extension import build_extension
from vortexflux.geometry import build_grid
from vortexflux.transport import TransportParams, advect_diffuse_step, cfl_dt, cutoff, mass_defect

logger = logging.getLogger(__name__)

MAX_HALVINGS = 8


class SimState:
    def __init__(self, t, omega, h, v):
        self.t = t
        self.omega = omega
        self.h = h
        self.v = v


class Trajectory:
    '''snapshots (t, omega, h, v) of one run together with per-step statistics.
    Statistics cover every step, not only the stored ones.
    '''

    def __init__(self, grid, epsilon, R):
        self.grid = grid
        self.epsilon = epsilon
        self.R = R
        self.times = []
        self.omegas = []
        self.hs = []
        self.vs = []
        self.iterations = []
        self.ratios = []
        self.steps = []
        self._energy = 0.0

    def append(self, state):
        if self.times and state.t <= self.times[-1]:
            raise DataError('snapshot times must increase ({0} after {1})'.format(state.t, self.times[-1]))
        self.times.append(float(state.t))
        self.omegas.append(np.array(state.omega))
        self.hs.append(np.array(state.h))
        self.vs.append(np.array(state.v))

    def record_step(self, dt, state, info):
        omega = state.omega
        self.iterations.append(info['iterations'])
        self.ratios.append(info['ratio'])
        self._energy += dt * self.grid.dirichlet_energy(omega)
        grad_h = np.sqrt(np.sum(state.v ** 2, axis=0))
        self.steps.append(
            {
                't': state.t,
                'dt': dt,
                'iterations': info['iterations'],
                'ratio': info['ratio'],
                'l1': self.grid.integrate(np.abs(omega)),
                'min_omega': float(omega.min()),
                'max_omega': float(omega.max()),
                'max_h': float(state.h.max()),
                'max_grad_h': float(grad_h.max()),
                'mass_defect': info['mass_defect'],
            }
        )

    @property
    def omega(self):
        return np.array(self.omegas)

    @property
    def h(self):
        return np.array(self.hs)

    def step_table(self):
        return pd.DataFrame(self.steps)

    def _extreme(self, snapshot_values, column, pick):
        values = list(snapshot_values)
        if self.steps:
            values.append(pick(s[column] for s in self.steps))
        return pick(values)

    def min_omega(self):
        return self._extreme((float(o.min()) for o in self.omegas), 'min_omega', min)

    def max_omega(self):
        return self._extreme((float(o.max()) for o in self.omegas), 'max_omega', max)

    def max_h(self):
        return self._extreme((float(h.max()) for h in self.hs), 'max_h', max)

    def max_grad_h(self):
        return self._extreme((float(np.sqrt(np.sum(v ** 2, axis=0)).max()) for v in self.vs), 'max_grad_h', max)

    def l1_series(self):
        return np.array([self.grid.integrate(np.abs(o)) for o in self.omegas])

    def max_l1(self):
        return self._extreme(self.l1_series(), 'l1', max)

    def gradient_energy(self):
        '''sqrt(eps) times the discrete L2(space-time) norm of grad(omega)'''
        energy = self._energy
        if not self.steps and len(self.times) > 1:
            # snapshots only: trapezoid in time
            e = np.array([self.grid.dirichlet_energy(o) for o in self.omegas])
            energy = float(trapezoid(e, self.times))
        return float(np.sqrt(self.epsilon * energy))

    def max_mass_defect(self):
        return max((s['mass_defect'] for s in self.steps), default=0.0)

    def sup_difference(self, other):
        '''max |omega - omega'| over all snapshots; both runs must share their snapshot times'''
        if len(self.times) != len(other.times) or not np.allclose(self.times, other.times, rtol=0, atol=1e-12):
            raise DataError('trajectories do not share snapshot times')
        return float(max(np.max(np.abs(a - b)) for a, b in zip(self.omegas, other.omegas)))

    def summary(self):
        return {
            'epsilon': self.epsilon,
            'R': self.R,
            'snapshots': len(self.times),
            'steps': len(self.steps),
            'T': self.times[-1] if self.times else 0.0,
            'min_omega': self.min_omega(),
            'max_omega': self.max_omega(),
            'max_h': self.max_h(),
            'max_grad_h': self.max_grad_h(),
            'max_l1': self.max_l1(),
            'gradient_energy': self.gradient_energy(),
            'max_picard_iterations': max(self.iterations, default=0),
            'max_mass_defect': self.max_mass_defect(),
        }


class Simulation:
    '''one configured run: owns the extension data and advances states'''

    def __init__(self, config, extension=None):
        self.config = config
        self.grid = config.grid
        self.extension = extension if extension is not None else build_extension(config)

    def field(self, omega, t):
        return solve_h(
            cutoff(omega, self.config.R),
            self.extension.a_eps_at(t),
            self.grid,
            self.config.boundary_mode,
            self.config.robin_coefficient,
            self.config.solver_tol,
        )

    def initial_state(self):
        omega = np.array(self.extension.omega_eps_at(0.0))
        h = self.field(omega, 0.0)
        return SimState(0.0, omega, h, velocity(h, self.grid))

    def transport_params(self, dt):
        c = self.config
        return TransportParams(c.epsilon, c.R, dt, c.cfl_target, c.implicit_diffusion, c.dt_max)

    def picard_solve_step(self, state, dt, lagged=False):
        '''advance one step by iterating field solve and transport until successive densities agree

        :param SimState state: state at the start of the step
        :param float dt: step length
        :param bool lagged: one sweep only, with the field of the starting density
        :returns: (new state, info dict with iterations, residuals, ratio, mass_defect)
        '''
        c = self.config
        t1 = state.t + dt
        params = self.transport_params(dt)
        dirichlet = self.extension.dirichlet_at(t1)
        iterate = state.omega
        residuals = []
        for k in range(1, c.picard_max_iters + 1):
            faces = face_velocity(self.field(iterate, t1), self.grid)
            candidate = advect_diffuse_step(state.omega, faces, params, dirichlet, self.grid)
            new = iterate + c.relaxation * (candidate - iterate)
            scale = max(np.linalg.norm(iterate), np.linalg.norm(new))
            residuals.append(float(np.linalg.norm(new - iterate) / scale) if scale > 0 else 0.0)
            iterate = new
            logger.debug('t=%.6g picard %d residual %.3e', t1, k, residuals[-1])
            if lagged or residuals[-1] <= c.picard_tol:
                break
        else:
            raise PicardFailure(t1, residuals)
        ratios = [b / a for a, b in zip(residuals, residuals[1:]) if a > 0]
        h = self.field(iterate, t1)
        info = {
            'iterations': len(residuals),
            'residuals': residuals,
            'ratio': ratios[-1] if ratios else 0.0,
            'mass_defect': mass_defect(state.omega, candidate, faces, params, self.grid),
        }
        return SimState(t1, iterate, h, velocity(h, self.grid)), info

    def output_times(self):
        c = self.config
        if c.output_interval is None:
            return None
        count = max(1, int(round(c.T / c.output_interval)))
        return [c.T * k / count for k in range(1, count + 1)]

    def next_dt(self, state):
        c = self.config
        if c.dt is not None:
            return c.dt
        faces = face_velocity(state.h, self.grid)
        # backward Euler diffusion puts no bound on the step
        epsilon = 0.0 if c.implicit_diffusion else c.epsilon
        return min(cfl_dt(faces, epsilon, self.grid, c.cfl_target, c.dt_max), c.dt_max)

    def run(self, lagged=False):
        c = self.config
        traj = Trajectory(self.grid, c.epsilon, c.R)
        state = self.initial_state()
        traj.append(state)
        outputs = self.output_times()
        pending = list(outputs) if outputs else [c.T]
        tiny = 1e-12 * c.T
        logger.info('run start: eps=%g R=%g T=%g on %s', c.epsilon, c.R, c.T, self.grid)
        while state.t < c.T - tiny:
            target = pending[0]
            dt = min(self.next_dt(state), target - state.t)
            for attempt in range(MAX_HALVINGS + 1):
                try:
                    new, info = self.picard_solve_step(state, dt, lagged=lagged)
                    break
                except StabilityError as e:
                    if attempt == MAX_HALVINGS:
                        raise
                    dt = min(dt / 2, e.admissible_dt)
                    logger.debug('t=%.6g step refused, retrying with dt=%.3g', state.t, dt)
            if abs(new.t - target) <= tiny:
                new.t = target
            traj.record_step(dt, new, info)
            state = new
            if state.t >= target - tiny:
                pending.pop(0)
                traj.append(state)
            elif outputs is None:
                traj.append(state)
        logger.info('run done: %d steps, %d snapshots', len(traj.steps), len(traj.times))
        return traj


def run(config, extension=None):
    return Simulation(config, extension).run()


def _run_member(config, extension=None):
    return Simulation(config, extension).run()


def _map(fn, jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, *job) for job in jobs]
            return [f.result() for f in futures]
    return [fn(*job) for job in jobs]


class RStarEstimate:
    def __init__(self, R, max_omega, probes, trajectory=None):
        self.R = R
        self.certificate = (R, 2 * R)
        self.max_omega = max_omega
        self.probes = probes
        self.trajectory = trajectory

    def table(self):
        return pd.DataFrame(self.probes)

    def __repr__(self):
        return 'RStarEstimate(R={0:.6g}, certificate={1}, probes={2})'.format(self.R, self.certificate, len(self.probes))


def estimate_R_star(config, margin=0.01, bisection_steps=6, cap_factor=64.0, workers=1, extension=None):
    '''smallest probed R whose run never comes within margin of R and matches the run at 2R to 1e-10

    Probing starts at aleph, doubles until a certificate is found, then bisects between the
    last failure and the first success.
    '''
    extension = extension if extension is not None else build_extension(config)
    cache = {}
    probes = []

    def trajectory(R):
        return cache[R]

    def certify(R):
        missing = [r for r in (R, 2 * R) if r not in cache]
        results = _map(_run_member, [(config.replace(R=r), extension) for r in missing], workers)
        cache.update(zip(missing, results))
        max_omega = trajectory(R).max_omega()
        diff = trajectory(R).sup_difference(trajectory(2 * R))
        ok = max_omega < R * (1 - margin) and diff < 1e-10
        probes.append({'R': R, 'max_omega': max_omega, 'sup_difference': diff, 'certified': ok})
        logger.info('R probe %.6g: max omega %.6g, sup diff %.3e, certified=%s', R, max_omega, diff, ok)
        return ok

    start = max(config.aleph, 1e-12)
    cap = cap_factor * start
    hi = start
    while not certify(hi):
        hi *= 2
        if hi > cap:
            raise CertificationError('no R up to {0:.6g} certifies cut-off inactivity'.format(cap), probes)
    failed = [p['R'] for p in probes if not p['certified']]
    lo = max(failed) if failed else trajectory(hi).max_omega() / (1 - margin)
    for _ in range(bisection_steps):
        if hi - lo <= 1e-12 * hi:
            break
        mid = 0.5 * (lo + hi)
        if certify(mid):
            hi = mid
        else:
            lo = mid
    return RStarEstimate(hi, trajectory(hi).max_omega(), probes, trajectory(hi))


class ContinuationResult:
    def __init__(self, config, epsilons, trajectories, table, cauchy, failures):
        self.config = config
        self.epsilons = epsilons
        self.trajectories = trajectories
        self.table = table
        self.cauchy = cauchy
        self.failures = failures

    def ratio(self, column):
        '''max / min of a table column over the successful members'''
        values = self.table[column].dropna().to_numpy(dtype=float)
        if len(values) == 0 or values.min() <= 0:
            return float('inf') if len(values) and values.max() > 0 else 1.0
        return float(values.max() / values.min())

    def distances_decreasing(self):
        d = self.cauchy['distance'].to_numpy(dtype=float)
        return bool(np.all(np.diff(d) < 0))


def _eps_member(config):
    try:
        return _run_member(config), None
    except VortexFluxException as e:
        return None, str(e)


def space_time_dual_distance(first, second):
    '''sqrt of the trapezoid-in-time integral of the squared discrete H^-1 distance between two runs'''
    if len(first.times) != len(second.times) or not np.allclose(first.times, second.times, rtol=0, atol=1e-12):
        raise DataError('trajectories do not share snapshot times')
    sq = [dual_norm(a - b, first.grid) ** 2 for a, b in zip(first.omegas, second.omegas)]
    return float(np.sqrt(trapezoid(sq, first.times))) if len(sq) > 1 else float(np.sqrt(sq[0]))


def eps_continuation(config, eps_list, workers=1, snapshots=20):
    '''run one trajectory per viscosity (strictly decreasing) and tabulate the uniform bounds and
    the H^-1 distances between consecutive members. Members share snapshot times; a member that
    fails is recorded and skipped.
    '''
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigurationError('eps list must be positive and strictly decreasing', key='sweep.eps')
    if config.output_interval is None:
        config = config.replace(output_interval=config.T / snapshots)
    members = _map(_eps_member, [(config.replace(epsilon=e),) for e in eps_list], workers)
    rows, trajectories, failures = [], {}, []
    for eps, (traj, error) in zip(eps_list, members):
        if traj is None:
            failures.append({'epsilon': eps, 'error': error})
            logger.warning('eps=%g failed: %s', eps, error)
            continue
        trajectories[eps] = traj
        rows.append(
            {
                'epsilon': eps,
                'gradient_energy': traj.gradient_energy(),
                'max_l1': traj.max_l1(),
                'max_omega': traj.max_omega(),
                'max_grad_h': traj.max_grad_h(),
                'min_omega': traj.min_omega(),
                'steps': len(traj.steps),
            }
        )
    done = [e for e in eps_list if e in trajectories]
    cauchy = [
        {'eps_i': a, 'eps_j': b, 'distance': space_time_dual_distance(trajectories[a], trajectories[b])}
        for a, b in zip(done, done[1:])
    ]
    return ContinuationResult(
        config,
        done,
        trajectories,
        pd.DataFrame(rows, columns=['epsilon', 'gradient_energy', 'max_l1', 'max_omega', 'max_grad_h', 'min_omega', 'steps']),
        pd.DataFrame(cauchy, columns=['eps_i', 'eps_j', 'distance']),
        failures,
    )


def refine(config):
    '''same problem on the grid with every spacing halved (coarse nodes are every other fine node)'''
    g = config.grid
    fine = build_grid(g.dimension, g.extents, [2 * n - 1 for n in g.counts])
    index = tuple(slice(None, None, 2) for _ in range(g.dimension))
    omega0 = np.zeros(fine.shape)
    omega0[index] = config.omega0
    # fill the new nodes by averaging their coarse neighbours along each axis
    for axis in range(g.dimension):
        odd = [slice(None)] * g.dimension
        odd[axis] = slice(1, None, 2)
        lo = [slice(None)] * g.dimension
        lo[axis] = slice(0, -1, 2)
        hi = [slice(None)] * g.dimension
        hi[axis] = slice(2, None, 2)
        omega0[tuple(odd)] = 0.5 * (omega0[tuple(lo)] + omega0[tuple(hi)])
    a = BoundarySamples.from_rows(fine, config.a.to_frame(g).to_numpy())
    b = BoundarySamples.from_rows(fine, config.b.to_frame(g).to_numpy())
    dt = config.dt / 2 if config.dt is not None else None
    return config.replace(grid=fine, omega0=omega0, a=a, b=b, dt=dt)


def grid_refinement_study(config):
    '''run a config and its refined counterpart; report the sup difference on shared nodes and times'''
    if config.output_interval is None:
        config = config.replace(output_interval=config.T / 10)
    fine_config = refine(config)
    coarse = _run_member(config)
    fine = _run_member(fine_config)
    index = (slice(None),) + tuple(slice(None, None, 2) for _ in range(config.grid.dimension))
    diff = float(np.max(np.abs(coarse.omega - fine.omega[index])))
    return {
        'coarse_counts': list(config.grid.counts),
        'fine_counts': list(fine_config.grid.counts),
        'sup_difference': diff,
        'coarse_max_omega': coarse.max_omega(),
        'fine_max_omega': fine.max_omega(),
    }


def refinement_table(study):
    '''one-row table of a grid_refinement_study result, counts written as 41x41'''
    row = dict(study)
    for key in ('coarse_counts', 'fine_counts'):
        row[key] = 'x'.join(str(n) for n in study[key])
    return pd.DataFrame([row])
