'''Quantitative checks over a finished Trajectory: positivity, L1 and gradient bounds, the
maximum principle, elliptic and mass consistency, the weak identity against admissible test
functions, and the boundary-layer flux split.

Every threshold below is a convention of this package; the bounds being checked only
assert that some constant exists.
'''
import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
import yaml
from scipy.integrate import trapezoid
from scipy.spatial import cKDTree

from vortexflux import geometry
from vortexflux.elliptic import elliptic_residual
from vortexflux.exceptions import DataError
from vortexflux.transport import cutoff, nonconservative_gap

logger = logging.getLogger(__name__)

POSITIVITY_TOL = 1e-10
MAX_PRINCIPLE_TOL = 1e-8
MASS_IDENTITY_TOL = 1e-10
FAMILY_RATIO = 3.0
REPORT_COLUMNS = ['name', 'status', 'value', 'tolerance', 'property', 'fatal', 'detail']


@dataclass
class CheckResult:
    name: str
    passed: object
    value: float
    tolerance: float
    property: str
    fatal: bool = True
    detail: str = ''

    @property
    def status(self):
        if self.passed is None:
            return 'n/a'
        return 'pass' if self.passed else 'fail'


class InvariantReport:
    '''one row per check plus run metadata; serialized as CSV with the metadata in comment lines'''

    def __init__(self, metadata=None):
        self.metadata = dict(metadata or {})
        self.checks = []

    def add(self, check):
        if any(c.name == check.name for c in self.checks):
            raise DataError('Check {0} is already in the report'.format(check.name))
        self.checks.append(check)
        logger.info('%s: %s (value %.6g)', check.name, check.status, check.value)
        return check

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __len__(self):
        return len(self.checks)

    def failed(self):
        '''names of the fatal checks that failed'''
        return [c.name for c in self.checks if c.fatal and c.passed is False]

    @property
    def passed(self):
        return not self.failed()

    def to_frame(self):
        rows = []
        for c in self.checks:
            row = asdict(c)
            row['status'] = c.status
            del row['passed']
            rows.append(row)
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def to_csv(self, path):
        with open(path, 'w') as out:
            for key in sorted(self.metadata):
                out.write('# {0}\n'.format(yaml.safe_dump({key: self.metadata[key]}, default_flow_style=True, width=2 ** 16).strip()[1:-1]))
            self.to_frame().to_csv(out, index=False, float_format='%.17g')

    @staticmethod
    def from_csv(path):
        metadata = {}
        with open(path, 'r') as src:
            for line in src:
                if not line.startswith('#'):
                    break
                metadata.update(yaml.safe_load('{' + line[1:].strip() + '}'))
        frame = pd.read_csv(path, comment='#', keep_default_na=False, dtype={'detail': str, 'name': str})
        report = InvariantReport(metadata)
        for row in frame.to_dict('records'):
            passed = {'pass': True, 'fail': False}.get(row['status'])
            fatal = row['fatal'] if isinstance(row['fatal'], bool) else str(row['fatal']) == 'True'
            report.checks.append(
                CheckResult(
                    row['name'], passed, float(row['value']), float(row['tolerance']), row['property'], fatal, row['detail']
                )
            )
        return report


def _family_ratio(values):
    values = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if len(values) == 0 or values.max() == 0:
        return 1.0
    if values.min() <= 0:
        return np.inf
    return float(values.max() / values.min())


def check_positivity(traj, aleph):
    '''minimum of omega over all snapshots and steps must not drop below -1e-10 max(aleph, 1)'''
    value = traj.min_omega()
    tolerance = -POSITIVITY_TOL * max(aleph, 1.0)
    return CheckResult('positivity', value >= tolerance, value, tolerance, 'omega stays nonnegative')


def check_l1_series(traj, family=None):
    '''largest L1 norm over the run; across a viscosity family the max/min ratio must stay below 3'''
    series = traj.l1_series()
    value = traj.max_l1()
    if family:
        ratio = _family_ratio([t.max_l1() for t in family])
        return CheckResult(
            'l1_bound', bool(np.isfinite(value)) and ratio < FAMILY_RATIO, value, FAMILY_RATIO, 'L1 norm bounded uniformly in eps',
            detail='family ratio {0:.6g}'.format(ratio),
        )
    return CheckResult(
        'l1_bound', bool(np.isfinite(value) and np.all(np.isfinite(series))), value, np.inf, 'L1 norm bounded',
        detail='{0} snapshots'.format(len(series)),
    )


def check_max_principle(traj, aleph):
    max_omega = traj.max_omega()
    bound = max(traj.max_h(), aleph)
    return CheckResult(
        'max_principle', max_omega <= bound + MAX_PRINCIPLE_TOL, max_omega, bound + MAX_PRINCIPLE_TOL,
        'max omega <= max(max h, aleph)', detail='max h {0:.6g}, aleph {1:.6g}'.format(traj.max_h(), aleph),
    )


def check_gradient_energy(traj, family=None):
    '''sqrt(eps)||grad omega||; only a family of runs can say whether it is bounded'''
    value = traj.gradient_energy()
    if not family:
        return CheckResult('gradient_energy', None, value, FAMILY_RATIO, 'sqrt(eps) grad omega bounded', fatal=False)
    ratio = _family_ratio([t.gradient_energy() for t in family])
    return CheckResult(
        'gradient_energy', ratio < FAMILY_RATIO, value, FAMILY_RATIO, 'sqrt(eps) grad omega bounded uniformly in eps',
        detail='family ratio {0:.6g}'.format(ratio),
    )


def check_elliptic_consistency(traj, a_at, R, tol=1e-10, mode='neumann', robin_coefficient=1.0):
    '''every stored h must solve the field problem for its stored omega

    :param a_at: callable t -> boundary flux values used by the run
    '''
    worst = 0.0
    for t, omega, h in zip(traj.times, traj.omegas, traj.hs):
        r = elliptic_residual(h, cutoff(omega, R), a_at(t), traj.grid, mode, robin_coefficient)
        worst = max(worst, r)
    tolerance = 10 * tol
    return CheckResult('elliptic_consistency', worst <= tolerance, worst, tolerance, 'h solves -lap h + h = [omega]_R')


def check_mass_identity(traj):
    if not traj.steps:
        return CheckResult('mass_identity', None, 0.0, MASS_IDENTITY_TOL, 'discrete mass balance', fatal=False,
                           detail='no step statistics')
    value = traj.max_mass_defect()
    return CheckResult('mass_identity', value <= MASS_IDENTITY_TOL, value, MASS_IDENTITY_TOL, 'discrete mass balance')


def inflow_collar(grid, classification, sigma1):
    '''nodes closer than sigma1 to the boundary whose nearest boundary node is inflow'''
    points = np.stack([x.reshape(-1) for x in grid.coordinates], axis=1)
    tree = cKDTree(points[grid.boundary_nodes])
    dist, nearest = tree.query(points)
    collar = (dist < sigma1) & classification.minus[nearest] & grid.interior_mask.reshape(-1)
    return collar.reshape(grid.shape)


def check_collar_signs(traj, classification, sigma1):
    '''fraction of (node, snapshot) pairs in the inflow collar where v . grad(d) <= 0'''
    grid = traj.grid
    collar = inflow_collar(grid, classification, sigma1)
    if not np.any(collar):
        return CheckResult('collar_signs', None, 0.0, 0.0, 'v . grad d > 0 near inflow', fatal=False,
                           detail='no inflow collar')
    grad_d = geometry.distance_field(grid).gradient()
    bad = 0
    total = 0
    for v in traj.vs:
        flow = np.sum(v * grad_d, axis=0)[collar]
        bad += int(np.sum(flow <= 0))
        total += flow.size
    value = bad / total
    return CheckResult('collar_signs', value == 0, value, 0.0, 'v . grad d > 0 near inflow', fatal=False,
                       detail='{0} of {1} collar samples'.format(bad, total))


def check_nonconservative_gap(traj, R):
    value = max(nonconservative_gap(o, h, cutoff(o, R), traj.grid) for o, h in zip(traj.omegas, traj.hs))
    return CheckResult('nonconservative_gap', None, value, np.inf, 'upwind vs expanded transport', fatal=False)


def modulus_of_continuity(traj):
    '''max over nodes of |grad h(t2) - grad h(t1)| for snapshot pairs at lags 1, 2, 4, ...'''
    rows = []
    n = len(traj.times)
    lag = 1
    while lag < n:
        for k in range(n - lag):
            t1, t2 = traj.times[k], traj.times[k + lag]
            change = float(np.max(np.sqrt(np.sum((traj.vs[k + lag] - traj.vs[k]) ** 2, axis=0))))
            rows.append({'t1': t1, 't2': t2, 'dt': t2 - t1, 'max_grad_change': change})
        lag *= 2
    return pd.DataFrame(rows, columns=['t1', 't2', 'dt', 'max_grad_change'])


def _time_profile(t, T, c):
    '''(1 - t/T)^2 (1 + c t/T) and its time derivative'''
    s = t / T
    value = (1 - s) ** 2 * (1 + c * s)
    slope = (-2 * (1 - s) * (1 + c * s) + c * (1 - s) ** 2) / T
    return value, slope


def admissibility_mask(grid, classification, sigma):
    '''0 within sigma of the outflow and tangential boundary nodes, ramping to 1 at 2 sigma'''
    blocked = grid.boundary_nodes[~classification.minus]
    if len(blocked) == 0:
        return np.ones(grid.shape)
    points = np.stack([x.reshape(-1) for x in grid.coordinates], axis=1)
    dist, _ = cKDTree(points[blocked]).query(points)
    return np.clip((dist - sigma) / sigma, 0.0, 1.0).reshape(grid.shape)


class TestFunction:
    '''psi(x, t) = sum of coef * mask(x) * prod_axes(1 + sin(k pi x / L + phase) / 2) * tau(t)
    with tau(t) = (1 - t/T)^2 (1 + c t/T). Vanishes at t = T and wherever mask does.

    :param list terms: dicts with coef, k, phase, c
    '''

    __test__ = False

    def __init__(self, grid, T, terms, mask):
        self.grid = grid
        self.T = T
        self.terms = [dict(t) for t in terms]
        self.mask = mask
        self._spatial = []
        for term in self.terms:
            profile = np.ones(grid.shape)
            for x, L in zip(grid.coordinates, grid.extents):
                profile = profile * (1 + 0.5 * np.sin(term['k'] * np.pi * x / L + term['phase']))
            profile = term['coef'] * mask * profile
            grad = np.gradient(profile, *grid.spacing)
            if grid.dimension == 1:
                grad = [grad]
            self._spatial.append((profile, np.stack(grad)))
        self.flags = self.verify()

    def value(self, t):
        return sum(p * _time_profile(t, self.T, term['c'])[0] for term, (p, _) in zip(self.terms, self._spatial))

    def time_derivative(self, t):
        return sum(p * _time_profile(t, self.T, term['c'])[1] for term, (p, _) in zip(self.terms, self._spatial))

    def gradient(self, t):
        return sum(g * _time_profile(t, self.T, term['c'])[0] for term, (_, g) in zip(self.terms, self._spatial))

    def boundary_values(self, t):
        return self.grid.boundary_values(self.value(t))

    @property
    def frequencies(self):
        return sorted({t['k'] for t in self.terms})

    def verify(self, classification=None):
        '''measured admissibility: psi(., T) = 0 and psi = 0 on every non-inflow boundary node'''
        final = float(np.max(np.abs(self.value(self.T)))) if self.terms else 0.0
        flags = {'vanishes_at_T': final == 0.0}
        if classification is not None:
            edge = self.grid.boundary_values(self.mask)[~classification.minus]
            flags['vanishes_off_inflow'] = float(np.max(np.abs(edge), initial=0.0)) == 0.0
        return flags

    def admissible(self, classification):
        return all(self.verify(classification).values())

    def is_zero(self):
        return all(float(np.max(np.abs(p))) == 0.0 for p, _ in self._spatial)

    def scaled(self, factor):
        terms = [dict(t, coef=factor * t['coef']) for t in self.terms]
        return TestFunction(self.grid, self.T, terms, self.mask)

    def combine(self, other):
        if other.grid != self.grid or other.T != self.T or not np.array_equal(other.mask, self.mask):
            raise DataError('Test functions live on different grids, horizons or masks')
        return TestFunction(self.grid, self.T, self.terms + other.terms, self.mask)


def make_test_functions(grid, T, count=3, seed=0, classification=None, sigma=None):
    '''deterministic family of admissible test functions with spatial frequencies 1..count

    :param BoundaryClassification classification: inflow/outflow partition; psi is masked off
        every non-inflow node
    :param float sigma: mask width, defaults to 1/8 of the shortest extent
    '''
    if sigma is None:
        sigma = 0.125 * grid.min_extent
    if classification is None:
        mask = np.ones(grid.shape)
    else:
        mask = admissibility_mask(grid, classification, sigma)
    rng = np.random.default_rng(seed)
    family = []
    for i in range(count):
        term = {
            'coef': float(rng.uniform(0.5, 1.5)),
            'k': i + 1,
            'phase': float(rng.uniform(0, 2 * np.pi)),
            'c': float(rng.uniform(0.0, 2.0)),
        }
        psi = TestFunction(grid, T, [term], mask)
        if classification is not None and not psi.admissible(classification):
            raise DataError('Generated test function {0} is not admissible'.format(i))
        family.append(psi)
    return family


def _integrate_time(times, values):
    if len(times) == 1:
        return 0.0
    return float(trapezoid(values, times))


def boundary_flux_term(traj, psi, a, b, classification):
    '''-int_0^T sum over inflow nodes of mu a b psi, trapezoid in time over the snapshots'''
    grid = traj.grid
    minus = classification.minus
    mu = grid.boundary_measure[minus]
    series = [
        float(np.sum(mu * a.at(t)[minus] * b.at(t)[minus] * psi.boundary_values(t)[minus])) for t in traj.times
    ]
    return -_integrate_time(traj.times, series)


def weak_terms(traj, psi, a, b, classification):
    '''raw integrals of the weak identity for one test function

    volume:   int int omega (psi_t + v . grad psi)
    initial:  int omega(0) psi(0)
    boundary: -int int over inflow of a b psi
    '''
    grid = traj.grid
    W = grid.cell_volumes
    series = []
    for t, omega, v in zip(traj.times, traj.omegas, traj.vs):
        transport = psi.time_derivative(t) + np.sum(v * psi.gradient(t), axis=0)
        series.append(float(np.sum(W * omega * transport)))
    return {
        'volume': _integrate_time(traj.times, series),
        'initial': float(np.sum(W * traj.omegas[0] * psi.value(traj.times[0]))),
        'boundary': boundary_flux_term(traj, psi, a, b, classification),
    }


def weak_residual(traj, psi, a, b, classification):
    '''|volume + initial + boundary| relative to the largest of the three'''
    if psi.is_zero():
        return 0.0
    if not psi.admissible(classification):
        raise DataError('Test function is not admissible: {0}'.format(psi.verify(classification)))
    terms = weak_terms(traj, psi, a, b, classification)
    scale = max(abs(v) for v in terms.values())
    if scale == 0:
        return 0.0
    return abs(sum(terms.values())) / scale


def band_weights(grid, sigma):
    '''fraction of each node's dual cell (measured along its nearest-face normal) inside sigma < d < 2 sigma'''
    geometry.check_sigma(grid, sigma)
    distance = geometry.distance_field(grid)
    axis = distance.nearest_face // 2
    h = np.asarray(grid.spacing)[axis]
    d = distance.values
    lo = np.maximum(d - h / 2, sigma)
    hi = np.minimum(d + h / 2, 2 * sigma)
    return np.clip(hi - lo, 0.0, None) / h, distance


def boundary_layer_flux(traj, sigma, psi, extension):
    '''(J1, J2) over the band sigma < d < 2 sigma, with the 1/sigma weight of the cut-off gradient

    J1 uses |omega - omega_breve_eps|, J2 uses omega_breve_eps; both are weighted by v . grad d and psi.
    '''
    grid = traj.grid
    weights, distance = band_weights(grid, sigma)
    grad_d = distance.gradient()
    W = grid.cell_volumes * weights / sigma
    j1, j2 = [], []
    for t, omega, v in zip(traj.times, traj.omegas, traj.vs):
        base = W * np.sum(v * grad_d, axis=0) * psi.value(t)
        breve = extension.omega_eps_at(t)
        j1.append(float(np.sum(base * np.abs(omega - breve))))
        j2.append(float(np.sum(base * breve)))
    return _integrate_time(traj.times, j1), _integrate_time(traj.times, j2)


def validate_trajectory(traj, simulation, family=None):
    '''run every check that applies to a finished run and collect them in an InvariantReport

    :param Simulation simulation: provides the configuration and extension the run used
    :param list family: trajectories of a viscosity family this run belongs to
    '''
    config = simulation.config
    extension = simulation.extension
    report = InvariantReport(
        {
            'epsilon': config.epsilon,
            'R': config.R,
            'aleph': config.aleph,
            'grid': str(config.grid),
            'T': config.T,
            'dt': config.dt if config.dt is not None else 'adaptive',
            'snapshots': len(traj.times),
        }
    )
    report.add(check_positivity(traj, config.aleph))
    report.add(check_l1_series(traj, family))
    report.add(check_max_principle(traj, config.aleph))
    report.add(check_gradient_energy(traj, family))
    report.add(
        check_elliptic_consistency(
            traj, extension.a_eps_at, config.R, config.solver_tol, config.boundary_mode, config.robin_coefficient
        )
    )
    report.add(check_mass_identity(traj))
    report.add(check_collar_signs(traj, extension.classification, config.sigma1))
    report.add(check_nonconservative_gap(traj, config.R))
    if config.test_functions > 0 and len(traj.times) > 1:
        psis = make_test_functions(
            config.grid, config.T, config.test_functions, config.seed, extension.classification, config.sigma1
        )
        worst = max(weak_residual(traj, psi, config.a, config.b, extension.classification) for psi in psis)
        report.add(CheckResult('weak_residual', None, worst, np.inf, 'weak identity residual', fatal=False,
                               detail='{0} test functions'.format(len(psis))))
    return report
