import numpy as np
import pytest

from vortexflux.elliptic import face_velocity, solve_h
from vortexflux.exceptions import ConfigurationError, StabilityError
from vortexflux.geometry import build_grid
from vortexflux.transport import (
    TransportParams,
    advect_diffuse_step,
    cfl_dt,
    cutoff,
    faces_from_nodes,
    laplacian,
    mass_defect,
    nonconservative_gap,
    stability_limit,
)


def test_cutoff():
    np.testing.assert_array_equal(cutoff(np.array([-1.0, 0.5, 3.0]), 2.0), [0.0, 0.5, 2.0])
    with pytest.raises(ConfigurationError):
        cutoff(np.zeros(3), 0.0)


@pytest.mark.parametrize(
    'kwargs', [{'epsilon': -1.0}, {'R': 0.0}, {'dt': 0.0}, {'cfl_target': 1.5}],
)
def test_params_validation(kwargs):
    base = {'epsilon': 1e-2, 'R': 1.0, 'dt': 1e-3}
    base.update(kwargs)
    with pytest.raises(ConfigurationError):
        TransportParams(**base)


def test_constant_state_is_steady(grid_2d):
    omega = np.full(grid_2d.shape, 0.7)
    faces = (np.zeros((8, 9)), np.zeros((9, 8)))
    params = TransportParams(1e-2, 4.0, 1e-3)
    new = advect_diffuse_step(omega, faces, params, np.full(grid_2d.boundary_count, 0.7), grid_2d)
    np.testing.assert_array_equal(new, omega)


def test_uniform_flow_shifts_profile():
    '''unit Courant number with zero viscosity moves the profile exactly one cell'''
    grid = build_grid(1, [1.0], [41])
    h = grid.spacing[0]
    x = grid.coordinates[0]
    omega = np.exp(-((x - 0.4) / 0.1) ** 2)
    v = np.ones((1,) + grid.shape)
    params = TransportParams(0.0, 10.0, h)
    new = advect_diffuse_step(omega, faces_from_nodes(v, grid), params, [omega[0], omega[-1]], grid)
    np.testing.assert_allclose(new[1:-1], omega[:-2], atol=1e-14)


def test_refuses_unstable_step(grid_2d):
    omega = np.ones(grid_2d.shape)
    faces = (np.full((8, 9), 2.0), np.zeros((9, 8)))
    limit = stability_limit(faces, 0.0, grid_2d)
    assert limit == pytest.approx(grid_2d.spacing[0] / 2.0)
    params = TransportParams(0.0, 4.0, 2 * limit)
    with pytest.raises(StabilityError) as e:
        advect_diffuse_step(omega, faces, params, np.ones(grid_2d.boundary_count), grid_2d)
    assert e.value.admissible_dt == pytest.approx(limit)


def test_implicit_diffusion_drops_diffusive_limit(grid_2d):
    faces = (np.zeros((8, 9)), np.zeros((9, 8)))
    assert stability_limit(faces, 1.0, grid_2d) == pytest.approx(1 / (2 * 2 * 64))
    assert stability_limit(faces, 1.0, grid_2d, implicit=True) == np.inf


def test_cfl_dt(grid_2d):
    v = np.zeros((2,) + grid_2d.shape)
    assert cfl_dt(v, 0.0, grid_2d, dt_max=0.05) == 0.05
    v[0] = 1.0
    assert cfl_dt(v, 0.0, grid_2d, cfl_target=0.5) == pytest.approx(0.5 * 0.125)


@pytest.mark.parametrize('implicit', [False, True])
def test_positivity_and_mass_balance(implicit):
    grid = build_grid(2, [1.0, 1.0], [17, 17])
    rng = np.random.default_rng(7)
    omega = rng.uniform(0, 1, grid.shape)
    h = solve_h(omega, rng.uniform(-0.5, 0.5, grid.boundary_count), grid)
    faces = face_velocity(h, grid)
    dt = 0.9 * stability_limit(faces, 5e-3, grid, implicit)
    params = TransportParams(5e-3, 4.0, dt, implicit_diffusion=implicit)
    boundary = rng.uniform(0, 1, grid.boundary_count)
    new = advect_diffuse_step(omega, faces, params, boundary, grid)
    assert new.min() >= 0.0
    np.testing.assert_array_equal(grid.boundary_values(new), boundary)
    assert mass_defect(omega, new, faces, params, grid) < 1e-12


def test_laplacian_of_quadratic():
    grid = build_grid(2, [1.0, 1.0], [11, 11])
    x, y = grid.coordinates
    lap = laplacian(x ** 2 + 3 * y ** 2, grid)
    np.testing.assert_allclose(lap[grid.interior_mask], 8.0)


def test_nonconservative_gap_shrinks_with_refinement():
    gaps = []
    for n in (33, 65):
        grid = build_grid(1, [1.0], [n])
        x = grid.coordinates[0]
        omega = 1 + 0.5 * np.sin(np.pi * x)
        h = solve_h(omega, [-0.2, 0.2], grid)
        gaps.append(nonconservative_gap(omega, h, omega, grid))
    assert gaps[1] < gaps[0]


@pytest.mark.parametrize('implicit', [False, True])
def test_diffused_spike_stays_symmetric(implicit):
    grid = build_grid(2, [1.0, 1.0], [21, 21])
    omega = np.zeros(grid.shape)
    omega[10, 10] = 1.0
    faces = (np.zeros((20, 21)), np.zeros((21, 20)))
    params = TransportParams(1e-2, 4.0, 0.05, implicit_diffusion=implicit)
    zero = np.zeros(grid.boundary_count)
    mass = grid.integrate(omega)
    for _ in range(5):
        omega = advect_diffuse_step(omega, faces, params, zero, grid)
    np.testing.assert_allclose(omega, omega[::-1, :], atol=1e-14)
    np.testing.assert_allclose(omega, omega[:, ::-1], atol=1e-14)
    np.testing.assert_allclose(omega, omega.T, atol=1e-14)
    assert omega.min() >= -1e-15
    assert omega[10, 10] < 1.0
    if not implicit:
        # five explicit steps reach five cells; the boundary is ten away
        assert grid.integrate(omega) == pytest.approx(mass, rel=1e-13)
