import numpy as np
import pytest

from vortexflux.elliptic import (
    assemble_operator,
    build_green_operators,
    dual_norm,
    dump_operator,
    elliptic_residual,
    face_velocity,
    kernel_bound_check,
    kernel_value,
    solve_h,
    velocity,
)
from vortexflux.exceptions import ConfigurationError, DenseCapExceeded
from vortexflux.geometry import build_grid


def manufactured_error(n, dimension):
    '''max error against h = prod cos(pi x), which has zero normal derivative on the boundary'''
    grid = build_grid(dimension, [1.0] * dimension, [n] * dimension)
    exact = np.ones(grid.shape)
    for x in grid.coordinates:
        exact = exact * np.cos(np.pi * x)
    source = (dimension * np.pi ** 2 + 1) * exact
    h = solve_h(source, np.zeros(grid.boundary_count), grid)
    return np.max(np.abs(h - exact))


@pytest.mark.parametrize('dimension,coarse,fine', [(1, 33, 65), (2, 33, 65)])
def test_second_order_convergence(dimension, coarse, fine):
    ratio = manufactured_error(coarse, dimension) / manufactured_error(fine, dimension)
    assert 3.5 <= ratio <= 4.5


def test_constant_source_gives_constant_field(grid_2d):
    h = solve_h(np.full(grid_2d.shape, 2.5), np.zeros(grid_2d.boundary_count), grid_2d)
    np.testing.assert_allclose(h, 2.5, rtol=0, atol=1e-12)


def test_flux_sign_convention(grid_1d):
    '''-h'.n = a: inflow a < 0 at x = 0 and outflow a > 0 at x = 1 both mean v = -h' > 0'''
    h = solve_h(np.zeros(grid_1d.shape), [-0.2, 0.2], grid_1d)
    v = velocity(h, grid_1d)[0]
    assert v[0] == pytest.approx(0.2, abs=1e-2)
    assert v[-1] == pytest.approx(0.2, abs=1e-2)
    assert np.all(face_velocity(h, grid_1d)[0] > 0)


def test_face_velocity_divergence_matches_source():
    grid = build_grid(2, [1.0, 2.0], [13, 17])
    rng = np.random.default_rng(3)
    source = rng.uniform(0, 1, grid.shape)
    h = solve_h(source, rng.uniform(-0.5, 0.5, grid.boundary_count), grid)
    faces = face_velocity(h, grid)
    div = np.zeros(grid.shape)
    div[1:-1, :] += np.diff(faces[0], axis=0) / grid.spacing[0]
    div[:, 1:-1] += np.diff(faces[1], axis=1) / grid.spacing[1]
    inner = grid.interior_mask
    np.testing.assert_allclose(div[inner], (source - h)[inner], atol=1e-9)


def test_operator_symmetric_after_scaling(grid_2d):
    A = assemble_operator(grid_2d)
    S = (np.diag(grid_2d.cell_volumes.reshape(-1)) @ A.toarray())
    np.testing.assert_allclose(S, S.T, atol=1e-12)


@pytest.mark.parametrize('mode', ['neumann', 'robin', 'dirichlet'])
def test_boundary_modes_residual(grid_2d, mode):
    rng = np.random.default_rng(11)
    source = rng.uniform(0, 1, grid_2d.shape)
    a = rng.uniform(0, 1, grid_2d.boundary_count)
    h = solve_h(source, a, grid_2d, mode=mode)
    assert elliptic_residual(h, source, a, grid_2d, mode) < 1e-10
    if mode == 'dirichlet':
        np.testing.assert_allclose(grid_2d.boundary_values(h), a)


def test_unknown_mode(grid_2d):
    with pytest.raises(ConfigurationError):
        solve_h(np.zeros(grid_2d.shape), np.zeros(grid_2d.boundary_count), grid_2d, mode='periodic')


def test_elliptic_residual_detects_mismatch(grid_2d):
    source = np.ones(grid_2d.shape)
    h = solve_h(source, np.zeros(grid_2d.boundary_count), grid_2d)
    assert elliptic_residual(h + 1e-3, source, np.zeros(grid_2d.boundary_count), grid_2d) > 1e-6


def test_green_representation(grid_2d):
    green = build_green_operators(grid_2d)
    rng = np.random.default_rng(5)
    for _ in range(10):
        omega = rng.uniform(0, 2, grid_2d.shape)
        a = rng.uniform(-1, 1, grid_2d.boundary_count)
        h = solve_h(omega, a, grid_2d)
        assert np.max(np.abs(h - green.apply(omega, a))) <= 1e-10
    assert green.min_entry >= -1e-12


def test_green_dense_cap():
    grid = build_grid(2, [1.0, 1.0], [65, 65])
    with pytest.raises(DenseCapExceeded) as e:
        build_green_operators(grid)
    assert 'solve_h' in str(e.value)


def test_kernel_envelope(grid_2d):
    green = build_green_operators(grid_2d)
    check = kernel_bound_check(green, grid_2d)
    assert check['violation_fraction'] == 0.0
    assert check['entries'] == 81 * 80
    assert np.isfinite(check['envelope_constant'])
    assert kernel_value(green, grid_2d, (4, 4), (1, 6)) == pytest.approx(kernel_value(green, grid_2d, (1, 6), (4, 4)))
    assert kernel_value(green, grid_2d, (4, 4), (0, 0)) > 0


def test_dual_norm(grid_2d):
    u = np.zeros(grid_2d.shape)
    assert dual_norm(u, grid_2d) == 0.0
    u[4, 4] = 1.0
    assert dual_norm(u, grid_2d) > 0
    assert dual_norm(2 * u, grid_2d) == pytest.approx(2 * dual_norm(u, grid_2d))


def test_dump_operator(tmp_path, grid_2d):
    path = tmp_path / 'operator.txt'
    count = dump_operator(grid_2d, str(path))
    table = np.loadtxt(str(path))
    assert table.shape == (count, 3)
    # 5-point stencil: one diagonal per node plus two or more neighbours each
    assert 3 * 81 <= count <= 5 * 81


def test_solve_is_linear(grid_2d):
    rng = np.random.default_rng(21)
    nb = grid_2d.boundary_count
    w1, w2 = rng.uniform(-1, 1, grid_2d.shape), rng.uniform(-1, 1, grid_2d.shape)
    a1, a2 = rng.uniform(-1, 1, nb), rng.uniform(-1, 1, nb)
    alpha, beta = 1.7, -0.6
    combined = solve_h(alpha * w1 + beta * w2, alpha * a1 + beta * a2, grid_2d)
    separate = alpha * solve_h(w1, a1, grid_2d) + beta * solve_h(w2, a2, grid_2d)
    assert np.max(np.abs(combined - separate)) <= 1e-12 * max(1.0, np.max(np.abs(combined)))


def test_zero_flux_maximum_principle():
    grid = build_grid(2, [1.0, 1.5], [13, 17])
    rng = np.random.default_rng(8)
    zero = np.zeros(grid.boundary_count)
    for _ in range(10):
        omega = rng.uniform(0, 1, grid.shape) * rng.uniform(0.1, 3.0)
        h = solve_h(omega, zero, grid)
        assert h.min() >= omega.min() - 1e-12
        assert h.max() <= omega.max() + 1e-12
        assert h.min() >= -1e-12


def test_green_columns_are_point_source_solves():
    grid = build_grid(2, [1.0, 1.0], [5, 5])
    green = build_green_operators(grid)
    zero = np.zeros(grid.boundary_count)
    for j in range(grid.size):
        delta = np.zeros(grid.size)
        delta[j] = 1.0
        h = solve_h(delta.reshape(grid.shape), zero, grid)
        np.testing.assert_allclose(green.K1[:, j], h.reshape(-1), atol=1e-12)
    np.testing.assert_allclose(green.apply(np.zeros(grid.shape), zero), 0.0)


def test_green_reproduces_constants():
    grid = build_grid(1, [1.0], [11])
    green = build_green_operators(grid)
    np.testing.assert_allclose(green.K1 @ np.ones(11), 1.0, atol=1e-12)


def test_velocity_of_linear_field(grid_1d):
    x = grid_1d.coordinates[0]
    np.testing.assert_allclose(velocity(x, grid_1d)[0], -1.0, atol=1e-12)
    np.testing.assert_allclose(velocity(np.full(21, 3.0), grid_1d), 0.0, atol=1e-12)


def velocity_error(n):
    grid = build_grid(1, [1.0], [n])
    x = grid.coordinates[0]
    return np.max(np.abs(velocity(np.cos(np.pi * x), grid)[0] - np.pi * np.sin(np.pi * x)))


def test_velocity_second_order():
    ratio = velocity_error(33) / velocity_error(65)
    assert 3.5 <= ratio <= 4.5
