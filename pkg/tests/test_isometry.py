import numpy as np
import pytest
from scipy import stats

from afpwiener import isometry
from afpwiener.core import BrownianPath, RngStream, TimeGrid, sample_brownian
from afpwiener.isometry import PeriodicOrthogonalMap


@pytest.mark.parametrize("name", ["rotation2d", "sign1d"])
def test_map_is_orthogonal_and_bounded(name):
    M = PeriodicOrthogonalMap(name)
    t = np.random.default_rng(0).random(1000) * 5
    m = M(t)
    eye = np.eye(M.dim)
    assert np.max(np.abs(np.swapaxes(m, -1, -2) @ m - eye)) <= 1e-12
    assert np.max(np.abs(m)) <= 1.0


@pytest.mark.parametrize("name", ["rotation2d", "sign1d"])
def test_map_mean_zero(name):
    M = PeriodicOrthogonalMap(name)
    g = M.default_grid(1)
    assert np.max(np.abs(M.on_grid(g, 1).mean(axis=0))) <= 1e-10


def test_piecewise_rejects_non_orthogonal():
    with pytest.raises(ValueError):
        PeriodicOrthogonalMap.piecewise([[[2.0]], [[1.0]]])


def test_mean_matrix_integral_examples():
    assert np.array_equal(isometry.mean_matrix_integral(PeriodicOrthogonalMap("rotation2d"), 3),
                          np.zeros((2, 2)))
    assert np.array_equal(isometry.mean_matrix_integral(PeriodicOrthogonalMap("sign1d"), 2),
                          np.zeros((1, 1)))
    for n in (1, 5):
        assert np.array_equal(isometry.mean_matrix_integral(PeriodicOrthogonalMap.identity(2), n),
                              np.eye(2))


def test_crumple_sign_pattern():
    p = BrownianPath(TimeGrid(2), np.array([[0.4, 0.7]]))
    q = isometry.crumple_path(p, PeriodicOrthogonalMap("sign1d"), 1)
    assert np.array_equal(q.increments, [[0.4, -0.7]])


def test_crumple_identity_map():
    p = sample_brownian(RngStream(1), TimeGrid(8), 2, 5)
    q = isometry.crumple_path(p, PeriodicOrthogonalMap.identity(2), 4)
    assert np.array_equal(q.increments, p.increments)


@pytest.mark.parametrize("n", [1, 3, 16])
def test_crumple_preserves_increment_norms(n):
    M = PeriodicOrthogonalMap("rotation2d")
    p = sample_brownian(RngStream(2), M.default_grid(n), 2, 50)
    q = isometry.crumple_path(p, M, n)
    a = np.linalg.norm(p.increments, axis=-2)
    b = np.linalg.norm(q.increments, axis=-2)
    assert np.max(np.abs(a - b)) <= 1e-12


def test_crumple_rotation_matches_einsum():
    M = PeriodicOrthogonalMap("rotation2d")
    p = sample_brownian(RngStream(2), TimeGrid(64), 2, 7)
    q = isometry.crumple_path(p, M, 4)
    ref = np.einsum("jab,sbj->saj", M.on_grid(TimeGrid(64), 4), p.increments)
    assert np.allclose(q.increments, ref, atol=1e-15)


def test_crumple_rejects_misaligned_grid():
    M = PeriodicOrthogonalMap("sign1d")
    p = sample_brownian(RngStream(1), TimeGrid(30), 1)
    with pytest.raises(ValueError):
        isometry.crumple_path(p, M, 4)
    with pytest.raises(ValueError):
        isometry.crumple_path(sample_brownian(RngStream(1), TimeGrid(16), 1), M, 16)


def test_on_grid_uses_exact_phase_reduction():
    M = PeriodicOrthogonalMap("sign1d")
    g = TimeGrid(2 * 3 * 1000)
    vals = M.on_grid(g, 3)[:, 0, 0]
    assert vals.sum() == 0.0


def test_transform_sign1d_n1_is_reflection():
    M = PeriodicOrthogonalMap("sign1d")
    g = TimeGrid(2)
    p = BrownianPath(g, np.array([[0.3, 0.5]]))
    x = isometry.terminal_value(0)(isometry.crumple_path(p, M, 1))
    assert x == pytest.approx(0.3 - 0.5)


@pytest.mark.parametrize("name,n", [("sign1d", 1), ("sign1d", 16), ("rotation2d", 4)])
def test_law_invariance(name, n):
    M = PeriodicOrthogonalMap(name)
    x = isometry.transform_rv(isometry.terminal_value(), M, n, RngStream(3), 10**5)
    for c in range(M.dim):
        assert stats.kstest(x[:, c], "norm").pvalue > 0.01


def test_iterated_crumpling_preserves_law():
    M = PeriodicOrthogonalMap("rotation2d")
    g = M.default_grid(4)
    paths = sample_brownian(RngStream(4), g, 2, 20000)
    twice = isometry.crumple_path(isometry.crumple_path(paths, M, 4), M, 4)
    x = twice.terminal()
    for c in range(2):
        assert stats.kstest(x[:, c], "norm").pvalue > 0.01


def test_transform_constant_functional():
    M = PeriodicOrthogonalMap("sign1d")
    const = lambda path: np.full(path.batch_shape[0], 2.5)
    x = isometry.transform_rv(const, M, 4, RngStream(1), 1000)
    assert np.all(x == 2.5)


def test_transform_exponential_functional():
    # with xi = 1: T_n(X) = exp(i int M(ns) dB + 1/2) pathwise
    M = PeriodicOrthogonalMap("sign1d")
    g = M.default_grid(4)
    p = sample_brownian(RngStream(5), g, 1, 100)
    X = isometry.exponential_functional(1.0)
    q = isometry.crumple_path(p, M, 4)
    lhs = X(q)
    stoch = (M.on_grid(g, 4)[:, 0, 0] * p.increments[:, 0, :]).sum(axis=-1)
    assert np.allclose(lhs, np.exp(1j * stoch + 0.5), atol=1e-12)


def test_stable_small_run_and_covariance():
    M = PeriodicOrthogonalMap("sign1d")
    res = isometry.stable_convergence_experiment(isometry.terminal_value(), M, [4, 16], 20000,
                                                 RngStream(6))
    for r in res:
        assert r.max_abs_z <= 3
        assert np.all(np.abs(r.covariance) <= 3 * r.covariance_se)
        zero = np.all(r.ecf.probes == 0, axis=1)
        assert np.all(r.ecf.values[zero] == 1.0)


def test_stable_constant_functional_exact():
    M = PeriodicOrthogonalMap("sign1d")
    const = lambda path: np.full(path.batch_shape[0], 1.0)
    res = isometry.stable_convergence_experiment(const, M, [4], 5000, RngStream(7))
    assert np.allclose(res[0].ecf.values, res[0].ecf.reference, atol=1e-12)


def test_stable_detects_identity_map():
    # M = I leaves X = B_1 glued to B_1, far from an independent copy
    M = PeriodicOrthogonalMap.identity(1)
    res = isometry.stable_convergence_experiment(isometry.terminal_value(), M, [4], 20000,
                                                 RngStream(8))
    assert res[0].max_abs_z > 3


def test_stable_rejects_misaligned_grid():
    M = PeriodicOrthogonalMap("sign1d")
    with pytest.raises(ValueError):
        isometry.stable_convergence_experiment(isometry.terminal_value(), M, [3], 2000, RngStream(1),
                                               grid=TimeGrid(64))


def test_stable_rejects_degenerate_tilt():
    M = PeriodicOrthogonalMap("sign1d")
    spike = lambda path: np.where(np.abs(path.terminal()[:, 0]) < 1e-4, 1.0, 0.0)
    with pytest.raises(ValueError, match="effective sample size"):
        isometry.stable_convergence_experiment(isometry.terminal_value(), M, [4], 5000,
                                               RngStream(1), tilt=spike)
