import math

import numpy as np
import pytest

from afpwiener import euler
from afpwiener.core import RngStream, TimeGrid, sample_brownian


def paths(N=1024, samples=50, seed=1):
    return sample_brownian(RngStream(seed), TimeGrid(N), 1, samples)


def test_zero_system_constant_trajectory():
    sys0 = euler.GenericSdeSystem(2, 1, lambda x: np.zeros_like(x),
                                  lambda x: np.zeros((x.shape[0], 2, 1)), (1.5, -2.0))
    traj = euler.euler_solve(sys0, paths(64, 3), 16)
    assert traj.shape == (3, 17, 2)
    assert np.all(traj == np.array([1.5, -2.0]))


@pytest.mark.parametrize("n", [1, 16, 1024])
def test_pure_noise_exact(n):
    p = paths()
    B1 = p.terminal()[:, 0]
    g = euler.euler_solve(euler.generic_pure_noise(), p, n, terminal_only=True)
    assert np.allclose(g[:, 0], B1, atol=1e-13)
    s = euler.euler_solve(euler.special_pure_noise(), p, n, terminal_only=True)
    assert np.allclose(s[:, 0], B1, atol=1e-13) and np.all(s[:, 1] == 0)


def test_reference_pure_noise_any_resolution():
    p = paths(256)
    ref = euler.reference_solve(euler.generic_pure_noise(), p)
    assert np.allclose(ref[:, 0], p.terminal()[:, 0], atol=1e-13)


def test_linear_drift_reference():
    N = 4096
    p = paths(N, 1)
    x = euler.reference_solve(euler.linear_drift(1.0), p, N)
    assert abs(x[0, 0] - math.e) <= 3 * math.e / N


def test_reference_deterministic_and_telescoping():
    p = paths(512, 20)
    a = euler.reference_solve(euler.special_example(), p)
    b = euler.reference_solve(euler.special_example(), p)
    assert np.array_equal(a, b)
    c = euler.euler_solve(euler.special_example(), p, 512, terminal_only=True)
    assert np.array_equal(a, c)


def test_single_path_shape():
    p = sample_brownian(RngStream(2), TimeGrid(64), 1)
    traj = euler.euler_solve(euler.special_example(), p, 8)
    assert traj.shape == (9, 2)
    assert np.array_equal(traj[0], [1.0, 0.0])


def test_divisibility_and_dimension_errors():
    p = paths(100, 2)
    with pytest.raises(ValueError, match="multiple"):
        euler.euler_solve(euler.generic_example(), p, 16)
    p2 = sample_brownian(RngStream(1), TimeGrid(64), 2, 2)
    with pytest.raises(ValueError, match="dimension"):
        euler.euler_solve(euler.generic_example(), p2, 16)


def test_blow_up_reports_step():
    boom = euler.GenericSdeSystem(1, 1, lambda x: 1e200 * x * x,
                                  lambda x: np.zeros((x.shape[0], 1, 1)), (10.0,), "boom")
    with pytest.raises(FloatingPointError, match="step 2 of 4"):
        euler.euler_solve(boom, paths(64, 2), 4)


def test_unknown_system():
    with pytest.raises(ValueError):
        euler.system_by_name("nope")


def test_rate_argument_checks():
    s = euler.generic_example()
    with pytest.raises(ValueError, match="at least 3"):
        euler.rate_experiment(s, [16, 32], 100, 4096, RngStream(1))
    with pytest.raises(ValueError, match="powers of two"):
        euler.rate_experiment(s, [16, 24, 32], 100, 4096, RngStream(1))
    with pytest.raises(ValueError, match="N_fine"):
        euler.rate_experiment(s, [16, 32, 64], 100, 2048, RngStream(1))


def test_pure_noise_rate_refused():
    with pytest.raises(ValueError, match="degenerate errors"):
        euler.rate_experiment(euler.generic_pure_noise(), [16, 32, 64], 200, 4096, RngStream(1))


def test_rates_small_run():
    ns = [16, 32, 64]
    sp = euler.rate_experiment(euler.special_example(), ns, 2000, 4096, RngStream(3))
    ge = euler.rate_experiment(euler.generic_example(), ns, 2000, 4096, RngStream(3))
    assert abs(sp.fit.slope + 1.0) <= 0.2
    assert abs(ge.fit.slope + 0.5) <= 0.15
    assert sp.fit.slope - ge.fit.slope <= -0.3
    assert sp.ns == ns and len(sp.stabilization) == 2
    # n * err stabilizes for the special system
    assert all(r.max_abs_z <= 3 for r in sp.stabilization)
