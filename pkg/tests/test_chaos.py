import math

import numpy as np
import pytest

from afpwiener import chaos
from afpwiener.chaos import ChaosElement, ExponentialVector, OrderedKernel, PeriodicScalarTheta
from afpwiener.core import RngStream, TimeGrid, sample_brownian
from afpwiener.stattest import batch_mean

G = TimeGrid(64)
T = G.left_points


def h1(grid=G):
    return chaos.first_chaos(math.sqrt(3.0) * grid.left_points, grid)


def i2(grid=G):
    return chaos.constant_kernel_element(2, math.sqrt(2.0), grid)


def mixed(grid=G):
    t = grid.left_points
    return ChaosElement.of(OrderedKernel.rank_one([np.cos(t)], grid),
                           OrderedKernel.rank_one([1.0 + t, np.exp(-t)], grid),
                           OrderedKernel.rank_one([t, 1.0, np.sin(3 * t) + 0.5], grid),
                           constant=0.3)


def brute_force(kernel_dense, inc):
    """Direct loop over ordered tuples; oracle for the prefix recursion."""
    k = kernel_dense.ndim
    N = inc.shape[-1]
    total = 0.0
    for idx in np.ndindex(*(N,) * k):
        if all(a < b for a, b in zip(idx[:-1], idx[1:])):
            total += kernel_dense[idx] * np.prod([inc[j] for j in idx])
    return total


@pytest.mark.parametrize("variant", ["cosine", "sine", "rademacher"])
def test_theta_normalization(variant):
    th = PeriodicScalarTheta(variant)
    v = th.on_grid(TimeGrid(1024), 1)
    assert abs(v.mean()) <= 1e-10
    assert abs((v * v).mean() - 1.0) <= 1e-10
    assert np.max(np.abs(v)) == pytest.approx(th.sup_norm)


def test_theta_rejects_misaligned_grid():
    with pytest.raises(ValueError):
        PeriodicScalarTheta("rademacher").on_grid(TimeGrid(64), 64)
    with pytest.raises(ValueError):
        PeriodicScalarTheta("bogus")


def test_rank_one_norm_closed_form():
    # constant sqrt(2) on the 2-simplex: 2 * N(N-1)/2 * dt^2
    N = G.steps
    assert i2().norm2() == pytest.approx((N - 1) / N, abs=1e-14)
    assert h1().norm2() == pytest.approx(3 * np.sum(T**2) / N, abs=1e-14)


def test_rank_one_matches_dense():
    small = TimeGrid(12)
    X = mixed(small)
    for k, ker in X.kernels.items():
        dense = OrderedKernel.dense(ker.to_dense(), small)
        assert dense.norm2() == pytest.approx(ker.norm2(), abs=1e-13)
        assert dense.inner(ker) == pytest.approx(ker.norm2(), abs=1e-13)


def test_evaluate_against_brute_force():
    small = TimeGrid(9)
    inc = np.random.default_rng(0).standard_normal(9) / 3
    for ker in mixed(small).kernels.values():
        got = ker.evaluate([inc[None]] * ker.order)[0]
        assert got == pytest.approx(brute_force(ker.to_dense(), inc), abs=1e-12)


def test_numba_matches_numpy():
    p = sample_brownian(RngStream(1), G, 1, 200).increments[:, 0, :]
    w = sample_brownian(RngStream(2), G, 1, 200).increments[:, 0, :]
    for ker in mixed().kernels.values():
        for slots in ([p] * ker.order, [w] + [p] * (ker.order - 1)):
            a = ker.evaluate(slots)
            b = ker.evaluate_numpy(slots)
            assert np.max(np.abs(a - b)) <= 1e-12


def test_dense_cap():
    with pytest.raises(ValueError):
        OrderedKernel.dense(np.zeros((200, 200, 200)), TimeGrid(200))
    with pytest.raises(ValueError):
        OrderedKernel(4, G, factors=np.ones((1, 4, G.steps)))


def test_kernel_immutable():
    ker = h1().kernels[1]
    with pytest.raises(AttributeError):
        ker.order = 2
    with pytest.raises(ValueError):
        ker.factors[0, 0, 0] = 1.0


def test_eval_chaos_examples():
    p = sample_brownian(RngStream(3), G, 1, 10)
    one = chaos.first_chaos(1.0, G)
    assert np.allclose(chaos.eval_chaos(one, p), p.terminal()[:, 0], atol=1e-14)
    c = ChaosElement.const(2.5, G)
    assert np.all(chaos.eval_chaos(c, p) == 2.5)


def test_eval_chaos_grid_mismatch():
    p = sample_brownian(RngStream(3), TimeGrid(32), 1, 10)
    with pytest.raises(ValueError):
        chaos.eval_chaos(h1(), p)


def test_mc_norm_consistency():
    X = mixed()
    vals = []
    for s in range(10):
        p = sample_brownian(RngStream(4).spawn(s), G, 1, 10**4)
        vals.append(np.abs(chaos.eval_chaos(X, p)) ** 2)
    m, se = batch_mean(np.concatenate(vals))
    assert abs(m - X.norm2()) <= 3 * se


def test_i2_second_moment():
    vals = []
    for s in range(10):
        p = sample_brownian(RngStream(5).spawn(s), G, 1, 10**4)
        vals.append(chaos.eval_chaos(i2(), p).real ** 2)
    m, se = batch_mean(np.concatenate(vals))
    assert abs(m - i2().norm2()) <= 3 * se
    assert abs(i2().norm2() - 1.0) < 0.02


def test_apply_Rn_order_one_kernel():
    th = PeriodicScalarTheta("cosine")
    R = chaos.apply_Rn(h1(), th, 4)
    expected = math.sqrt(3.0) * T * np.exp(1j * th.on_grid(G, 4) / 4)
    assert np.allclose(R.kernels[1].to_dense(), expected, atol=1e-15)


@pytest.mark.parametrize("variant", ["cosine", "sine", "rademacher"])
def test_Rn_isometry_and_bound(variant):
    th = PeriodicScalarTheta(variant)
    X = mixed()
    for n in (4, 16):
        assert chaos.apply_Rn(X, th, n).norm2() == pytest.approx(X.norm2(), rel=1e-12)
    n = 16
    X2 = i2()
    lhs = math.sqrt(chaos.phase_difference(X2, th, n).norm2())
    assert lhs <= 2 * math.sqrt(X2.norm2()) * th.sup_norm / n


def test_phase_difference_matches_subtraction():
    th = PeriodicScalarTheta("sine")
    small = TimeGrid(16)
    X = ChaosElement.of(OrderedKernel.dense(np.random.default_rng(1).standard_normal((16, 16)), small))
    a = chaos.phase_difference(X, th, 4)
    b = chaos.apply_Rn(X, th, 4) - X
    assert (a - b).norm2() <= 1e-28


def test_apply_A_examples():
    assert chaos.apply_A(ChaosElement.const(3.0, G)).norm2() == 0.0
    X = h1()
    assert (chaos.apply_A(X) - X.scaled(-0.5)).norm2() == 0.0
    Y = i2()
    assert (chaos.apply_A(Y) + Y).norm2() == 0.0


def test_dirichlet_energy_examples():
    assert chaos.dirichlet_energy(ChaosElement.const(1.0, G)) == 0.0
    h = chaos.first_chaos(1.0, G)
    assert chaos.dirichlet_energy(h) == pytest.approx(0.5)
    assert chaos.dirichlet_energy(i2()) == pytest.approx(i2().norm2())
    X = mixed()
    assert chaos.dirichlet_energy(X) == pytest.approx((-chaos.apply_A(X).inner(X)).real, abs=1e-14)


def test_malliavin_examples():
    X = h1()
    D = chaos.malliavin_derivative(X, 0.25)
    assert D.orders == [] and D.constant == pytest.approx(math.sqrt(3) * 0.25)
    assert chaos.malliavin_derivative(ChaosElement.const(1.0, G), 0.5).norm2() == 0.0
    with pytest.raises(ValueError):
        chaos.malliavin_derivative(X, 0.3)
    with pytest.raises(ValueError):
        chaos.malliavin_derivative(X, 1.0)


def test_malliavin_i2_is_sqrt2_times_other_increments():
    m = 20
    D = chaos.malliavin_derivative(i2(), m / G.steps)
    p = sample_brownian(RngStream(6), G, 1, 5)
    inc = p.increments[:, 0, :]
    expected = math.sqrt(2) * (inc.sum(axis=1) - inc[:, m])
    assert np.allclose(chaos.eval_chaos(D, p), expected, atol=1e-13)


def test_malliavin_energy_sum():
    # sum_m ||D_m X||^2 dt = sum_k k ||f_k||^2 = 2 * energy, exact on the grid
    small = TimeGrid(16)
    X = mixed(small)
    total = sum(chaos.malliavin_derivative(X, m / 16).norm2() for m in range(16)) / 16
    assert total == pytest.approx(2 * chaos.dirichlet_energy(X), rel=1e-12)


def test_sharp_equals_derivative_sum():
    # X^# = sum_m D_m X dW_m pathwise
    small = TimeGrid(16)
    X = mixed(small)
    b = sample_brownian(RngStream(7), small, 1, 6)
    w = sample_brownian(RngStream(8), small, 1, 6)
    direct = chaos.sharp_sample(X, b, w)
    dw = w.increments[:, 0, :]
    by_d = sum(chaos.eval_chaos(chaos.malliavin_derivative(X, m / 16), b) * dw[:, m] for m in range(16))
    assert np.allclose(direct, by_d, atol=1e-12)


def test_sharp_first_chaos_variance():
    X = h1()
    vals = []
    for s in range(10):
        b = sample_brownian(RngStream(9).spawn(s), G, 1, 10**4)
        w = sample_brownian(RngStream(10).spawn(s), G, 1, 10**4)
        vals.append(chaos.sharp_sample(X, b, w).real ** 2)
    m, se = batch_mean(np.concatenate(vals))
    assert abs(m - X.norm2()) <= 3 * se
    c = ChaosElement.const(1.0, G)
    assert np.all(chaos.sharp_sample(c, b, w) == 0)


def test_sharp_second_moment_is_twice_energy():
    X = mixed()
    vals = []
    for s in range(10):
        b = sample_brownian(RngStream(11).spawn(s), G, 1, 10**4)
        w = sample_brownian(RngStream(12).spawn(s), G, 1, 10**4)
        vals.append(np.abs(chaos.sharp_sample(X, b, w)) ** 2)
    m, se = batch_mean(np.concatenate(vals))
    assert abs(m - 2 * chaos.dirichlet_energy(X)) <= 3 * se


def test_second_moment_exact_targets():
    g = TimeGrid(4096)
    th = PeriodicScalarTheta("cosine")
    X = h1(g)
    assert abs(chaos.second_moment_exact(X, th, 128) - 1.0) <= 0.02
    Y = i2(g)
    assert abs(chaos.second_moment_exact(Y, th, 64) - 2.0) <= 0.05 * 2


def test_fluctuation_small_run():
    g = TimeGrid(256)
    res = chaos.fluctuation_experiment(h1(g), PeriodicScalarTheta("cosine"), [16], 20000,
                                       RngStream(13))
    r = res[0]
    assert r.max_abs_z <= 3 and abs(r.mc_z) <= 3
    assert r.imag_rms < 0.2


def test_fluctuation_constant_element():
    c = ChaosElement.const(2.0, G)
    r = chaos.fluctuation_experiment(c, PeriodicScalarTheta("cosine"), [4], 2000, RngStream(1))[0]
    assert r.exact_second_moment == 0.0 and r.target == 0.0 and r.mc_second_moment == 0.0
    # the statistic is exactly 0 on both sides; B probes use a fresh B' in the reference
    stat_only = np.all(r.ecf.probes[:, 1:] == 0, axis=1)
    assert np.all(r.ecf.values[stat_only] == 1.0) and np.all(r.ecf.reference[stat_only] == 1.0)
    assert r.max_abs_z <= 3


def test_fluctuation_rejects_misaligned():
    with pytest.raises(ValueError):
        chaos.fluctuation_experiment(h1(), PeriodicScalarTheta("rademacher"), [64], 2000,
                                     RngStream(1))


def test_exponential_zero_is_one():
    v = ExponentialVector(np.zeros(G.steps), G)
    X = chaos.expand_exponential(v)
    assert X.constant == 1.0 and X.norm2() == pytest.approx(1.0)


def test_exponential_tail_nonnegative_decreasing():
    v = ExponentialVector(0.5, G)
    tails = [v.tail(K) for K in range(4)]
    assert all(t >= 0 for t in tails)
    assert all(b < a for a, b in zip(tails[:-1], tails[1:]))
    with pytest.raises(ValueError):
        chaos.expand_exponential(ExponentialVector(3.0, G), 3)


def test_exponential_expansion_against_wick_product():
    v = ExponentialVector(0.5, G)
    X = chaos.expand_exponential(v, 3)
    p = sample_brownian(RngStream(14), G, 1, 10**5)
    err = np.mean(np.abs(chaos.eval_chaos(X, p) - v.wick(p)) ** 2)
    assert err <= v.tail(3)
    # the truncated expansion still carries almost all of the pathwise exponential
    pw = v.pathwise(p)
    m, se = batch_mean(pw)
    assert abs(m - 1.0) <= 3 * se


def test_exponential_inner_products():
    xi, eta = ExponentialVector(0.5, G), ExponentialVector(0.5 * np.cos(T), G)
    a = chaos.expand_exponential(xi, 3).inner(chaos.expand_exponential(eta, 3)).real
    s = float(np.sum(xi.xi * eta.xi) / G.steps)
    assert a == pytest.approx(sum(s**k / math.factorial(k) for k in range(4)), rel=0.01)


def test_bias_forms():
    g = TimeGrid(4096)
    th = PeriodicScalarTheta("cosine")
    X = h1(g)
    r = chaos.bias_form_experiment(X, X, th, [256])[0]
    assert abs(r.theoretical.real + 0.5) <= 0.005
    assert abs(r.practical.real + 0.5) <= 0.005
    assert r.target.real == pytest.approx(-0.5 * X.norm2())
    cross = chaos.bias_form_experiment(X, i2(g), th, [256])[0]
    assert cross.theoretical == 0 and cross.practical == 0 and cross.target == 0
    c = ChaosElement.const(1.0, g)
    z = chaos.bias_form_experiment(c, c, th, [16])[0]
    assert z.theoretical == 0 and z.practical == 0 and z.target == 0
