import math

import numpy as np
import pytest

from afpwiener.core import (BrownianPath, RngStream, TimeGrid, batch_sizes, brownian_batches,
                            path_value, sample_brownian)


def test_grid_basics():
    g = TimeGrid(7)
    assert abs(g.steps * g.dt - 1.0) <= 1e-12
    assert np.array_equal(g.points, np.arange(8) / 7)
    assert g.index_of(3 / 7) == 3
    with pytest.raises(ValueError):
        TimeGrid(0)
    with pytest.raises(ValueError):
        g.index_of(1.5)


def test_stream_reproducible_and_distinct():
    a = RngStream(5, 3).generator().standard_normal(10)
    b = RngStream(5, 3).generator().standard_normal(10)
    assert np.array_equal(a, b)
    x = RngStream(5, 0).generator().standard_normal(10**5)
    y = RngStream(5, 1).generator().standard_normal(10**5)
    assert abs(np.corrcoef(x, y)[0, 1]) <= 3 / math.sqrt(10**5)


def test_spawn_and_named_are_stable():
    s = RngStream(9)
    assert s.spawn(4) == s.spawn(4)
    assert s.spawn(4) != s.spawn(5)
    assert s.named("B") != s.named("W")
    assert s.named("B") == RngStream(9).named("B")


def test_sample_brownian_deterministic():
    g = TimeGrid(32)
    p = sample_brownian(RngStream(1, 2), g, 2, 10)
    q = sample_brownian(RngStream(1, 2), g, 2, 10)
    assert np.array_equal(p.increments, q.increments)
    assert p.increments.shape == (10, 2, 32)
    with pytest.raises(ValueError):
        sample_brownian(RngStream(1), g, 0)


def test_terminal_variance():
    p = sample_brownian(RngStream(3), TimeGrid(64), 1, 10**5)
    v = p.terminal()[:, 0].var()
    assert 0.98 <= v <= 1.02


def test_single_step_path():
    p = sample_brownian(RngStream(4), TimeGrid(1), 1, 20000)
    assert p.increments.shape == (20000, 1, 1)
    assert abs(p.terminal().var() - 1.0) < 0.05


def test_values_are_prefix_sums():
    p = sample_brownian(RngStream(0), TimeGrid(16), 1)
    v = p.values()
    assert np.all(v[..., 0] == 0)
    for j in range(17):
        assert np.allclose(v[..., j], p.increments[..., :j].sum(axis=-1), atol=1e-15)


def test_path_value_examples():
    g = TimeGrid(2)
    p = BrownianPath(g, np.array([[0.3, -0.5]]))
    assert np.array_equal(path_value(p, 0.0), [0.0])
    assert np.allclose(path_value(p, 1.0), [-0.2])
    assert np.allclose(path_value(p, 0.5), [0.3])
    with pytest.raises(ValueError):
        path_value(p, -0.1)


def test_increments_read_only_without_touching_caller():
    a = np.zeros((1, 4))
    p = BrownianPath(TimeGrid(4), a)
    assert a.flags.writeable
    with pytest.raises(ValueError):
        p.increments[0, 0] = 1.0


def test_batches_cover_samples():
    assert batch_sizes(4500, 2000) == [2000, 2000, 500]
    paths = list(brownian_batches(RngStream(1), TimeGrid(8), 4500, 1, 2000))
    assert sum(p.batch_shape[0] for p in paths) == 4500
    first = sample_brownian(RngStream(1).spawn(0), TimeGrid(8), 1, 2000)
    assert np.array_equal(paths[0].increments, first.increments)
