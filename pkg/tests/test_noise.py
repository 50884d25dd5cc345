import numpy as np
import pytest

from energycollapse.noise import (
    PathGrid,
    SeedPolicy,
    brownian_increments,
    cumulate,
    draw_levels,
    pin_bridge,
    sample_bridge,
    sample_brownian,
    sample_terminal_energy,
    sample_terminal_levels,
    terminal_uniforms,
)

SEED = SeedPolicy(12345)


def test_grid_endpoint_exact():
    g = PathGrid(0.3, 7)
    assert g.times[0] == 0.0
    assert g.times[-1] == 0.3
    assert g.coarsen(7).steps == 1
    with pytest.raises(ValueError):
        g.coarsen(2)


@pytest.mark.parametrize("t_end, steps", [(0.0, 4), (-1.0, 4), (np.inf, 4), (1.0, 0), (1.0, 1.5)])
def test_grid_rejects(t_end, steps):
    with pytest.raises(ValueError):
        PathGrid(t_end, steps)


def test_seed_range():
    with pytest.raises(ValueError):
        SeedPolicy(-1)
    with pytest.raises(ValueError):
        SeedPolicy(2**64)


def test_brownian_starts_at_zero_and_is_reproducible():
    g = PathGrid(1.0, 50)
    a = sample_brownian(g, SEED, 3)
    b = sample_brownian(g, SEED, 3)
    assert a.values[0] == 0.0
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample_brownian(g, SEED, 4).values)


def test_paths_independent_of_batch_composition():
    g = PathGrid(1.0, 16)
    batch = brownian_increments(g, SEED, [5, 9, 2])
    np.testing.assert_array_equal(batch[1], brownian_increments(g, SEED, [9])[0])


def test_single_step_mean():
    g = PathGrid(1.0, 1)
    n = 100_000
    x = brownian_increments(g, SEED, np.arange(n))[:, 0]
    assert abs(x.mean()) <= 4 * np.sqrt(g.dt / n)


def test_quadratic_variation_single_path():
    g = PathGrid(1.0, 10_000)
    qv = np.sum(sample_brownian(g, SEED, 0).increments ** 2)
    assert qv == pytest.approx(1.0, rel=0.05)


def test_increments_uncorrelated():
    g = PathGrid(1.0, 4)
    n = 40_000
    d = brownian_increments(g, SEED, np.arange(n))
    c = np.corrcoef(d.T)
    off = c[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) < 4 / np.sqrt(n)
    np.testing.assert_allclose(d.var(axis=0), g.dt, rtol=4 * np.sqrt(2 / n))


def test_bridge_pinned():
    g = PathGrid(2.0, 64)
    b = sample_bridge(g, SEED, 0)
    assert b.values[0] == 0.0 and b.values[-1] == 0.0
    assert b.kind == "bridge" and b.bridge_T == 2.0


def test_bridge_covariance():
    g = PathGrid(1.0, 8)
    n = 100_000
    beta = pin_bridge(cumulate(brownian_increments(g, SEED, np.arange(n))), g.times)
    ts = [0.25, 0.5, 0.75]
    k = [2, 4, 6]
    for a, s in zip(k, ts):
        for b, t in zip(k, ts):
            prod = beta[:, a] * beta[:, b]
            se = prod.std(ddof=1) / np.sqrt(n)
            expect = min(s, t) * (1 - max(s, t))
            assert abs(prod.mean() - expect) <= 3 * se
    assert beta[:, 4].var() == pytest.approx(0.25, rel=0.02)


def test_terminal_level_certain():
    assert sample_terminal_levels(np.array([1.0]), SEED, np.arange(100)).tolist() == [0] * 100
    assert sample_terminal_energy(np.array([0.0, 1.0, 0.0]), SEED, 0) == 1


@pytest.mark.parametrize("pi", [(0.5, 0.5), (0.5, 0.3, 0.2)])
def test_terminal_level_frequencies(pi):
    n = 10_000
    pi = np.array(pi)
    freq = np.bincount(sample_terminal_levels(pi, SEED, np.arange(n)), minlength=pi.size) / n
    assert np.all(np.abs(freq - pi) <= 3 * np.sqrt(pi * (1 - pi) / n))


def test_draw_levels_edges():
    p = np.array([0.2, 0.0, 0.8])
    assert draw_levels(p, np.array([0.0, 0.1999, 0.2, 0.9999999999999999])).tolist() == [0, 0, 2, 2]


def test_energy_stream_independent_of_noise():
    g = PathGrid(1.0, 1)
    n = 20_000
    idx = np.arange(n)
    ind = (sample_terminal_levels(np.array([0.5, 0.5]), SEED, idx) == 1).astype(float)
    b = brownian_increments(g, SEED, idx)[:, 0]
    assert abs(np.corrcoef(ind, b)[0, 1]) < 4 / np.sqrt(n)
    assert terminal_uniforms(SEED, [7])[0] == terminal_uniforms(SEED, [7])[0]
