import numpy as np
import pytest

from energycollapse import closedform as cf
from energycollapse.noise import NoisePath, PathGrid, SeedPolicy, sample_bridge, sample_brownian
from energycollapse.spectrum import InitialState, Spectrum, decompose

SEED = SeedPolicy(99)
E01 = np.array([0.0, 1.0])
HALF = np.array([0.5, 0.5])


def test_models_validate():
    with pytest.raises(ValueError):
        cf.Asymptotic(0.0)
    with pytest.raises(ValueError):
        cf.FiniteTime(1.0, -1.0)
    assert cf.FiniteTime(2.0, 1.0).sigma_t(0.5) == pytest.approx(4.0)


def test_information_path_zero_drift():
    g = PathGrid(1.0, 32)
    noise = sample_brownian(g, SEED, 0)
    xi = cf.information_path(cf.Asymptotic(1.0), 0, noise, E01)
    np.testing.assert_array_equal(xi, noise.values)


def test_information_path_drift_only():
    g = PathGrid(1.0, 8)
    zero = NoisePath(g, np.zeros(9), "bridge", 1.0)
    np.testing.assert_allclose(cf.information_path(cf.FiniteTime(1.0, 1.0), 1, zero, E01), g.times)
    zero = NoisePath(g, np.zeros(9))
    np.testing.assert_allclose(cf.information_path(cf.Asymptotic(2.0), 1, zero, E01), 2 * g.times)


def test_information_path_noise_kind_checked():
    g = PathGrid(1.0, 8)
    with pytest.raises(ValueError):
        cf.information_path(cf.FiniteTime(1.0, 1.0), 0, sample_brownian(g, SEED, 0), E01)
    with pytest.raises(ValueError):
        cf.information_path(cf.Asymptotic(1.0), 0, sample_bridge(g, SEED, 0), E01)
    with pytest.raises(ValueError):
        cf.information_path(cf.FiniteTime(1.0, 2.0), 0, sample_bridge(g, SEED, 0), E01)


@pytest.mark.parametrize("model", [cf.Asymptotic(1.3), cf.FiniteTime(1.3, 2.0)])
def test_no_information_returns_prior(model):
    pi0 = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(cf.conditional_probabilities(model, [-1, 0, 2], pi0, 0.0, 0.0), pi0, rtol=1e-15)


def test_posterior_value():
    # oracle: 30-digit evaluation of e^0.5 / (1 + e^0.5)
    p = cf.conditional_probabilities(cf.Asymptotic(1.0), E01, HALF, 1.0, 1.0)
    np.testing.assert_allclose(p, [0.37754066879814544, 0.62245933120185456], rtol=1e-14)


def test_posterior_against_monte_carlo():
    # independent route: P(H = 1 | xi_1 near 1) from simulated (H, xi_1) pairs
    rng = np.random.default_rng(5)
    n = 400_000
    h = rng.integers(0, 2, n)
    xi = h + rng.standard_normal(n)
    near = np.abs(xi - 1.0) < 0.02
    est = h[near].mean()
    se = np.sqrt(est * (1 - est) / near.sum())
    assert abs(est - 0.622459) < 4 * se + 0.002


def test_finite_time_one_hot_at_T():
    model = cf.FiniteTime(1.0, 1.0)
    p = cf.conditional_probabilities(model, E01, HALF, 1.0, 1.0)
    assert p.tolist() == [0.0, 1.0]
    # tie goes to the lowest level
    assert cf.conditional_probabilities(model, E01, HALF, 0.5, 1.0).tolist() == [1.0, 0.0]
    with pytest.raises(ValueError):
        cf.conditional_probabilities(model, E01, HALF, 1.0, 1.5)


def test_extreme_exponents_stay_finite():
    p = cf.conditional_probabilities(cf.Asymptotic(10.0), [-50.0, 0.0, 50.0], [0.3, 0.4, 0.3], 1e4, 1e3)
    assert np.all(np.isfinite(p))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_absent_level_keeps_zero_weight():
    p = cf.conditional_probabilities(cf.Asymptotic(1.0), [0, 1, 2], [0.5, 0.0, 0.5], 3.0, 1.0)
    assert p[1] == 0.0


@pytest.mark.parametrize(
    "probs, expected",
    [([1, 0], (0, 0)), ([0.5, 0.5], (0.5, 0.25)), ([0.377541, 0.622459], (0.622459, 0.235004))],
)
def test_energy_and_variance(probs, expected):
    h, v = cf.energy_and_variance(np.array(probs, dtype=float), E01)
    assert (h, v) == pytest.approx(expected, abs=1e-6)


def test_conditional_expectation_of():
    probs = np.array([0.2, 0.8])
    assert cf.conditional_expectation_of(lambda x: x, probs, E01) == cf.energy_and_variance(probs, E01)[0]
    assert cf.conditional_expectation_of(lambda x: float(x == 1.0), probs, E01) == 0.8
    assert cf.conditional_expectation_of(lambda x: x * x, HALF, [0.0, 2.0]) == 2.0


def test_shannon_entropy():
    assert cf.shannon_entropy([0.0, 1.0, 0.0]) == 0.0
    assert cf.shannon_entropy(np.full(5, 0.2)) == pytest.approx(np.log(5))
    assert cf.shannon_entropy([0.25, 0.5, 0.25]) == pytest.approx(1.039720770839918, abs=1e-14)


def test_state_vector():
    spectrum = Spectrum((-1.0, 0.0, 2.0), (1, 2, 1))
    amps = np.array([0.5, 0.5j, -0.5, 0.5])
    dec = decompose(spectrum, InitialState(amps))
    np.testing.assert_allclose(cf.state_vector(dec.probabilities, dec, spectrum, 0.0), amps, atol=1e-15)
    psi = cf.state_vector([0, 1, 0], dec, spectrum, 0.7)
    np.testing.assert_allclose(psi, dec.states[1], atol=1e-15)  # E = 0: no phase
    psi = cf.state_vector([0, 0, 1], dec, spectrum, 0.7)
    np.testing.assert_allclose(psi, np.exp(-1.4j) * dec.states[2], atol=1e-15)
    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(3), size=50)
    norms = np.linalg.norm(cf.state_vector(probs, dec, spectrum, rng.random(50)), axis=-1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


def test_state_vector_rejects_absent_level():
    spectrum = Spectrum.nondegenerate([0.0, 1.0])
    dec = decompose(spectrum, InitialState(np.array([1.0, 0.0])))
    with pytest.raises(ValueError):
        cf.state_vector([0.5, 0.5], dec, spectrum, 0.0)


def test_single_level_innovation_is_noise():
    g = PathGrid(1.0, 64)
    noise = sample_brownian(g, SEED, 1)
    rec = cf.trajectory(cf.Asymptotic(1.0), [0.0], [1.0], noise, 0)
    np.testing.assert_array_equal(rec.W, noise.values)
    assert np.all(rec.H == 0) and np.all(rec.V == 0) and np.all(rec.S == 0)


def test_trajectory_invariants():
    g = PathGrid(3.0, 500)
    pi0 = np.array([0.5, 0.3, 0.2])
    energies = np.array([-1.0, 0.0, 2.0])
    for model, noise in [(cf.Asymptotic(1.0), sample_brownian(g, SEED, 2)),
                         (cf.FiniteTime(1.0, 3.0), sample_bridge(g, SEED, 2))]:
        rec = cf.trajectory(model, energies, pi0, noise, 1)
        assert np.all(rec.pi >= 0) and np.all(rec.pi <= 1)
        np.testing.assert_allclose(rec.pi.sum(axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(rec.H, rec.pi @ energies, atol=1e-12)
        assert np.all(rec.V >= 0)
        assert rec.W[0] == 0.0
    assert rec.terminal_level == 1 and rec.V[-1] == 0.0


def test_markov_property():
    # posterior depends on the path only through (xi_t, t)
    g = PathGrid(1.0, 100)
    model = cf.Asymptotic(1.0)
    a = cf.trajectory(model, E01, HALF, sample_brownian(g, SEED, 3), 0)
    direct = cf.conditional_probabilities(model, E01, HALF, a.xi[-1], 1.0)
    np.testing.assert_allclose(a.pi[-1], direct, rtol=1e-14)
    # chained Bayes: prior at t=0.4, then update with the increment
    k = 40
    s = model.sigma
    lw = np.log(a.pi[k]) + s * E01 * (a.xi[-1] - a.xi[k]) - 0.5 * s**2 * E01**2 * (1.0 - g.times[k])
    chained = np.exp(lw - np.logaddexp.reduce(lw))
    np.testing.assert_allclose(chained, direct, rtol=1e-12)


def test_conditioned_curve():
    g = PathGrid(40.0, 4000)
    noise = sample_brownian(g, SEED, 4)
    h = cf.conditioned_energy_curve(cf.Asymptotic(1.0), E01, HALF, 1, noise)
    assert abs(h[-1] - 1.0) < 1e-4
    np.testing.assert_array_equal(cf.conditioned_energy_curve(cf.Asymptotic(1.0), [2.5], [1.0], 0, noise), 2.5)
    fin = cf.conditioned_energy_curve(cf.FiniteTime(1.0, 40.0), E01, HALF, 0, sample_bridge(g, SEED, 4))
    assert fin[-1] == 0.0
    with pytest.raises(ValueError):
        cf.conditioned_energy_curve(cf.Asymptotic(1.0), E01, [1.0, 0.0], 1, noise)


def test_conditioned_deviation_shrinks_with_horizon():
    model = cf.Asymptotic(1.0)
    devs = []
    for t_end in (2.0, 8.0, 32.0):
        g = PathGrid(t_end, 256)
        last = [abs(cf.conditioned_energy_curve(model, E01, HALF, 1, sample_brownian(g, SEED, i))[-1] - 1)
                for i in range(200)]
        devs.append(np.mean(last))
    assert devs[0] > devs[1] > devs[2]


@pytest.mark.parametrize("model", [cf.Asymptotic(0.8), cf.FiniteTime(0.8, 2.0)])
def test_reverse_construction_inverts_innovation(model):
    g = PathGrid(2.0, 300)
    noise = sample_bridge(g, SEED, 6) if isinstance(model, cf.FiniteTime) else sample_brownian(g, SEED, 6)
    rec = cf.trajectory(model, [-1.0, 0.5, 1.0], [0.2, 0.3, 0.5], noise, 2)
    back = cf.reverse_information(model, rec.W, rec.H, rec.times)
    np.testing.assert_allclose(back, rec.xi, atol=1e-10)


def test_innovation_shape_checks():
    with pytest.raises(ValueError):
        cf.innovation_path(cf.Asymptotic(1.0), np.zeros(5), np.zeros(4), np.linspace(0, 1, 5))
    with pytest.raises(ValueError):
        cf.innovation_path(cf.FiniteTime(1.0, 0.5), np.zeros(5), np.zeros(5), np.linspace(0, 1, 5))


def test_density_identity_converges():
    model = cf.Asymptotic(1.0)
    errs = []
    for steps in (2**8, 2**10, 2**12):
        g = PathGrid(1.0, steps)
        rels = []
        for i in range(50):
            rec = cf.trajectory(model, E01, HALF, sample_brownian(g, SEED, i), i % 2)
            disc = cf.log_density_discrete(model, rec.xi, rec.H, rec.times)[-1]
            exact = cf.log_density_exact(model, E01, HALF, rec.xi[-1], 1.0)
            rels.append(np.expm1(disc - exact))
        errs.append(np.sqrt(np.mean(np.square(rels))))
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] < 0.02
