import numpy as np
import pytest

from energycollapse.spectrum import InitialState, Spectrum, decompose, initial_moments


def test_symmetric_two_level(two_level):
    spectrum, dec = two_level
    np.testing.assert_allclose(dec.probabilities, [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(dec.states, [[1, 0], [0, 1]], atol=1e-15)


def test_single_degenerate_level_keeps_state():
    spectrum = Spectrum((0.0,), (2,))
    dec = decompose(spectrum, InitialState(np.array([0.6, 0.8])))
    np.testing.assert_allclose(dec.probabilities, [1.0])
    np.testing.assert_allclose(dec.states[0], [0.6, 0.8], atol=1e-15)


def test_degenerate_middle_level():
    spectrum = Spectrum((-1.0, 0.0, 2.0), (1, 2, 1))
    dec = decompose(spectrum, InitialState(np.full(4, 0.5)))
    np.testing.assert_allclose(dec.probabilities, [0.25, 0.5, 0.25], atol=1e-15)
    np.testing.assert_allclose(dec.states[1], [0, 2**-0.5, 2**-0.5, 0], atol=1e-15)
    np.testing.assert_allclose(dec.reconstruct(), np.full(4, 0.5), atol=1e-15)


def test_lueders_states_are_eigenvectors():
    spectrum = Spectrum((-1.0, 0.5), (2, 3))
    amps = np.array([0.1, 0.2j, 0.3, -0.4, 0.5 + 0.1j])
    dec = decompose(spectrum, InitialState(amps / np.linalg.norm(amps)))
    hmat = np.diag(spectrum.basis_energies)
    for i, e in enumerate(spectrum.energies):
        phi = dec.states[i]
        assert np.linalg.norm(phi) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(hmat @ phi, e * phi, atol=1e-12)


def test_moments_two_level(two_level):
    spectrum, dec = two_level
    h0, v0, s0, tau = initial_moments(dec, spectrum)
    assert (h0, v0) == pytest.approx((0.5, 0.25))
    assert s0 == pytest.approx(np.log(2))
    assert tau == pytest.approx(4.0)


def test_moments_eigenstate():
    spectrum = Spectrum.nondegenerate([3.0])
    dec = decompose(spectrum, InitialState(np.array([1.0])))
    h0, v0, s0, tau = initial_moments(dec, spectrum)
    assert (h0, v0, s0) == (3.0, 0.0, 0.0)
    assert tau == np.inf


def test_moments_three_level():
    # oracle: 30-digit direct summation
    spectrum = Spectrum.nondegenerate([-1.0, 0.0, 2.0])
    dec = decompose(spectrum, InitialState(np.array([0.5, 2**-0.5, 0.5])))
    h0, v0, s0, _ = initial_moments(dec, spectrum)
    assert h0 == pytest.approx(0.25, abs=1e-14)
    assert v0 == pytest.approx(1.1875, abs=1e-14)
    assert s0 == pytest.approx(1.039720770839918, abs=1e-14)


def test_absent_level_is_carried():
    spectrum = Spectrum.nondegenerate([0.0, 1.0, 2.0])
    dec = decompose(spectrum, InitialState(np.array([0.6, 0.0, 0.8])))
    assert dec.present.tolist() == [True, False, True]
    assert dec.probabilities[1] == 0.0
    assert np.all(dec.states[1] == 0)


@pytest.mark.parametrize(
    "energies, mults",
    [((1.0, 0.0), (1, 1)), ((0.0, 0.0), (1, 1)), ((0.0,), (0,)), ((), ()), ((0.0, np.inf), (1, 1))],
)
def test_invalid_spectra(energies, mults):
    with pytest.raises(ValueError):
        Spectrum(energies, mults)


def test_unnormalized_state_rejected():
    with pytest.raises(ValueError, match="normalized"):
        InitialState(np.array([1.0, 1.0]))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        decompose(Spectrum.nondegenerate([0.0, 1.0]), InitialState(np.array([1.0])))
