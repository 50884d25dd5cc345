"""Closed-form solution of the energy-based reduction dynamics.

The state at time ``t`` is determined by the information process ``xi_t``
(the hidden terminal energy observed through Brownian noise) via Bayes'
rule.  All functions broadcast over leading axes so that whole ensembles of
paths can be processed at once; the level axis is always last.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import entr, logsumexp

from .noise import NoisePath, PathGrid
from .spectrum import LudersDecomposition, Spectrum


@dataclass(frozen=True)
class Asymptotic:
    """Reduction completed only as ``t -> infinity``."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def sigma_t(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.sigma)


@dataclass(frozen=True)
class FiniteTime:
    """Reduction completed exactly at time ``T``; coupling ``sigma T/(T - t)``."""

    sigma: float
    T: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")

    def sigma_t(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.sigma * self.T / (self.T - t)


ModelKind = Union[Asymptotic, FiniteTime]


def _energies(spectrum) -> np.ndarray:
    if isinstance(spectrum, Spectrum):
        return spectrum.energy_array
    return np.asarray(spectrum, dtype=float)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    xi: np.ndarray
    pi: np.ndarray  # (steps + 1, n_levels)
    H: np.ndarray
    V: np.ndarray
    S: np.ndarray
    W: np.ndarray
    terminal_level: int

    @property
    def grid(self) -> PathGrid:
        return PathGrid(self.times[-1], self.times.size - 1)


def information_path(model: ModelKind, level: int, noise: NoisePath, spectrum) -> np.ndarray:
    """``xi_t = sigma E_level t + noise_t`` (noise a Brownian motion or bridge)."""
    if isinstance(model, FiniteTime):
        if noise.kind != "bridge":
            raise ValueError("finite-time model needs a Brownian bridge")
        if not np.isclose(noise.bridge_T, model.T, rtol=0, atol=1e-12):
            raise ValueError(f"bridge pinned at {noise.bridge_T}, model T = {model.T}")
    elif noise.kind != "brownian":
        raise ValueError("asymptotic model needs a Brownian motion")
    e = _energies(spectrum)[level]
    return model.sigma * e * noise.grid.times + noise.values


def log_weights(model: ModelKind, spectrum, pi0, xi, t) -> np.ndarray:
    """Unnormalised log posterior weights, shape ``xi.shape + (n_levels,)``.

    At ``t = T`` in the finite-time model the weights are the left-limit
    exponents ``sigma xi E - sigma^2 E^2 T / 2``, only meaningful through
    their argmax.
    """
    e = _energies(spectrum)
    xi, t = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    with np.errstate(divide="ignore"):
        log_pi = np.log(np.asarray(pi0, dtype=float))
    s = model.sigma
    x = xi[..., None]
    tt = t[..., None]
    if isinstance(model, Asymptotic):
        expo = s * x * e - 0.5 * s * s * e * e * tt
    else:
        T = model.T
        if np.any(t > T):
            raise ValueError(f"t exceeds collapse time T = {T}")
        interior = tt < T
        gap = np.where(interior, T - tt, 1.0)
        expo = np.where(
            interior,
            (s * x * e * T - 0.5 * s * s * e * e * tt * T) / gap,
            s * x * e - 0.5 * s * s * e * e * T,
        )
    return log_pi + expo


def conditional_probabilities(model: ModelKind, spectrum, pi0, xi_t, t) -> np.ndarray:
    """Posterior level probabilities ``P(H = E_i | xi_t)``.

    Evaluated with log-sum-exp.  For the finite-time model at ``t = T`` the
    result is one-hot on the argmax level (lowest index wins ties).
    """
    lw = log_weights(model, spectrum, pi0, xi_t, t)
    probs = np.exp(lw - logsumexp(lw, axis=-1, keepdims=True))
    if isinstance(model, FiniteTime):
        at_T = np.broadcast_to(np.asarray(t, dtype=float), lw.shape[:-1]) >= model.T
        if np.any(at_T):
            hot = np.zeros_like(lw)
            np.put_along_axis(hot, np.argmax(lw, axis=-1)[..., None], 1.0, axis=-1)
            probs = np.where(at_T[..., None], hot, probs)
    return probs


def energy_and_variance(probabilities, spectrum):
    """Conditional mean and variance of the energy."""
    e = _energies(spectrum)
    p = np.asarray(probabilities, dtype=float)
    h = p @ e
    v = np.sum(p * (e - h[..., None]) ** 2, axis=-1)
    return h, v


def conditional_expectation_of(f: Callable, probabilities, spectrum):
    """``E[f(H) | F_t] = sum_i pi_it f(E_i)``."""
    vals = np.asarray([f(x) for x in _energies(spectrum)], dtype=float)
    return np.asarray(probabilities, dtype=float) @ vals


def shannon_entropy(probabilities):
    return entr(np.asarray(probabilities, dtype=float)).sum(axis=-1)


def state_vector(probabilities, dec: LudersDecomposition, spectrum, t) -> np.ndarray:
    """``|psi_t> = sum_i exp(-i E_i t) sqrt(pi_it) |phi_i>``."""
    e = _energies(spectrum)
    p = np.asarray(probabilities, dtype=float)
    if np.any((p > 0) & ~dec.present):
        raise ValueError("positive probability on a level absent from the initial state")
    t = np.asarray(t, dtype=float)[..., None]
    coeff = np.sqrt(p) * np.exp(-1j * e * t)
    return coeff @ dec.states


def innovation_path(model: ModelKind, xi, H, times) -> np.ndarray:
    """Innovation Brownian motion reconstructed from ``xi`` and ``H``.

    Left-point sums along the last axis; for the finite-time model the
    integrand ``(xi_s - sigma T H_s)/(T - s)`` is only evaluated at ``s < T``.
    """
    xi = np.asarray(xi, dtype=float)
    H = np.asarray(H, dtype=float)
    times = np.asarray(times, dtype=float)
    if xi.shape != H.shape or xi.shape[-1] != times.size:
        raise ValueError("xi, H and times must share the same grid")
    dt = np.diff(times)
    if isinstance(model, Asymptotic):
        integrand = -model.sigma * H[..., :-1]
    else:
        T = model.T
        if times[-2] >= T:
            raise ValueError("grid extends past T")
        integrand = (xi[..., :-1] - model.sigma * T * H[..., :-1]) / (T - times[:-1])
    correction = np.zeros_like(xi)
    np.cumsum(integrand * dt, axis=-1, out=correction[..., 1:])
    return xi + correction


def reverse_information(model: ModelKind, W, H, times) -> np.ndarray:
    """Rebuild ``xi`` from the innovation ``W`` and energy path ``H``.

    Exact inverse of the left-point discretisation in :func:`innovation_path`.
    In the finite-time model this is the discrete form of
    ``xi_t = (T - t) int_0^t (dW_s + sigma_s H_s ds) / (T - s)``.
    """
    W = np.asarray(W, dtype=float)
    H = np.asarray(H, dtype=float)
    times = np.asarray(times, dtype=float)
    dt = np.diff(times)
    dW = np.diff(W, axis=-1)
    xi = np.zeros_like(W)
    if isinstance(model, Asymptotic):
        np.cumsum(dW + model.sigma * H[..., :-1] * dt, axis=-1, out=xi[..., 1:])
        return xi
    T = model.T
    gap = T - times
    u = dW + model.sigma * T * H[..., :-1] * dt / gap[:-1]
    interior = gap[1:] > 0
    scaled = np.cumsum(u[..., interior] / gap[1:][interior], axis=-1)
    n_in = int(interior.sum())
    xi[..., 1 : n_in + 1] = gap[1 : n_in + 1] * scaled
    if n_in < u.shape[-1]:
        # last step lands on T: xi_T = (1 - dt/(T - t)) xi + u with the factor zero
        xi[..., -1] = u[..., -1]
    return xi


def terminal_level(probabilities) -> np.ndarray:
    """Most probable level (lowest index on ties)."""
    return np.argmax(np.asarray(probabilities), axis=-1)


def trajectory(model: ModelKind, spectrum, pi0, noise: NoisePath, level: int) -> TrajectoryRecord:
    """Full closed-form record of one path whose terminal energy is ``E_level``."""
    times = noise.grid.times
    xi = information_path(model, level, noise, spectrum)
    probs = conditional_probabilities(model, spectrum, pi0, xi, times)
    h, v = energy_and_variance(probs, spectrum)
    s = shannon_entropy(probs)
    w = innovation_path(model, xi, h, times)
    return TrajectoryRecord(times, xi, probs, h, v, s, w, int(terminal_level(probs[-1])))


def conditioned_energy_curve(model: ModelKind, spectrum, pi0, level: int, noise: NoisePath) -> np.ndarray:
    """Energy expectation path on the event ``H = E_level``."""
    if not np.asarray(pi0, dtype=float)[level] > 0:
        raise ValueError(f"level {level} has zero probability")
    xi = information_path(model, level, noise, spectrum)
    probs = conditional_probabilities(model, spectrum, pi0, xi, noise.grid.times)
    return energy_and_variance(probs, spectrum)[0]


def log_density_exact(model: Asymptotic, spectrum, pi0, xi, t):
    """``ln sum_i pi_i exp(sigma E_i xi - sigma^2 E_i^2 t / 2)``."""
    return logsumexp(log_weights(model, spectrum, pi0, xi, t), axis=-1)


def log_density_discrete(model: Asymptotic, xi, H, times):
    """Left-point ``sigma int H dxi - sigma^2/2 int H^2 ds`` along the last axis."""
    s = model.sigma
    dxi = np.diff(np.asarray(xi, dtype=float), axis=-1)
    dt = np.diff(np.asarray(times, dtype=float))
    Hl = np.asarray(H, dtype=float)[..., :-1]
    out = np.zeros(np.shape(xi))
    np.cumsum(s * Hl * dxi - 0.5 * s * s * Hl * Hl * dt, axis=-1, out=out[..., 1:])
    return out
