"""Euler-Maruyama integration of the nonlinear state equation.

This is the independent check on :mod:`energycollapse.closedform`: it never
uses the filtering solution, only the stochastic differential equation.
The Hamiltonian is diagonal, so every operator acts elementwise on the
amplitude vector.  States may carry leading batch axes (one row per path).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .closedform import FiniteTime, ModelKind
from .spectrum import Spectrum


def _basis_energies(spectrum) -> np.ndarray:
    if isinstance(spectrum, Spectrum):
        return spectrum.basis_energies
    return np.asarray(spectrum, dtype=float)


def _expect(weights, diag):
    return np.sum(weights * diag, axis=-1) / np.sum(weights, axis=-1)


def normalize(state: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(np.abs(state) ** 2, axis=-1, keepdims=True))
    return state / norm


@dataclass(frozen=True)
class GeneralModel:
    """Stationary energy-based dynamics with ``K = K(H)`` and ``L = L(H)``.

    The volatility operator is ``i K + L - <L>``; the drift is
    ``-i H - (1/2) sigma^dagger sigma``.
    """

    L: Callable[[np.ndarray], np.ndarray]
    K: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def diagonals(self, energies: np.ndarray):
        lv = np.asarray(self.L(energies), dtype=float) * np.ones_like(energies)
        kv = np.zeros_like(energies) if self.K is None else np.asarray(self.K(energies), dtype=float) * np.ones_like(energies)
        if not (np.all(np.isfinite(lv)) and np.all(np.isfinite(kv))):
            raise ValueError("L and K must be finite on the spectrum")
        return kv, lv


def _update(state, energies, vol, dW, dt, renormalize=True):
    drift = -0.5 * (vol.real ** 2 + vol.imag ** 2)
    dW = np.asarray(dW, dtype=float)[..., None]
    new = state + (-1j * energies * state + drift * state) * dt + vol * state * dW
    return normalize(new) if renormalize else new


def euler_step_standard(state, model: ModelKind, dW, dt: float, spectrum, t: float = 0.0,
                        renormalize: bool = True) -> np.ndarray:
    """One renormalised Euler-Maruyama step of the energy-based equation.

    ``t`` is only used by the finite-time model, whose coupling diverges at
    ``T``; stepping past ``T - dt`` is refused.  ``renormalize=False`` returns
    the raw Euler update (for checking the scheme's norm drift).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    e = _basis_energies(spectrum)
    if isinstance(model, FiniteTime):
        if t + dt > model.T - dt + 1e-12 * model.T:
            raise ValueError("finite-time integration must stop one step short of T")
        s = float(model.sigma_t(t))
    else:
        s = model.sigma
    state = np.asarray(state, dtype=complex)
    weights = np.abs(state) ** 2
    # written as L - <L> with L = sigma H / 2, matching the general form
    lv = 0.5 * s * e
    vol = lv - _expect(weights, lv)[..., None] + 0j
    return _update(state, e, vol, dW, dt, renormalize)


def euler_step_general(state, gm: GeneralModel, sigma_scale: float, dW, dt: float, spectrum) -> np.ndarray:
    """One renormalised Euler-Maruyama step of the general stationary equation.

    ``sigma_scale`` multiplies the whole volatility operator (a deterministic
    time-dependent coupling).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    e = _basis_energies(spectrum)
    kv, lv = gm.diagonals(e)
    state = np.asarray(state, dtype=complex)
    weights = np.abs(state) ** 2
    l_mean = _expect(weights, lv)[..., None]
    vol = sigma_scale * (1j * kv + (lv - l_mean))
    return _update(state, e, vol, dW, dt)


def ancillary_exact(psi0, sigma: float, xi_t, t, spectrum) -> np.ndarray:
    """Unnormalised solution of the linear ancillary equation.

    ``exp(-i H t + sigma H xi_t / 2 - sigma^2 H^2 t / 4) |psi_0>``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    e = _basis_energies(spectrum)
    amps = getattr(psi0, "amplitudes", psi0)
    xi = np.asarray(xi_t, dtype=float)[..., None]
    tt = t[..., None]
    return np.exp(-1j * e * tt + 0.5 * sigma * e * xi - 0.25 * sigma**2 * e * e * tt) * amps


@dataclass(frozen=True)
class ObservableMoments:
    G: np.ndarray
    VG: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    kappa: np.ndarray


def observable_expectations(state, diag_observable, spectrum) -> ObservableMoments:
    """Moments of a diagonal observable ``G`` that commutes with ``H``.

    ``G``, its variance, ``gamma = <(G-G_t)(H-H_t)>``,
    ``delta = <(G-G_t)^2 (H-H_t)>`` and ``kappa = <(H-H_t)^3>``.
    """
    e = _basis_energies(spectrum)
    g = np.asarray(diag_observable, dtype=float)
    state = np.asarray(state, dtype=complex)
    if g.shape != e.shape or state.shape[-1] != e.size:
        raise ValueError("observable, state and spectrum dimensions differ")
    w = np.abs(state) ** 2
    w = w / np.sum(w, axis=-1, keepdims=True)
    gm = np.sum(w * g, axis=-1)
    hm = np.sum(w * e, axis=-1)
    dg = g - gm[..., None]
    dh = e - hm[..., None]
    return ObservableMoments(
        G=gm,
        VG=np.sum(w * dg * dg, axis=-1),
        gamma=np.sum(w * dg * dh, axis=-1),
        delta=np.sum(w * dg * dg * dh, axis=-1),
        kappa=np.sum(w * dh**3, axis=-1),
    )


def integrate_standard(psi0, model: ModelKind, dW: np.ndarray, times: np.ndarray, spectrum,
                       record: bool = False):
    """Drive the Euler scheme with given Wiener increments.

    ``dW`` has shape ``(..., n_steps)`` and ``times`` the matching
    ``n_steps + 1`` grid points.  Returns the final state, or every state
    along the grid when ``record`` is set.
    """
    dW = np.asarray(dW, dtype=float)
    amps = np.asarray(getattr(psi0, "amplitudes", psi0), dtype=complex)
    state = np.broadcast_to(amps, dW.shape[:-1] + amps.shape).copy()
    states = [state] if record else None
    for k in range(dW.shape[-1]):
        dt = times[k + 1] - times[k]
        state = euler_step_standard(state, model, dW[..., k], dt, spectrum, t=times[k])
        if record:
            states.append(state)
    if record:
        return np.stack(states, axis=-2)
    return state


def integrate_general(psi0, gm: GeneralModel, dW: np.ndarray, times: np.ndarray, spectrum,
                      sigma_scale: float = 1.0, record_every: int = 0):
    """Euler scheme for the general equation; optionally keep every ``record_every``-th state."""
    dW = np.asarray(dW, dtype=float)
    amps = np.asarray(getattr(psi0, "amplitudes", psi0), dtype=complex)
    state = np.broadcast_to(amps, dW.shape[:-1] + amps.shape).copy()
    kept = [state] if record_every else None
    for k in range(dW.shape[-1]):
        dt = times[k + 1] - times[k]
        state = euler_step_general(state, gm, sigma_scale, dW[..., k], dt, spectrum)
        if record_every and (k + 1) % record_every == 0:
            kept.append(state)
    if record_every:
        return np.stack(kept, axis=-2)
    return state

