"""Hamiltonian spectrum, initial state and its Lüders decomposition.

The Hamiltonian is always given in its eigenbasis: basis vectors are grouped
into contiguous blocks, one block per energy level, in order of increasing
energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import entr

NORM_TOL = 1e-12


@dataclass(frozen=True)
class Spectrum:
    """Energy levels ``E_i`` with multiplicities ``n_i`` (hbar = 1)."""

    energies: tuple[float, ...]
    multiplicities: tuple[int, ...]

    def __post_init__(self):
        energies = tuple(float(e) for e in self.energies)
        mults = tuple(int(m) for m in self.multiplicities)
        if len(energies) == 0:
            raise ValueError("spectrum needs at least one level")
        if len(energies) != len(mults):
            raise ValueError("energies and multiplicities differ in length")
        if any(m < 1 for m in mults):
            raise ValueError("multiplicities must be >= 1")
        if any(not np.isfinite(e) for e in energies):
            raise ValueError("energies must be finite")
        if any(b <= a for a, b in zip(energies, energies[1:])):
            raise ValueError("energies must be strictly increasing")
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "multiplicities", mults)

    @classmethod
    def nondegenerate(cls, energies) -> "Spectrum":
        return cls(tuple(energies), (1,) * len(energies))

    @property
    def n_levels(self) -> int:
        return len(self.energies)

    @property
    def dimension(self) -> int:
        return sum(self.multiplicities)

    @property
    def energy_array(self) -> np.ndarray:
        return np.asarray(self.energies, dtype=float)

    @property
    def level_of_basis(self) -> np.ndarray:
        """Level index of each basis vector."""
        return np.repeat(np.arange(self.n_levels), self.multiplicities)

    @property
    def basis_energies(self) -> np.ndarray:
        """Diagonal of the Hamiltonian in the eigenbasis."""
        return self.energy_array[self.level_of_basis]

    def block(self, level: int) -> slice:
        start = sum(self.multiplicities[:level])
        return slice(start, start + self.multiplicities[level])


@dataclass(frozen=True)
class InitialState:
    """Amplitudes of ``|psi_0>`` in the Hamiltonian eigenbasis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size == 0:
            raise ValueError("amplitudes must be a non-empty vector")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValueError(f"initial state not normalized: |psi|^2 = {norm2!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_pairs(cls, pairs) -> "InitialState":
        """Build from a list of ``(re, im)`` pairs."""
        return cls(np.array([complex(re, im) for re, im in pairs]))

    @property
    def dimension(self) -> int:
        return self.amplitudes.size


@dataclass(frozen=True)
class LudersDecomposition:
    """Level probabilities ``pi_i`` and normalised Lüders states ``|phi_i>``.

    ``states`` has one row per level, each a full-dimension vector supported
    on that level's block.  Rows of levels with ``pi_i = 0`` are zero and
    flagged by ``present[i] = False``.
    """

    probabilities: np.ndarray
    states: np.ndarray
    present: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """``sum_i sqrt(pi_i) |phi_i>``; equals ``psi_0`` under our phase convention."""
        return np.sqrt(self.probabilities) @ self.states


def decompose(spectrum: Spectrum, psi0: InitialState) -> LudersDecomposition:
    """Project ``psi0`` onto each eigenspace and renormalise.

    The phase of each Lüders state is inherited from the projection, so that
    ``reconstruct()`` returns ``psi0`` exactly.
    """
    if psi0.dimension != spectrum.dimension:
        raise ValueError(
            f"state dimension {psi0.dimension} != spectrum dimension {spectrum.dimension}"
        )
    amps = psi0.amplitudes
    n = spectrum.n_levels
    probs = np.zeros(n)
    states = np.zeros((n, spectrum.dimension), dtype=complex)
    present = np.zeros(n, dtype=bool)
    for i in range(n):
        blk = spectrum.block(i)
        proj = amps[blk]
        p = float(np.vdot(proj, proj).real)
        probs[i] = p
        if p > 0.0:
            states[i, blk] = proj / np.sqrt(p)
            present[i] = True
    for arr in (probs, states, present):
        arr.setflags(write=False)
    return LudersDecomposition(probs, states, present)


def initial_moments(dec: LudersDecomposition, spectrum: Spectrum):
    """Return ``(H0, V0, S0, tauR)``.

    ``tauR`` is ``1/V0`` (infinite for an eigenstate); callers divide by
    ``sigma**2`` to obtain the reduction timescale.
    """
    p = dec.probabilities
    e = spectrum.energy_array
    h0 = float(p @ e)
    v0 = float(p @ (e - h0) ** 2)
    s0 = float(entr(p).sum())
    tau = 1.0 / v0 if v0 > 0 else float("inf")
    return h0, v0, s0, tau
