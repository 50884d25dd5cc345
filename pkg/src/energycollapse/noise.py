"""Reproducible Brownian and Brownian-bridge paths on uniform grids.

Every path owns two independent random streams derived from
``(master_seed, path_index, stream)`` through :class:`numpy.random.SeedSequence`,
so a path is the same no matter which worker generates it or in what order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

NOISE_STREAM = 0
ENERGY_STREAM = 1


@dataclass(frozen=True)
class PathGrid:
    t_end: float
    steps: int

    def __post_init__(self):
        if not (self.t_end > 0 and np.isfinite(self.t_end)):
            raise ValueError("t_end must be positive and finite")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return self.t_end / self.steps

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.steps + 1) * self.dt
        t[-1] = self.t_end
        return t

    def coarsen(self, factor: int) -> "PathGrid":
        if self.steps % factor:
            raise ValueError(f"{self.steps} steps not divisible by {factor}")
        return PathGrid(self.t_end, self.steps // factor)


@dataclass(frozen=True)
class SeedPolicy:
    """Counter-based derivation of per-path generators."""

    master_seed: int

    def __post_init__(self):
        seed = int(self.master_seed)
        if not 0 <= seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "master_seed", seed)

    def generator(self, path_index: int, stream: int = NOISE_STREAM) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(int(path_index), int(stream)))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class NoisePath:
    grid: PathGrid
    values: np.ndarray
    kind: Literal["brownian", "bridge"] = "brownian"
    bridge_T: Optional[float] = field(default=None)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def brownian_increments(grid: PathGrid, seed: SeedPolicy, path_indices) -> np.ndarray:
    """Gaussian increments, shape ``(len(path_indices), steps)``."""
    idx = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
    out = np.empty((idx.size, grid.steps))
    scale = np.sqrt(grid.dt)
    for row, i in enumerate(idx):
        out[row] = seed.generator(i, NOISE_STREAM).standard_normal(grid.steps)
    out *= scale
    return out


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` increments (same path, coarser grid)."""
    n = increments.shape[-1]
    if n % factor:
        raise ValueError(f"{n} increments not divisible by {factor}")
    return increments.reshape(*increments.shape[:-1], n // factor, factor).sum(axis=-1)


def cumulate(increments: np.ndarray) -> np.ndarray:
    """Path values from increments, with a leading zero."""
    shape = increments.shape[:-1] + (increments.shape[-1] + 1,)
    out = np.zeros(shape)
    np.cumsum(increments, axis=-1, out=out[..., 1:])
    return out


def pin_bridge(brownian: np.ndarray, times: np.ndarray) -> np.ndarray:
    """``B_t - (t/T) B_T`` along the last axis; the endpoint is exactly zero."""
    T = times[-1]
    out = brownian - (times / T) * brownian[..., -1:]
    out[..., -1] = 0.0
    return out


def sample_brownian(grid: PathGrid, seed: SeedPolicy, path_index: int) -> NoisePath:
    values = cumulate(brownian_increments(grid, seed, [path_index])[0])
    return NoisePath(grid, values, "brownian")


def sample_bridge(grid: PathGrid, seed: SeedPolicy, path_index: int) -> NoisePath:
    """Brownian bridge on ``[0, grid.t_end]`` built from the path's Brownian motion."""
    b = sample_brownian(grid, seed, path_index).values
    return NoisePath(grid, pin_bridge(b, grid.times), "bridge", grid.t_end)


def draw_levels(probabilities, uniforms) -> np.ndarray:
    """Map uniforms in [0, 1) to level indices with the given probabilities."""
    p = np.asarray(probabilities, dtype=float)
    cdf = np.cumsum(p)
    levels = np.searchsorted(cdf, uniforms, side="right")
    # rounding can leave cdf[-1] slightly below 1
    last = int(np.flatnonzero(p > 0)[-1])
    return np.minimum(levels, last)


def terminal_uniforms(seed: SeedPolicy, path_indices) -> np.ndarray:
    idx = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
    return np.array([seed.generator(i, ENERGY_STREAM).random() for i in idx])


def sample_terminal_energy(dec, seed: SeedPolicy, path_index: int) -> int:
    """Level index of the terminal energy, drawn with the Lüders probabilities."""
    probs = dec.probabilities if hasattr(dec, "probabilities") else dec
    return int(draw_levels(probs, terminal_uniforms(seed, [path_index]))[0])


def sample_terminal_levels(dec, seed: SeedPolicy, path_indices) -> np.ndarray:
    probs = dec.probabilities if hasattr(dec, "probabilities") else dec
    return draw_levels(probs, terminal_uniforms(seed, path_indices))
