"""Vectorised Monte Carlo ensembles of closed-form trajectories.

Paths are processed in fixed-size chunks.  Each chunk regenerates its own
paths from the seed policy, so the result does not depend on how many worker
threads run the chunks or in which order they finish.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import closedform as cf
from .integrator import observable_expectations
from .noise import PathGrid, SeedPolicy, brownian_increments, cumulate, pin_bridge, sample_terminal_levels
from .spectrum import LudersDecomposition, Spectrum

# float64 entries per chunk of the (paths, grid, levels) posterior array
_CHUNK_BUDGET = 1 << 21


def output_indices(grid: PathGrid, output_times=None, max_points: int = 64, extra_times=()) -> np.ndarray:
    """Grid indices at which series are recorded (always includes both ends)."""
    if output_times is not None:
        times = np.asarray(list(output_times), dtype=float)
    else:
        n = min(grid.steps, max_points)
        times = np.linspace(0.0, grid.t_end, n + 1)
    times = np.concatenate([times, np.asarray(list(extra_times), dtype=float), [0.0, grid.t_end]])
    if np.any(times < 0) or np.any(times > grid.t_end * (1 + 1e-12)):
        raise ValueError("output times must lie within the grid")
    idx = np.rint(times / grid.dt).astype(np.int64)
    return np.unique(np.clip(idx, 0, grid.steps))


@dataclass
class EnsembleRun:
    """Per-path series recorded at ``out_idx`` plus per-path scalar summaries."""

    model: cf.ModelKind
    spectrum: Spectrum
    dec: LudersDecomposition
    grid: PathGrid
    out_idx: np.ndarray
    sampled_level: np.ndarray
    terminal_level: np.ndarray
    xi: np.ndarray
    pi: np.ndarray
    H: np.ndarray
    V: np.ndarray
    S: np.ndarray
    W: np.ndarray
    B_rev: np.ndarray  # noise recovered by the reverse construction from (W, H)
    xi_rev: np.ndarray
    w_qv: np.ndarray  # quadratic variation of W over the innovation horizon
    w_end: np.ndarray  # W at the end of the innovation horizon
    fluctuation: np.ndarray  # left-point 1/2 int sigma_t^2 V_t dt over the grid
    fluctuation_coarse: np.ndarray
    entropy_sxy: np.ndarray  # regression sums for dS against -1/2 sigma_t^2 V dt
    entropy_sxx: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times[self.out_idx]

    @property
    def n_paths(self) -> int:
        return self.sampled_level.size

    @property
    def innovation_horizon(self) -> float:
        if isinstance(self.model, cf.FiniteTime):
            return self.grid.times[-2]
        return self.grid.t_end


def _noise(model, grid: PathGrid, seed: SeedPolicy, idx) -> np.ndarray:
    b = cumulate(brownian_increments(grid, seed, idx))
    if isinstance(model, cf.FiniteTime):
        return pin_bridge(b, grid.times)
    return b


def _run_chunk(model, spectrum: Spectrum, dec, grid: PathGrid, seed: SeedPolicy, idx, out_idx):
    e = spectrum.energy_array
    times = grid.times
    pi0 = dec.probabilities
    levels = sample_terminal_levels(dec, seed, idx)
    xi = model.sigma * e[levels][:, None] * times + _noise(model, grid, seed, idx)
    probs = cf.conditional_probabilities(model, e, pi0, xi, times)
    H, V = cf.energy_and_variance(probs, e)
    S = cf.shannon_entropy(probs)
    W = cf.innovation_path(model, xi, H, times)
    xi_rev = cf.reverse_information(model, W, H, times)
    term = cf.terminal_level(probs[:, -1])

    dt = np.diff(times)
    sig2 = model.sigma_t(times[:-1]) ** 2
    x = -0.5 * sig2 * V[:, :-1] * dt
    dS = np.diff(S, axis=1)
    dW = np.diff(W, axis=1)
    if isinstance(model, cf.FiniteTime):
        dW = dW[:, :-1]
        w_end = W[:, -2]
    else:
        w_end = W[:, -1]

    rec = {
        "sampled_level": levels,
        "terminal_level": term,
        "xi": xi[:, out_idx],
        "pi": probs[:, out_idx, :],
        "H": H[:, out_idx],
        "V": V[:, out_idx],
        "S": S[:, out_idx],
        "W": W[:, out_idx],
        "xi_rev": xi_rev[:, out_idx],
        "B_rev": xi_rev[:, out_idx] - model.sigma * e[term][:, None] * times[out_idx],
        "w_qv": np.sum(dW * dW, axis=1),
        "w_end": w_end,
        "fluctuation": -np.sum(x, axis=1),
        # same quadrature on every other grid point, for a refinement error estimate
        "fluctuation_coarse": -2.0 * np.sum(x[:, ::2], axis=1) if grid.steps % 2 == 0 else np.full(len(idx), np.nan),
        "entropy_sxy": np.sum(x * dS, axis=1),
        "entropy_sxx": np.sum(x * x, axis=1),
    }
    return rec


def simulate_ensemble(
    model: cf.ModelKind,
    spectrum: Spectrum,
    dec: LudersDecomposition,
    grid: PathGrid,
    n_paths: int,
    seed: SeedPolicy,
    out_idx: Optional[np.ndarray] = None,
    threads: int = 1,
    first_path: int = 0,
) -> EnsembleRun:
    """Closed-form ensemble of ``n_paths`` paths on ``grid``.

    The finite-time model requires ``grid.t_end == T``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if isinstance(model, cf.FiniteTime) and not np.isclose(grid.t_end, model.T, rtol=1e-12, atol=0):
        raise ValueError("finite-time grid must end at T")
    if out_idx is None:
        out_idx = output_indices(grid)
    out_idx = np.asarray(out_idx, dtype=np.int64)
    chunk = max(1, _CHUNK_BUDGET // ((grid.steps + 1) * max(spectrum.n_levels, 2)))
    starts = list(range(0, n_paths, chunk))
    jobs = [np.arange(first_path + s, first_path + min(s + chunk, n_paths)) for s in starts]

    def work(idx):
        return _run_chunk(model, spectrum, dec, grid, seed, idx, out_idx)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]
    merged = {k: np.concatenate([p[k] for p in parts], axis=0) for k in parts[0]}
    return EnsembleRun(model=model, spectrum=spectrum, dec=dec, grid=grid, out_idx=out_idx, **merged)


@dataclass
class SeriesStats:
    mean: np.ndarray
    var: np.ndarray
    se: np.ndarray

    def to_dict(self):
        return {"mean": self.mean.tolist(), "var": self.var.tolist(), "se": self.se.tolist()}


def series_stats(values: np.ndarray) -> SeriesStats:
    """Mean, sample variance and standard error along the path axis (axis 0)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = values.mean(axis=0)
    var = values.var(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    return SeriesStats(mean, var, np.sqrt(var / n))


@dataclass
class EnsembleSummary:
    times: np.ndarray
    series: dict
    terminal_counts: np.ndarray
    n_paths: int

    def to_dict(self):
        return {
            "n_paths": self.n_paths,
            "times": self.times.tolist(),
            "series": {k: v.to_dict() for k, v in self.series.items()},
            "terminal_counts": self.terminal_counts.tolist(),
            "terminal_frequencies": (self.terminal_counts / self.n_paths).tolist(),
        }


def summarize(run: EnsembleRun, observable=None) -> EnsembleSummary:
    series = {"H": series_stats(run.H), "V": series_stats(run.V), "S": series_stats(run.S)}
    for i in range(run.spectrum.n_levels):
        series[f"pi_{i}"] = series_stats(run.pi[:, :, i])
    if observable is not None:
        G, VG = observable_series(run, observable)
        series["G"] = series_stats(G)
        series["VG"] = series_stats(VG)
    counts = np.bincount(run.terminal_level, minlength=run.spectrum.n_levels)
    return EnsembleSummary(run.times, series, counts, run.n_paths)


def states_at_outputs(run: EnsembleRun) -> np.ndarray:
    """State vectors ``(paths, outputs, dim)`` rebuilt from the recorded posteriors."""
    return cf.state_vector(run.pi, run.dec, run.spectrum, run.times)


def observable_series(run: EnsembleRun, observable):
    """``G_t`` and ``V^G_t`` for a diagonal observable along every recorded path."""
    m = observable_expectations(states_at_outputs(run), observable, run.spectrum)
    return m.G, m.VG
