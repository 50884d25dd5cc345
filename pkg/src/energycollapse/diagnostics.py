"""Ensemble-level statistical checks of the reduction dynamics.

Each check returns a :class:`CheckResult`.  Statistical tolerances are
z-score thresholds on standard errors; exact algebraic identities use fixed
absolute tolerances.  With ``z_crit = 4`` a single two-sided comparison
fails spuriously with probability about 6e-5, so a report with a few hundred
per-time comparisons still has a false-failure rate near 1%.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import entr

from . import closedform as cf
from .ensemble import EnsembleRun, observable_series, series_stats, states_at_outputs
from .integrator import ancillary_exact, integrate_standard
from .noise import (
    PathGrid,
    SeedPolicy,
    brownian_increments,
    coarsen_increments,
    cumulate,
    pin_bridge,
    sample_terminal_levels,
)
from .spectrum import LudersDecomposition, Spectrum, initial_moments

Z_CRIT = 4.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    statistic: float
    threshold: float
    details: dict = field(default_factory=dict)
    negative_control: bool = False

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "statistic": _jsonable(self.statistic),
            "threshold": _jsonable(self.threshold),
            "negative_control": self.negative_control,
            "details": _jsonable(self.details),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    return x


def _z_scores(diff_mean, se, exact_tol=1e-12):
    """``diff/se``, with differences at rounding level (``<= exact_tol``) counted as 0.

    Where ``se == 0`` the comparison is exact: z is 0 or infinite.
    """
    diff_mean = np.asarray(diff_mean, dtype=float)
    se = np.asarray(se, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff_mean / np.where(se > 0, se, 1.0), 0.0)
    z = np.where(np.abs(diff_mean) <= exact_tol, 0.0, z)
    degenerate = (se == 0) & (np.abs(diff_mean) > exact_tol)
    return np.where(degenerate, np.copysign(np.inf, diff_mean), z)


# --------------------------------------------------------------------------
# martingale / potential
# --------------------------------------------------------------------------


def martingale_test(series, reference: float, z_crit: float = Z_CRIT, name: str = "martingale") -> CheckResult:
    """Ensemble mean equals ``reference`` at every recorded time."""
    series = np.asarray(series, dtype=float)
    if series.shape[0] < 100:
        raise ValueError("martingale_test needs at least 100 paths")
    st = series_stats(series)
    z = _z_scores(st.mean - reference, st.se)
    zmax = float(np.max(np.abs(z)))
    return CheckResult(name, zmax <= z_crit, zmax, z_crit, {"z": z, "mean": st.mean, "se": st.se})


def _nonincreasing(series, z_crit):
    d = np.diff(np.asarray(series, dtype=float), axis=1)
    st = series_stats(d)
    z = _z_scores(st.mean, st.se)
    return z, float(np.max(z)) if z.size else 0.0


def potential_test(
    V,
    times,
    V0: float,
    sigma: float,
    S=None,
    bound_times: Optional[Sequence[float]] = None,
    z_crit: float = 3.0,
    terminal_tol: Optional[float] = None,
    name: str = "potential",
) -> CheckResult:
    """Variance decays on average and obeys ``E[V_t] <= sqrt(V0/(sigma^2 t))``.

    ``bound_times`` restricts the bound to the recorded times nearest the
    given values (the bound is evaluated at the recorded time itself).  If
    ``S`` is given the entropy series must also be non-increasing.  With
    ``terminal_tol`` the final ensemble mean of ``V`` must not exceed it.
    """
    V = np.asarray(V, dtype=float)
    times = np.asarray(times, dtype=float)
    st = series_stats(V)
    z_mono, zmax = _nonincreasing(V, z_crit)
    ok = zmax <= z_crit
    details = {"monotone_z_max": zmax}

    if bound_times is None:
        sel = np.flatnonzero(times > 0)
    else:
        sel = np.unique([int(np.argmin(np.abs(times - bt))) for bt in bound_times])
        sel = sel[times[sel] > 0]
    bound = np.sqrt(V0 / (sigma**2 * times[sel]))
    excess = st.mean[sel] - (bound + z_crit * st.se[sel])
    bound_ok = bool(np.all(excess <= 0))
    ok &= bound_ok
    details.update(bound_times=times[sel], bound=bound, mean_V=st.mean[sel], se_V=st.se[sel], bound_ok=bound_ok)

    if S is not None:
        _, zs = _nonincreasing(S, z_crit)
        details["entropy_monotone_z_max"] = zs
        ok &= zs <= z_crit
    if terminal_tol is not None:
        details["terminal_mean_V"] = float(st.mean[-1])
        ok &= st.mean[-1] <= terminal_tol
    stat = float(max(zmax, np.max(excess / np.maximum(st.se[sel], 1e-300)) if sel.size else -np.inf))
    return CheckResult(name, bool(ok), stat, z_crit, details)


# --------------------------------------------------------------------------
# terminal statistics
# --------------------------------------------------------------------------


def born_rule_test(counts, pi0, z_crit: float = Z_CRIT, alpha: float = 1e-3, name: str = "born_rule") -> CheckResult:
    """Terminal-level counts against the Lüders probabilities.

    Per-level binomial z-scores within ``z_crit`` and the chi-square statistic
    below its ``1 - alpha`` quantile.  Levels with probability 0 or 1 must be
    matched exactly.
    """
    counts = np.asarray(counts, dtype=float)
    p = np.asarray(pi0, dtype=float)
    n = counts.sum()
    expected = n * p
    sd = np.sqrt(n * np.clip(p * (1 - p), 0.0, None))
    z = _z_scores(counts - expected, sd, exact_tol=0.5)
    live = p > 0
    chi2 = float(np.sum((counts[live] - expected[live]) ** 2 / expected[live]))
    df = int(live.sum()) - 1
    chi2_crit = float(stats.chi2.ppf(1 - alpha, df)) if df > 0 else 0.0
    zmax = float(np.max(np.abs(z)))
    ok = zmax <= z_crit and chi2 <= chi2_crit + 1e-12
    return CheckResult(
        name, bool(ok), zmax, z_crit,
        {"z": z, "frequencies": counts / n, "chi2": chi2, "chi2_crit": chi2_crit, "df": df},
    )


def entropy_identity_test(run: EnsembleRun, quad_tol: float = 0.01, z_crit: float = 3.0,
                          name: str = "entropy_identity") -> CheckResult:
    """``1/2 int_0^t sigma_s^2 E[V_s] ds = S_0 - E[S_t]`` at the grid horizon."""
    _, _, s0, _ = initial_moments(run.dec, run.spectrum)
    per_path = run.fluctuation + run.S[:, -1]
    st = series_stats(per_path[:, None])
    diff = float(st.mean[0] - s0)
    tol = z_crit * float(st.se[0]) + quad_tol
    quad_est = float(abs(np.mean(run.fluctuation) - np.mean(run.fluctuation_coarse)))
    return CheckResult(
        name, abs(diff) <= tol, abs(diff), tol,
        {
            "quadrature": float(np.mean(run.fluctuation)),
            "S0": s0,
            "mean_S_end": float(np.mean(run.S[:, -1])),
            "se": float(st.se[0]),
            "quadrature_refinement_estimate": quad_est,
        },
    )


def luders_observable_variance(dec: LudersDecomposition, observable) -> np.ndarray:
    """``<phi_i|G^2|phi_i> - <phi_i|G|phi_i>^2`` per level (0 for absent levels)."""
    g = np.asarray(observable, dtype=float)
    w = np.abs(dec.states) ** 2
    m1 = w @ g
    m2 = w @ (g * g)
    return np.where(dec.present, m2 - m1 * m1, 0.0)


def observable_variance_test(run: EnsembleRun, observable, terminal_tol: float = 1e-8,
                             z_crit: float = Z_CRIT, name: str = "observable_variance") -> CheckResult:
    """Martingale ``G_t``, terminal Lüders variance, and ``V^G_t >= E_t[V^G_terminal]`` on average."""
    G, VG = observable_series(run, observable)
    g0 = float(G[0, 0])
    mart = martingale_test(G, g0, z_crit, name="G_martingale")
    target = luders_observable_variance(run.dec, observable)[run.terminal_level]
    term_err = float(np.max(np.abs(VG[:, -1] - target)))
    gap = VG - VG[:, -1:]
    st = series_stats(gap)
    z_super = _z_scores(st.mean, st.se)
    super_ok = bool(np.all(z_super >= -z_crit))
    ok = mart.passed and term_err <= terminal_tol and super_ok
    return CheckResult(
        name, bool(ok), term_err, terminal_tol,
        {
            "G_martingale_z_max": mart.statistic,
            "terminal_VG_max_error": term_err,
            "supermartingale_z_min": float(np.min(z_super)),
            "terminal_VG_by_level": luders_observable_variance(run.dec, observable),
        },
    )


# --------------------------------------------------------------------------
# independence of terminal energy and noise
# --------------------------------------------------------------------------


def _mgf_gap(b, h, x, y):
    a = np.exp(x * b)
    c = np.exp(y * h)
    ma, mc = a.mean(), c.mean()
    gap = np.mean(a * c) - ma * mc
    influence = a * c - mc * a - ma * c
    se = influence.std(ddof=1) / np.sqrt(b.size)
    return gap, se


def independence_test(
    noise_samples,
    levels,
    energies,
    times,
    probe_times,
    bridge_T: Optional[float] = None,
    probes=(-1.0, 0.5, 1.0),
    z_crit: float = Z_CRIT,
    var_rtol: float = 0.05,
    name: str = "independence",
    negative_control: bool = False,
) -> CheckResult:
    """Noise recovered from the outputs is independent of the terminal energy.

    ``noise_samples`` is ``(paths, recorded times)``; at each probe time
    checks MGF factorisation on the ``probes x probes`` grid, the Brownian
    (or bridge, when ``bridge_T`` is set) variance, and zero conditional
    means given the terminal level.
    """
    noise_samples = np.asarray(noise_samples, dtype=float)
    levels = np.asarray(levels)
    h = np.asarray(energies, dtype=float)[levels]
    times = np.asarray(times, dtype=float)
    ok = True
    rows = []
    worst_z = 0.0
    for pt in probe_times:
        k = int(np.argmin(np.abs(times - pt)))
        t = times[k]
        b = noise_samples[:, k]
        mgf_z = []
        for x in probes:
            for y in probes:
                gap, se = _mgf_gap(b, h, x, y)
                mgf_z.append(float(_z_scores(gap, se)))
        mgf_z = np.array(mgf_z)
        expected_var = t if bridge_T is None else t * (bridge_T - t) / bridge_T
        var = float(b.var(ddof=1))
        var_err = abs(var - expected_var) / expected_var if expected_var > 0 else abs(var)
        cond_z = []
        for lvl in np.unique(levels):
            sel = b[levels == lvl]
            if sel.size > 1:
                cond_z.append(float(_z_scores(sel.mean(), sel.std(ddof=1) / np.sqrt(sel.size))))
        cond_z = np.array(cond_z)
        row_ok = (np.all(np.abs(mgf_z) <= z_crit) and var_err <= var_rtol
                  and np.all(np.abs(cond_z) <= z_crit))
        ok &= bool(row_ok)
        worst_z = max(worst_z, float(np.max(np.abs(mgf_z))))
        rows.append({"t": t, "mgf_z": mgf_z, "variance": var, "expected_variance": expected_var,
                     "variance_rel_error": var_err, "conditional_mean_z": cond_z, "passed": bool(row_ok)})
    return CheckResult(name, bool(ok), worst_z, z_crit, {"probes": rows}, negative_control)


def reconstructed_noise(run: EnsembleRun, sigma: Optional[float] = None) -> np.ndarray:
    """``xi_t - sigma t E_terminal`` with ``xi`` rebuilt from ``(W, H)``.

    A wrong ``sigma`` gives the negative control.
    """
    s = run.model.sigma if sigma is None else sigma
    return run.xi_rev - s * run.spectrum.energy_array[run.terminal_level][:, None] * run.times


def innovation_test(run: EnsembleRun, z_crit: float = Z_CRIT, rtol: float = 0.05,
                    qv_rtol: Optional[float] = None, name: str = "innovation") -> CheckResult:
    """Reconstructed innovation behaves as a Brownian motion on its horizon.

    Mean of ``W`` at the horizon within ``z_crit`` SE of 0, its variance within
    ``rtol`` of the horizon, and every path's quadratic variation within
    ``qv_rtol`` (default ``rtol``) of the horizon.  The sampling sd of a
    path's quadratic variation is ``sqrt(2/steps)`` relative, so a fixed 5%
    needs roughly ``steps >= 2**15`` to hold on 10^4 paths.
    """
    qv_rtol = rtol if qv_rtol is None else qv_rtol
    horizon = run.innovation_horizon
    w = run.w_end
    n = w.size
    mean_z = float(_z_scores(w.mean(), w.std(ddof=1) / np.sqrt(n)))
    var_err = abs(float(w.var(ddof=1)) - horizon) / horizon
    qv_err = np.abs(run.w_qv - horizon) / horizon
    ok = abs(mean_z) <= z_crit and var_err <= rtol and np.all(qv_err <= qv_rtol)
    return CheckResult(
        name, bool(ok), float(max(var_err, qv_err.max())), rtol,
        {"horizon": horizon, "mean_z": mean_z, "variance": float(w.var(ddof=1)),
         "variance_rel_error": var_err, "qv_max_rel_error": float(qv_err.max()), "qv_rtol": qv_rtol},
    )


def entropy_regression_test(run: EnsembleRun, rtol: float = 0.10, name: str = "entropy_sde") -> CheckResult:
    """Regress entropy increments on ``-1/2 sigma_t^2 V_t dt``; slope should be 1."""
    slope = float(np.sum(run.entropy_sxy) / np.sum(run.entropy_sxx))
    return CheckResult(name, abs(slope - 1.0) <= rtol, slope, rtol, {"slope": slope})


# --------------------------------------------------------------------------
# density matrices
# --------------------------------------------------------------------------


def _vn_entropy(rho):
    ev = np.linalg.eigvalsh(rho)
    ev = np.clip(ev, 0.0, None)
    return entr(ev).sum(axis=-1)


@dataclass
class DensityMatrices:
    times: np.ndarray
    von_neumann: np.ndarray  # (times, d, d) ensemble mean of |psi><psi|
    shannon_mean_entropy: np.ndarray  # ensemble mean of -tr(R ln R)
    von_neumann_entropy: np.ndarray
    shannon_initial: np.ndarray  # R_0


def density_matrices(run: EnsembleRun) -> DensityMatrices:
    psi = states_at_outputs(run)
    rho = np.einsum("pki,pkj->kij", psi, psi.conj()) / run.n_paths
    phi = run.dec.states
    # per-path Shannon state R = sum_i pi_i |phi_i><phi_i|
    R = np.einsum("pki,ia,ib->pkab", run.pi, phi, phi.conj())
    s_R = _vn_entropy(R).mean(axis=0)
    R0 = np.einsum("i,ia,ib->ab", run.dec.probabilities, phi, phi.conj())
    return DensityMatrices(run.times, rho, s_R, _vn_entropy(rho), R0)


def density_matrix_test(run: EnsembleRun, z_crit: float = Z_CRIT, name: str = "density_matrices") -> CheckResult:
    """Unit trace and positivity; entropy of ``rho_t`` rises towards ``S_0``; ``R_0 = rho_infinity``."""
    dm = density_matrices(run)
    _, _, s0, _ = initial_moments(run.dec, run.spectrum)
    tr_err = float(np.max(np.abs(np.trace(dm.von_neumann, axis1=1, axis2=2) - 1)))
    min_ev = float(np.min(np.linalg.eigvalsh(dm.von_neumann)))
    psd_ok = tr_err <= 1e-8 and min_ev >= -1e-8
    start_ok = abs(dm.von_neumann_entropy[0]) <= 1e-8 and abs(dm.shannon_mean_entropy[0] - s0) <= 1e-8
    s_stats = series_stats(run.S)
    shannon_gap = float(abs(dm.shannon_mean_entropy[-1] - s_stats.mean[-1]))
    rho_end_gap = float(np.max(np.abs(dm.von_neumann[-1] - dm.shannon_initial)))
    ok = psd_ok and start_ok and shannon_gap <= 1e-8
    return CheckResult(
        name, bool(ok), rho_end_gap, float("nan"),
        {"trace_error": tr_err, "min_eigenvalue": min_ev,
         "von_neumann_entropy": dm.von_neumann_entropy, "shannon_entropy_mean": dm.shannon_mean_entropy,
         "S0": s0, "rho_end_minus_R0_max": rho_end_gap},
    )


def ancillary_identity_test(spectrum: Spectrum, dec: LudersDecomposition, sigma: float, seed: SeedPolicy,
                            n_probes: int = 100, tol: float = 1e-12, name: str = "ancillary_identity") -> CheckResult:
    """Ancillary solution against the closed form at random ``(xi, t)`` probes.

    Checks the squared norm against ``sum_i pi_i exp(sigma E_i xi - sigma^2 E_i^2 t / 2)``
    (relative) and the normalised state against :func:`closedform.state_vector`.
    Probes are drawn with ``xi`` in [-3, 3] and ``t`` in [0, 3] from the
    reserved path index ``2**63 - 1`` of the seed policy.
    """
    rng = seed.generator(2**63 - 1)
    e = spectrum.energy_array
    xi = rng.uniform(-3, 3, n_probes)
    t = rng.uniform(0, 3, n_probes)
    psi = ancillary_exact(dec.reconstruct(), sigma, xi, t, spectrum)
    norm2 = np.sum(np.abs(psi) ** 2, axis=-1)
    direct = np.exp(cf.log_density_exact(cf.Asymptotic(sigma), e, dec.probabilities, xi, t))
    norm_err = float(np.max(np.abs(norm2 - direct) / direct))
    probs = cf.conditional_probabilities(cf.Asymptotic(sigma), e, dec.probabilities, xi, t)
    ref = cf.state_vector(probs, dec, spectrum, t)
    state_err = float(np.max(np.abs(psi / np.sqrt(norm2)[:, None] - ref)))
    stat = max(norm_err, state_err)
    return CheckResult(name, stat <= tol, stat, tol,
                       {"norm_rel_error": norm_err, "state_max_error": state_err, "n_probes": n_probes})


# --------------------------------------------------------------------------
# identities checked by grid refinement
# --------------------------------------------------------------------------


def density_identity_errors(spectrum: Spectrum, pi0, sigma: float, t_end: float, n_paths: int,
                            seed: SeedPolicy, steps_ladder: Sequence[int]):
    """Relative error of the left-point change-of-measure density at ``t_end``.

    Returns ``(rms, mean)`` per ladder entry.  All levels share one Brownian
    path per sample, generated at the finest resolution.
    """
    model = cf.Asymptotic(sigma)
    e = spectrum.energy_array if isinstance(spectrum, Spectrum) else np.asarray(spectrum, float)
    fine = max(steps_ladder)
    grid = PathGrid(t_end, fine)
    idx = np.arange(n_paths)
    dB = brownian_increments(grid, seed, idx)
    levels = sample_terminal_levels(pi0, seed, idx)
    rms, mean = [], []
    for steps in steps_ladder:
        g = PathGrid(t_end, steps)
        t = g.times
        B = cumulate(coarsen_increments(dB, fine // steps))
        xi = sigma * e[levels][:, None] * t + B
        H, _ = cf.energy_and_variance(cf.conditional_probabilities(model, e, pi0, xi, t), e)
        disc = cf.log_density_discrete(model, xi, H, t)[:, -1]
        exact = cf.log_density_exact(model, e, pi0, xi[:, -1], t[-1])
        rel = np.expm1(disc - exact)
        rms.append(float(np.sqrt(np.mean(rel**2))))
        mean.append(float(np.mean(rel)))
    return np.array(rms), np.array(mean)


def strong_error_study(spectrum: Spectrum, dec: LudersDecomposition, model: cf.ModelKind, t_end: float,
                       n_paths: int, seed: SeedPolicy, ref_steps: int, steps_ladder: Sequence[int]):
    """Coupled-path comparison of the Euler scheme with the closed form.

    Samples ``(H, B)``, builds the closed-form path on a ``ref_steps`` grid,
    extracts the innovation increments and drives the Euler scheme with
    their block sums on each coarser grid.  Returns RMS terminal-state
    errors per ladder entry.

    For the finite-time model ``t_end`` must equal ``T``; since the Euler
    scheme stops one step short of ``T``, all ladder entries are compared at
    ``T (1 - 1/min(steps_ladder))``.
    """
    e = spectrum.energy_array
    grid = PathGrid(t_end, ref_steps)
    t = grid.times
    idx = np.arange(n_paths)
    levels = sample_terminal_levels(dec, seed, idx)
    B = cumulate(brownian_increments(grid, seed, idx))
    stop = ref_steps
    if isinstance(model, cf.FiniteTime):
        if not np.isclose(t_end, model.T, rtol=1e-12, atol=0):
            raise ValueError("finite-time study must run to t_end = T")
        B = pin_bridge(B, t)
        stop = ref_steps - ref_steps // min(steps_ladder)
    xi = model.sigma * e[levels][:, None] * t + B
    probs = cf.conditional_probabilities(model, e, dec.probabilities, xi, t)
    H, _ = cf.energy_and_variance(probs, e)
    W = cf.innovation_path(model, xi, H, t)
    dW = np.diff(W, axis=1)[:, :stop]
    psi_ref = cf.state_vector(probs[:, stop], dec, spectrum, t[stop])
    psi0 = dec.reconstruct()
    errors = []
    for steps in steps_ladder:
        if ref_steps % steps:
            raise ValueError("ladder entries must divide ref_steps")
        factor = ref_steps // steps
        coarse_t = t[: stop + 1 : factor]
        psi = integrate_standard(psi0, model, coarsen_increments(dW, factor), coarse_t, spectrum)
        err = np.sqrt(np.sum(np.abs(psi - psi_ref) ** 2, axis=1))
        errors.append(float(np.sqrt(np.mean(err**2))))
    return np.array(errors)


def empirical_orders(dts, errors) -> np.ndarray:
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return np.log(errors[:-1] / errors[1:]) / np.log(dts[:-1] / dts[1:])


def clock_map(t, T):
    """Time change ``tau = t T / (T - t)`` (infinite at ``t = T``)."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(t < T, t * T / np.where(t < T, T - t, 1.0), np.inf)


def inverse_clock_map(tau, T):
    tau = np.asarray(tau, dtype=float)
    return np.where(np.isinf(tau), T, tau * T / (tau + T))


def timechange_discrepancies(spectrum: Spectrum, pi0, sigma: float, T: float, n_paths: int,
                             seed: SeedPolicy, steps_ladder: Sequence[int]) -> np.ndarray:
    """Max ``|H~_tau(t) - H_t|`` over paths and interior grid times, per ladder entry.

    One Brownian path per sample at the finest resolution drives both sides.
    Finite-time side: bridge ``(T - t) sum_{s<t} dB_s/(T - s)`` and
    ``xi = sigma t H + bridge``.  Asymptotic side: the time-changed Brownian
    motion on the image grid ``tau(t_k)``, whose increment over
    ``[t_k, t_k+1]`` is ``dB_k sqrt(d tau_k / dt)``, and
    ``eta = sigma H tau + B~_tau``.
    """
    e = spectrum.energy_array if isinstance(spectrum, Spectrum) else np.asarray(spectrum, float)
    fine = max(steps_ladder)
    idx = np.arange(n_paths)
    dB_fine = brownian_increments(PathGrid(T, fine), seed, idx)
    levels = sample_terminal_levels(pi0, seed, idx)
    h = e[levels][:, None]
    finite, asym = cf.FiniteTime(sigma, T), cf.Asymptotic(sigma)
    out = []
    for steps in steps_ladder:
        g = PathGrid(T, steps)
        t = g.times[:-1]  # t < T
        dB = coarsen_increments(dB_fine, fine // steps)[:, :-1]
        gap = T - t
        bridge = gap * cumulate(dB / gap[:-1])
        xi = sigma * t * h + bridge
        H_fin, _ = cf.energy_and_variance(cf.conditional_probabilities(finite, e, pi0, xi, t), e)
        tau = clock_map(t, T)
        dtau = np.diff(tau)
        b_tilde = cumulate(dB * np.sqrt(dtau / g.dt))
        eta = sigma * tau * h + b_tilde
        H_asy, _ = cf.energy_and_variance(cf.conditional_probabilities(asym, e, pi0, eta, tau), e)
        out.append(float(np.max(np.abs(H_asy - H_fin))))
    return np.array(out)


def timechange_equivalence_test(spectrum, pi0, sigma, T, n_paths, seed, steps_ladder=(1024, 2048, 4096),
                                tol: float = 1e-2, name: str = "timechange") -> CheckResult:
    d = timechange_discrepancies(spectrum, pi0, sigma, T, n_paths, seed, steps_ladder)
    monotone = bool(np.all(np.diff(d) < 0))
    ok = monotone and d[-1] <= tol
    return CheckResult(name, ok, float(d[-1]), tol,
                       {"steps": list(steps_ladder), "max_discrepancy": d, "monotone": monotone,
                        "ratios": d[:-1] / d[1:]})
