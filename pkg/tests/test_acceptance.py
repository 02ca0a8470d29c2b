"""Acceptance gate: twelve end-to-end criteria, one [PASS]/[FAIL] line each.

Every test pins its tolerances and its wall-clock budget, computes the
headline numbers from scratch under fixed seeds, prints a single verdict
line (visible even under captured output), and then asserts.  The criteria
cover: exact linear-process statistics, conservation of the quadratic term,
the envelope domination of the nonlinearity on trapped fields, the residual
tube beyond the dissipation cutoff, the energy-ball exit bound, terminal
coincidence of the time-reflected auxiliary process, the summability
dichotomy of the drift-to-noise mode sums, likelihood-ratio normalization
with the stop-level layering of the entropy estimator, the mode-indexed
weak-convergence trend for bounded functionals, marginal gaussianization in
the wavenumber, long-run agreement from distinct initial conditions, and
the change-of-measure entropy inequality on a closed-form one-dimensional
toy.
"""

import math
import time

import numpy as np
import pytest

from ouflow.dynamics import (
    NoiseStream,
    SimParams,
    nonlinearity,
    simulate_auxiliary,
    simulate_coupled,
    simulate_ou,
    stationary_field,
)
from ouflow.estimates import (
    TrapParams,
    check_envelope_domination,
    check_residual_bound,
    energy_ball_exit_bound,
    envelope_constant,
    majorant_band_bounds,
    majorant_band_split,
    novikov_partial_sums,
    sample_field_in_traps,
)
from ouflow.forcing import (
    ForcingSpectrum,
    NoiseIncrementSet,
    energy_input_rate,
    sigma_grid,
    trajectory_seed,
)
from ouflow.girsanov import (
    ShiftedOuToy,
    entropy_from_samples,
    entropy_inequality_check,
    entropy_majorant,
    entropy_sample,
    log_rn_derivative,
    ou_toy_entropy,
    ou_toy_samples,
    stopping_time,
)
from ouflow.lattice import ModeField, ksq_grid, norm_l2
from ouflow.stats import (
    collect_long_run,
    default_observables,
    ks_distance_to_standard_gaussian,
    rescale,
    stationary_diagnostic,
    stationary_weak_convergence_test,
    sup_norm_clamp,
    terminal_clamp,
    weak_convergence_test,
)


PROBE_THRESHOLD = 0.3  # sits inside the sup-statistic distribution (criterion 8)


def _verdict(capsys, number: int, ok: bool, detail: str, elapsed: float, budget: float):
    ok = bool(ok) and elapsed <= budget
    tag = "PASS" if ok else "FAIL"
    line = f"[{tag}] criterion {number}: {detail} [{elapsed:.0f}s/{budget:.0f}s]"
    with capsys.disabled():
        print(line)
    assert ok, line


# --- 1: exact stationary statistics of the linear process -----------------


def test_01_linear_stationary_variance(capsys):
    # E|z_k|^2 = sigma_k^2 / (2 nu |k|^alpha) within 3 SE for every mode at
    # N = 8, nu = 1, alpha in {2, 3, 6}; the unit-rescaled modes then have
    # empirical variance 1 within the same 3 SE (the scale factor is exact,
    # so the z-scores transfer verbatim).
    t0 = time.perf_counter()
    m_paths = 4000
    worst = 0.0
    checks = 0
    for alpha in (2.0, 3.0, 6.0):
        p = SimParams(
            nu=1.0,
            alpha=alpha,
            dt=0.01,
            horizon=0.1,
            spectrum=ForcingSpectrum(1.0, 2.0, 8),
        )
        rng = np.random.default_rng([6, int(alpha * 10)])
        seeds = rng.integers(2**63, size=m_paths)
        term = np.empty((m_paths, 17, 17))
        for i in range(m_paths):
            rec = simulate_ou(stationary_field(p, rng), p, seed=int(seeds[i]))
            term[i] = np.abs(rec.states[-1].amp) ** 2
        q = ksq_grid(8)
        nz = q > 0
        sig = sigma_grid(p.spectrum)
        target = np.zeros_like(q)
        target[nz] = sig[nz] ** 2 / (2.0 * q[nz] ** (alpha / 2.0))
        mean = term.mean(axis=0)
        se = term.std(axis=0, ddof=1) / math.sqrt(m_paths)
        zs = np.abs(mean - target)[nz] / se[nz]
        # unit rescale: variance estimate mean/target against 1 with
        # standard error se/target -- identical z-scores by construction
        unit_var = mean[nz] / target[nz]
        unit_z = np.abs(unit_var - 1.0) / (se[nz] / target[nz])
        assert np.allclose(unit_z, zs, rtol=1e-10)
        worst = max(worst, float(zs.max()))
        checks += int(nz.sum())
    ok = worst < 3.0 and checks == 3 * 288
    _verdict(
        capsys,
        1,
        ok,
        f"stationary |z_k|^2 and unit-rescaled variance match closed form, "
        f"worst |z-score| {worst:.3f} (tolerance 3) over {checks} mode checks "
        f"({m_paths} paths x alpha in 2,3,6)",
        time.perf_counter() - t0,
        120.0,
    )


# --- 2: conservation of the quadratic term ---------------------------------


def test_02_quadratic_term_conservation(capsys):
    # sum Re(F_k conj(w_k)) and sum Re(F_k conj(w_k))/|k|^2 vanish to 1e-12
    # (relative to the absolute-term mass) on 10^3 random conjugate-symmetric
    # fields per truncation N in {4, 8, 12}.
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for n in (4, 8, 12):
        m = 2 * n + 1
        q = np.maximum(ksq_grid(n), 1.0)
        for _ in range(1000):
            raw = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            field = ModeField(n, raw / q)
            prod = nonlinearity(field).amp * np.conj(field.amp)
            scale = max(1.0, float(np.sum(np.abs(prod))))
            flux = abs(float(np.sum(prod.real))) / scale
            energy_flux = abs(float(np.sum(prod.real / q))) / scale
            worst = max(worst, flux, energy_flux)
    ok = worst <= 1e-12
    _verdict(
        capsys,
        2,
        ok,
        f"quadratic-term enstrophy/energy flux vanish on 3000 random fields, "
        f"worst relative residual {worst:.2e} (tolerance 1e-12)",
        time.perf_counter() - t0,
        60.0,
    )


# --- 3: envelope domination on trapped fields ------------------------------


def test_03_envelope_domination(capsys):
    # |F(w)_k| <= C(gamma) sqrt(eta E) |k| sqrt(log|k|) R / |k|^gamma for all
    # |k| >= 2 on 200 random fields inside both trap sets at N = 12, with the
    # numerically certified C(2) at probe radius 64; additionally each of the
    # three convolution bands obeys its own closed-form bound.
    t0 = time.perf_counter()
    assert envelope_constant(2.0, 64) == pytest.approx(72.46564238, rel=1e-8)
    tp = TrapParams.derive(
        gamma=2.0, amp_radius=1.2, energy=3.0, eta=2.0, alpha_prime=2.0, nu=1.0, probe=64
    )
    rng = np.random.default_rng(15)
    band_modes = ((2, 0), (3, 1), (-4, 2), (8, 8), (12, 5), (0, 7))
    worst = 0.0
    violations = 0
    band_worst = 0.0
    for _ in range(200):
        field = sample_field_in_traps(12, tp.gamma, tp.amp_radius, tp.energy, tp.eta, rng)
        rep = check_envelope_domination(field, tp)
        if not rep.ok:
            violations += 1
        worst = max(worst, rep.worst_ratio)
        for k in band_modes:
            split = majorant_band_split(field, k)
            b1, b2, b3 = majorant_band_bounds(k, tp.gamma, tp.amp_radius, tp.energy, tp.eta)
            band_worst = max(
                band_worst, split.inner / b1, split.crossover / b2, split.outer / b3
            )
    ok = violations == 0 and 0.0 < worst < 1.0 and band_worst <= 1.0 + 1e-12
    _verdict(
        capsys,
        3,
        ok,
        f"envelope domination holds on 200 trapped fields (0 violations, worst "
        f"ratio {worst:.4f}); per-band bounds hold on {len(band_modes)} probe "
        f"modes (worst {band_worst:.4f})",
        time.perf_counter() - t0,
        60.0,
    )


# --- 4: residual tube beyond the dissipation cutoff -------------------------


def test_04_residual_tube(capsys):
    # On 100 coupled trajectories (N = 12, alpha = 6, alpha' = 2, dt = 1e-3,
    # t = 1) whose trap hypotheses hold, sup_s |rho_k(s)| stays below
    # 2 R / |k|^(gamma + alpha - alpha') for every |k| > K0; paths that leave
    # a trap are reported and excluded, never counted as passes.
    t0 = time.perf_counter()
    p = SimParams(
        nu=2.0, alpha=6.0, dt=1e-3, horizon=1.0, spectrum=ForcingSpectrum(0.008, 2.0, 12)
    )
    paths = [
        simulate_coupled(ModeField(12), p, seed=trajectory_seed(11, i), keep_noise=False)
        for i in range(100)
    ]
    from ouflow.lattice import norm_sup_gamma

    zsup = np.array([max(norm_sup_gamma(s, 2.0) for s in cp.z.states) for cp in paths])
    esup = np.array([max(norm_l2(s) ** 2 for s in cp.omega.states) for cp in paths])
    eta = 1.25
    tp = TrapParams.derive(
        gamma=2.0,
        amp_radius=float(np.percentile(zsup, 90)),
        energy=float(np.percentile(esup, 90)) / eta,
        eta=eta,
        alpha_prime=2.0,
        nu=2.0,
    )
    reports = [check_residual_bound(cp, tp, p) for cp in paths]
    met = [r for r in reports if r.hypotheses_met]
    excluded = [r for r in reports if not r.hypotheses_met]
    violations = sum(1 for r in met if not r.ok)
    ok = (
        80 <= len(met) <= 95
        and violations == 0
        and all(r.reason for r in excluded)
        and met[0].modes_checked > 500
        and tp.cutoff >= 2
    )
    _verdict(
        capsys,
        4,
        ok,
        f"residual tube holds beyond cutoff K0={tp.cutoff} on {len(met)}/100 "
        f"hypothesis-passing paths (0 violations, {met[0].modes_checked} modes "
        f"checked, min margin {min(r.margin for r in met):.2e}); "
        f"{len(excluded)} paths reported for leaving a trap, not counted",
        time.perf_counter() - t0,
        600.0,
    )


# --- 5: energy-ball exit bound ----------------------------------------------


def test_05_energy_ball_exit_bound(capsys):
    # Exit frequency over 10^3 trajectories stays below
    # exp{-(nu/sigma_max^2)[(eta-1)E - E1 t]} + 3 binomial SE for two
    # (eta, t) settings whose bound is nontrivial (<= 0.5).
    t0 = time.perf_counter()
    p = SimParams(
        nu=1.0, alpha=3.0, dt=2e-3, horizon=0.5, spectrum=ForcingSpectrum(1.0, 2.0, 8)
    )
    energy = 6.0
    q = ksq_grid(8)
    amp = np.zeros_like(q, dtype=complex)
    amp[q > 0] = 1.0 / q[q > 0]
    start = ModeField(8, amp)
    start = ModeField(8, start.amp * (math.sqrt(energy) / norm_l2(start)))
    assert norm_l2(start) ** 2 == pytest.approx(energy, rel=1e-9)

    n_paths = 1000
    settings = ((2.0, 0.5), (1.25, 0.1))
    exits = {s: 0 for s in settings}
    for i in range(n_paths):
        cp = simulate_coupled(start, p, seed=trajectory_seed(23, i), keep_noise=False)
        ens = np.array([norm_l2(s) ** 2 for s in cp.omega.states])
        tms = cp.omega.times
        for eta, t in settings:
            if np.any(ens[tms <= t + 1e-12] > eta * energy):
                exits[(eta, t)] += 1
    parts = []
    ok = True
    for eta, t in settings:
        bound = energy_ball_exit_bound(energy, eta, t, p)
        freq = exits[(eta, t)] / n_paths
        se = math.sqrt(max(freq * (1.0 - freq), 1e-12) / n_paths)
        ok = ok and bound <= 0.5 and freq <= bound + 3.0 * se
        parts.append(f"(eta={eta}, t={t}): {exits[(eta, t)]}/{n_paths} vs bound {bound:.4f}")
    ok = ok and exits[(1.25, 0.1)] >= 1  # the tighter setting genuinely exits
    _verdict(
        capsys,
        5,
        ok,
        "exit frequency below the closed-form bound; " + "; ".join(parts),
        time.perf_counter() - t0,
        600.0,
    )


# --- 6: terminal coincidence of the time-reflected auxiliary process --------


def test_06_auxiliary_terminal_coincidence(capsys):
    # ||aux(t) - w(t)|| / ||w(t)|| <= 10 dt at dt = 1e-3, shrinks
    # proportionally to dt over a 3-point refinement on matched noise, and
    # the midpoint gap stays O(1) (it is the coupling residual, so it is
    # resolution-independent instead of shrinking).
    t0 = time.perf_counter()

    def coarsen(fine, m):
        out = []
        for i in range(0, len(fine), m):
            chunk = fine[i : i + m]
            amp = sum(c.field.amp for c in chunk)
            out.append(
                NoiseIncrementSet(dt=chunk[0].dt * m, field=ModeField(chunk[0].field.n, amp))
            )
        return out

    spec = ForcingSpectrum(1.0, 2.0, 8)
    grids = ((4e-3, 4), (2e-3, 2), (1e-3, 1))
    ratios = []
    ok = True
    finest_terms = []
    for seed_i in range(5):
        fine = NoiseStream(8, trajectory_seed(31, seed_i)).draw(1e-3, 1000)
        rels, mids = [], []
        for dt, m in grids:
            p = SimParams(nu=1.0, alpha=3.0, dt=dt, horizon=1.0, spectrum=spec)
            cp = simulate_coupled(ModeField(8), p, noise=coarsen(fine, m), keep_nonlin=True)
            aux = simulate_auxiliary(cp.omega, p, cp.nonlin)
            gap = norm_l2(ModeField(8, aux.states[-1].amp - cp.omega.states[-1].amp))
            rels.append(gap / norm_l2(cp.omega.states[-1]))
            mid = len(cp.omega.times) // 2
            mid_gap = norm_l2(ModeField(8, aux.states[mid].amp - cp.omega.states[mid].amp))
            mids.append(mid_gap / norm_l2(cp.omega.states[mid]))
        ok = ok and rels[-1] <= 10.0 * 1e-3  # pinned terminal tolerance
        ok = ok and rels[0] > rels[1] > rels[2]  # strict shrink under refinement
        ratios.extend([rels[0] / rels[1], rels[1] / rels[2]])
        # midpoint gap is resolution-independent and dominates the terminal gap
        ok = ok and max(mids) / min(mids) < 1.10 and min(mids) > 20.0 * rels[-1]
        finest_terms.append(rels[-1])
    mean_ratio = float(np.mean(ratios))
    ok = ok and 1.4 <= mean_ratio <= 3.2  # first-order shrink per halving
    _verdict(
        capsys,
        6,
        ok,
        f"auxiliary terminal gap <= 10*dt on 5 matched-noise seeds (worst "
        f"{max(finest_terms):.2e} at dt=1e-3), mean halving ratio "
        f"{mean_ratio:.2f} in [1.4, 3.2], midpoint gap resolution-independent",
        time.perf_counter() - t0,
        300.0,
    )


# --- 7: summability dichotomy of the drift-to-noise mode sums ----------------


def test_07_summability_dichotomy(capsys):
    # Truncation sweep N in {6, 9, 12, 16} with matched per-mode noise: the
    # simulated quadratic mode sum stabilizes for alpha = 6 (< 5% relative
    # increment on the last refinement) and keeps growing for alpha = 3;
    # the deterministic reflected-drift mode sum converges for alpha = 2.5
    # with tube decay gamma = decay + 1.3.
    t0 = time.perf_counter()
    from ouflow.girsanov import novikov_integral

    sums = {}
    for alpha in (6.0, 3.0):
        per_n = []
        for n in (6, 9, 12, 16):
            p = SimParams(
                nu=1.0, alpha=alpha, dt=1e-3, horizon=0.1,
                spectrum=ForcingSpectrum(1.0, 2.0, n),
            )
            vals = []
            for i in range(6):
                cp = simulate_coupled(
                    ModeField(n), p, seed=trajectory_seed(77, i), keep_nonlin=True
                )
                vals.append(
                    novikov_integral(cp.omega, "sns_vs_ou", p, nonlin_cache=cp.nonlin)
                )
            per_n.append(float(np.mean(vals)))
        sums[alpha] = per_n
    rel = {
        a: [(s[i + 1] - s[i]) / s[i + 1] for i in range(3)] for a, s in sums.items()
    }
    stabilizes = rel[6.0][-1] < 0.05
    grows = rel[3.0][-1] > 0.15 and sums[3.0][-1] / sums[3.0][0] > 2.0

    det = novikov_partial_sums(2.5, 2.0, "auxiliary", 3.3, radius=16)
    tail = {r: s for r, s in zip(det.radii, det.partial_sums)}
    incs = [tail[9] - tail[6], tail[12] - tail[9], tail[16] - tail[12]]
    aux_ok = (
        det.classification == "converging"
        and det.trend_consistent
        and det.exponent == pytest.approx(3.1)
        and incs[0] > incs[1] > incs[2] > 0.0
    )
    ok = stabilizes and grows and aux_ok
    _verdict(
        capsys,
        7,
        ok,
        f"mode-sum dichotomy: alpha=6 stabilizes (last rel increment "
        f"{rel[6.0][-1]:.3f} < 0.05), alpha=3 grows (last rel "
        f"{rel[3.0][-1]:.3f}, ratio {sums[3.0][-1]/sums[3.0][0]:.2f}); "
        f"reflected-drift sum converges at alpha=2.5, gamma=3.3 "
        f"(exponent {det.exponent:.2f}, shrinking increments)",
        time.perf_counter() - t0,
        600.0,
    )


# --- 8: likelihood-ratio normalization and stop-level layering ---------------


def test_08_normalization_and_entropy_layering(capsys):
    # E[exp(log_rn)] = 1 within 3 SE over 10^4 base-law paths for the
    # reflected-drift density at alpha = 3, N = 8; the relative-entropy
    # estimate is stable across stop thresholds {10, 20, 40} (mutual 2 SE);
    # a low probe threshold shows the stopping machinery engaging.
    t0 = time.perf_counter()
    p = SimParams(
        nu=1.0, alpha=3.0, dt=1e-3, horizon=0.1, spectrum=ForcingSpectrum(0.2, 2.0, 8)
    )
    gamma = 3.25
    maj = entropy_majorant(p, "auxiliary_vs_ou", gamma)
    n_paths = 10_000
    probe_thr = PROBE_THRESHOLD
    vals = np.empty(n_paths)
    per_thr = {10.0: [], 20.0: [], 40.0: [], probe_thr: []}
    probe_triggers = 0
    for i in range(n_paths):
        cp = simulate_coupled(
            ModeField(8), p, seed=trajectory_seed(4, i), keep_nonlin=True
        )
        rec = log_rn_derivative(cp.omega, "auxiliary_vs_ou", p, nonlin_cache=cp.nonlin)
        vals[i] = math.exp(rec.log_rn)
        for thr in per_thr:
            per_thr[thr].append(entropy_sample(cp, "auxiliary_vs_ou", thr, gamma))
        if not stopping_time(cp, probe_thr, gamma).beyond_horizon:
            probe_triggers += 1
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_paths))
    norm_ok = abs(mean - 1.0) <= 3.0 * se

    ests = {thr: entropy_from_samples(samp, majorant=maj) for thr, samp in per_thr.items()}
    pinned = [ests[t] for t in (10.0, 20.0, 40.0)]
    mutual = all(
        abs(a.mean - b.mean) <= 2.0 * math.hypot(a.standard_error, b.standard_error)
        for i, a in enumerate(pinned)
        for b in pinned[i + 1 :]
    )
    probe = ests[probe_thr]
    # the probe threshold sits inside the sup-statistic's distribution, so a
    # strict subset of paths is stopped early and the estimate drops
    engaged = 0 < probe_triggers < n_paths and probe.mean < pinned[0].mean
    ok = norm_ok and mutual and engaged
    _verdict(
        capsys,
        8,
        ok,
        f"E[exp(log_rn)] = {mean:.4f} +- {se:.4f} (|z| = {abs(mean-1)/se:.2f}, "
        f"tolerance 3) on {n_paths} paths; entropy stable across stop thresholds "
        f"10/20/40 (mutual 2 SE, means {[round(e.mean, 6) for e in pinned]}); "
        f"probe threshold {probe_thr} stops {probe_triggers}/{n_paths} paths "
        f"early (mean {probe.mean:.2e})",
        time.perf_counter() - t0,
        900.0,
    )


# --- 9: mode-indexed weak-convergence trend ----------------------------------


def test_09_functional_gap_trend(capsys):
    # E|G(w'_k) - G(z'_k)| decreases strictly in |k| over {2, 4, 8}
    # (isotonic test at 3 SE) for the clamped sup-norm functional on 500
    # coupled paths at N = 12, alpha = 6; the stationary-start variant with
    # the terminal-value clamp shows the same trend.
    t0 = time.perf_counter()
    p = SimParams(
        nu=0.05, alpha=6.0, dt=2e-3, horizon=0.5, spectrum=ForcingSpectrum(1.0, 2.0, 12)
    )
    modes = ((2, 0), (4, 0), (8, 0))
    n_paths = 500

    def zero_start_paths():
        for i in range(n_paths):
            yield simulate_coupled(
                ModeField(12), p, seed=trajectory_seed(51, i), keep_noise=False
            )

    table = weak_convergence_test(zero_start_paths(), modes, sup_norm_clamp(2.0))
    verdict = table.trend(z=3.0)
    rows = [(r.min_k, r.estimate, r.stderr) for r in table.rows]

    def stationary_paths():
        rng = np.random.default_rng([32, 3])
        for i in range(n_paths):
            yield simulate_coupled(
                stationary_field(p, rng), p, seed=trajectory_seed(32, i), keep_noise=False
            )

    st_table = stationary_weak_convergence_test(stationary_paths(), modes, terminal_clamp(2.0))
    st_verdict = st_table.trend(z=3.0)
    st_rows = [(r.min_k, r.estimate, r.stderr) for r in st_table.rows]
    ok = (
        verdict.decreasing
        and st_verdict.decreasing
        and st_table.stationary_moment_ok
        and rows[0][1] > 0
        and st_rows[0][1] > 0
    )
    _verdict(
        capsys,
        9,
        ok,
        f"functional gap decreases in |k| on {n_paths} paths: zero start "
        f"{[f'{e:.4g}' for _, e, _ in rows]} (isotonic at 3 SE), stationary "
        f"start {[f'{e:.4g}' for _, e, _ in st_rows]} with terminal clamp "
        f"and matching start moments",
        time.perf_counter() - t0,
        1200.0,
    )


# --- 10: marginal gaussianization in the wavenumber --------------------------


def test_10_marginal_gaussianization(capsys):
    # KS distance of the unit-rescaled terminal marginal to the standard
    # complex Gaussian is nonincreasing across |k| in {2, 4, 8} beyond the
    # Monte Carlo noise floor at t = 2 over 10^3 paths, and the lowest mode
    # sits measurably far from Gaussian.
    t0 = time.perf_counter()
    p = SimParams(
        nu=0.2, alpha=3.0, dt=2e-3, horizon=2.0, spectrum=ForcingSpectrum(1.5, 2.0, 8)
    )
    modes = ((2, 0), (4, 0), (8, 0))
    n_paths = 1000
    term = {k: np.empty(n_paths, dtype=complex) for k in modes}
    for i in range(n_paths):
        cp = simulate_coupled(ModeField(8), p, seed=trajectory_seed(37, i), keep_noise=False)
        for k in modes:
            term[k][i] = rescale(cp.omega, k, p, "unit").samples[-1]
    ds = [ks_distance_to_standard_gaussian(term[k]) for k in modes]
    tol = 3.0 * 0.26 / math.sqrt(n_paths)  # 3 x the null KS fluctuation scale
    nonincreasing = all(ds[i + 1] <= ds[i] + tol for i in range(2))
    low_mode_separated = ds[0] > 1.36 / math.sqrt(n_paths)  # above the null 95% line
    ok = nonincreasing and low_mode_separated
    _verdict(
        capsys,
        10,
        ok,
        f"terminal-marginal KS to the standard complex Gaussian nonincreasing "
        f"in |k|: {[f'{d:.4f}' for d in ds]} (tolerance {tol:.4f}), lowest mode "
        f"above the null 95% line {1.36/math.sqrt(n_paths):.4f}",
        time.perf_counter() - t0,
        600.0,
    )


# --- 11: long-run agreement from distinct initial conditions -----------------


def test_11_long_run_agreement(capsys):
    # Two long nonlinear runs (alpha = 3) started from zero and from a fixed
    # large smooth field agree on time-averaged enstrophy and three low-mode
    # second moments within mutual 3 SE after burn-in.
    t0 = time.perf_counter()
    p = SimParams(
        nu=0.3, alpha=3.0, dt=2e-3, horizon=2.0, spectrum=ForcingSpectrum(1.0, 2.0, 8)
    )
    obs = default_observables()
    q = ksq_grid(8)
    amp = np.zeros_like(q, dtype=complex)
    amp[q > 0] = 1.0 / q[q > 0]
    big = ModeField(8, amp * (math.sqrt(30.0) / np.linalg.norm(amp)))
    run_zero = collect_long_run(ModeField(8), p, 200, 41, obs)
    run_big = collect_long_run(big, p, 200, 42, obs)
    report = stationary_diagnostic(
        [run_zero, run_big], None, p, burn_in=40.0, batch_count=20, z=3.0
    )
    gaps = {
        c.name: abs(c.means[0] - c.means[1]) / math.hypot(c.stderrs[0], c.stderrs[1])
        for c in report.comparisons
    }
    ok = all(c.agree for c in report.comparisons) and len(report.comparisons) == 4
    _verdict(
        capsys,
        11,
        ok,
        f"zero-start and large-start long runs agree on enstrophy and three "
        f"low-mode moments after burn-in 40 (worst gap "
        f"{max(gaps.values()):.2f} SE over {sorted(gaps)} )",
        time.perf_counter() - t0,
        1200.0,
    )


# --- 12: entropy inequality on the closed-form toy ---------------------------


def test_12_entropy_inequality_toy(capsys):
    # On the one-dimensional Gaussian-shift toy with exact relative entropy
    # H = b^2 T / (2 sigma^2), the inequality
    # P(A) <= H/c + log((e^c - 1) Q(A) + 1)/c holds on the whole c grid for
    # three event choices over 10^4 sampled paths.
    t0 = time.perf_counter()
    toy = ShiftedOuToy(mean_reversion=1.0, shift=0.8, noise=0.5, horizon=1.0, dt=1e-2)
    h = ou_toy_entropy(toy)
    assert h == pytest.approx(0.8**2 * 1.0 / (2 * 0.5**2))
    tilted = ou_toy_samples(toy, 10_000, 90, shifted=True)
    base = ou_toy_samples(toy, 10_000, 91, shifted=False)
    cases = {
        "terminal above mean": (tilted.terminal, base.terminal, lambda x: x > 0.4),
        "terminal in band": (tilted.terminal, base.terminal, lambda x: abs(x) < 0.25),
        "large log density": (tilted.log_rn, base.log_rn, lambda v: v > h),
    }
    margins = {}
    ok = True
    for name, (p_samp, q_samp, event) in cases.items():
        rep = entropy_inequality_check(p_samp, q_samp, event, h)
        ok = ok and all(e.holds for e in rep.entries)
        margins[name] = min(e.margin for e in rep.entries)
    ok = ok and min(margins.values()) > 0.0
    _verdict(
        capsys,
        12,
        ok,
        f"change-of-measure inequality holds for all c in (0.5, 1, 2, 4, 8) "
        f"and three events (exact H = {h:.3f}, min margin "
        f"{min(margins.values()):.3f})",
        time.perf_counter() - t0,
        60.0,
    )
