"""Pathwise change-of-measure records between the coupled processes.

For an adapted drift difference D_k(s) between two mode dynamics sharing one
complex Brownian driver beta_k with per-mode scale sigma_k, the log density of
the drifted law against the base law along a trajectory is

    log_rn = sum_k int (1/sigma_k) Re(D_k dconj(beta_k))
             - (1/2) int sum_k |D_k|^2 / sigma_k^2 ds.

Summing over the full conjugate-symmetric lattice counts each independent real
degree of freedom twice in both terms, which keeps the exponential-martingale
normalization E[exp(log_rn)] = 1 intact: per step the stochastic part is
conditionally Gaussian with variance sum_k |D_k|^2 dt / sigma_k^2.

Quadrature conventions: the stochastic integral uses left-endpoint drift
values against the stored increments (the adapted choice); the quadratic term
uses the trapezoid rule. Their mismatch is O(dt) and is exercised by the
refinement tests rather than hidden.

The module also provides the first-exit stopping time used to localize the
drift, a stratified Monte Carlo estimator of the relative entropy between the
stopped laws, the entropy inequality

    P(A) <= H/c + log((e^c - 1) Q(A) + 1)/c,      c > 0,

and a one-dimensional Gaussian-shift toy whose relative entropy is known in
closed form, for end-to-end validation of the inequality machinery.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    CoupledPath,
    PathRecord,
    SimParams,
    auxiliary_drift_field,
    nonlinearity,
)
from .forcing import NoiseIncrementSet, sigma_grid
from .lattice import ModeField, ksq_grid, norm_l2, norm_sup_gamma

DRIFT_DIFFERENCES = ("sns_vs_ou", "auxiliary_vs_ou")

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class GirsanovRecord:
    """One trajectory's change-of-measure bookkeeping."""

    stochastic_integral: float
    quadratic_term: float
    log_rn: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.stochastic_integral) and math.isfinite(self.log_rn)):
            raise ValueError("record terms must be finite")
        if self.quadratic_term < 0.0:
            raise ValueError("quadratic term is a time integral of squares, >= 0")
        expected = self.stochastic_integral - self.quadratic_term
        tol = 1e-12 * max(1.0, abs(self.stochastic_integral), abs(self.quadratic_term))
        if abs(self.log_rn - expected) > tol:
            raise ValueError("log_rn must equal stochastic_integral - quadratic_term")


def _check_drift_difference(drift_difference: str) -> None:
    if drift_difference not in DRIFT_DIFFERENCES:
        raise ValueError(
            f"unknown drift difference {drift_difference!r}; choose from {DRIFT_DIFFERENCES}"
        )


def _drift_slices(
    path: PathRecord,
    drift_difference: str,
    params: SimParams,
    nonlin_cache: list[ModeField] | None,
) -> list[np.ndarray]:
    """Full-lattice drift-difference grid at every stored slice."""
    _check_drift_difference(drift_difference)
    if path.n != params.n:
        raise ValueError("path truncation does not match params")
    if drift_difference == "sns_vs_ou":
        if nonlin_cache is not None:
            if len(nonlin_cache) != len(path.times):
                raise ValueError("nonlinearity cache must hold one field per slice")
            return [f.amp for f in nonlin_cache]
        return [nonlinearity(s).amp for s in path.states]
    # auxiliary drift is tied to the window [0, horizon] of its own run
    if abs(float(path.times[-1]) - params.horizon) > 1e-9:
        raise ValueError("auxiliary drift needs a path covering exactly [0, horizon]")
    return [
        auxiliary_drift_field(float(s), params, path, nonlin_cache).amp
        for s in path.times
    ]


def _inverse_sigma_grids(params: SimParams) -> tuple[np.ndarray, np.ndarray]:
    sig = sigma_grid(params.spectrum)
    inv = np.zeros_like(sig)
    mask = sig > 0
    inv[mask] = 1.0 / sig[mask]
    return inv, inv**2


def _mode_sum_series(
    drifts: Sequence[np.ndarray], inv_sq: np.ndarray, times: np.ndarray, stop: float
) -> np.ndarray:
    g = np.array([float(np.sum((d.real**2 + d.imag**2) * inv_sq)) for d in drifts])
    if stop != math.inf:
        g[times >= stop] = 0.0
    return g


def novikov_integral(
    path: PathRecord,
    drift_difference: str,
    params: SimParams,
    *,
    nonlin_cache: list[ModeField] | None = None,
    stop: float = math.inf,
) -> float:
    """Trapezoidal time quadrature of sum_k |D_k(s)|^2 / sigma_k^2.

    `stop` zeroes the integrand from that time on (drift localization); the
    default integrates over the whole stored window.
    """
    drifts = _drift_slices(path, drift_difference, params, nonlin_cache)
    _, inv_sq = _inverse_sigma_grids(params)
    g = _mode_sum_series(drifts, inv_sq, path.times, stop)
    return float(_trapezoid(g, path.times))


def record_from_drift(
    times: np.ndarray,
    drifts: Sequence[np.ndarray],
    noise: Sequence[NoiseIncrementSet],
    params: SimParams,
    *,
    stop: float = math.inf,
) -> GirsanovRecord:
    """Quadrature core: the record for an explicit drift-difference series.

    `drifts` holds one full-lattice complex grid per slice (len(times) of
    them); `noise` holds the increment sets that drove the path (one per
    step). Drift values at slice times >= `stop` are treated as zero in both
    the stochastic and the quadratic term.
    """
    if len(drifts) != len(times):
        raise ValueError("need one drift grid per slice")
    if len(noise) != len(times) - 1:
        raise ValueError("need one increment set per step")
    inv, inv_sq = _inverse_sigma_grids(params)
    si = 0.0
    for i, inc in enumerate(noise):
        t_i = float(times[i])
        if t_i >= stop:
            continue
        d = drifts[i]
        db = inc.field.amp
        si += float(np.sum(inv * (d.real * db.real + d.imag * db.imag)))
    g = _mode_sum_series(drifts, inv_sq, times, stop)
    qt = 0.5 * float(_trapezoid(g, times))
    return GirsanovRecord(si, qt, si - qt)


def log_rn_derivative(
    path: PathRecord,
    drift_difference: str,
    params: SimParams,
    *,
    nonlin_cache: list[ModeField] | None = None,
    stop: float = math.inf,
) -> GirsanovRecord:
    """Log density of the drifted law against the base law along `path`.

    The path must carry its stored noise increments. For "sns_vs_ou" the
    drift difference is the quadratic term F evaluated along the path (the
    supplied cache, when given, is authoritative — a run integrated with the
    nonlinearity frozen to zero has D identically zero); for
    "auxiliary_vs_ou" it is the time-reflected damped drift of the auxiliary
    process on the same window.
    """
    if path.noise is None:
        raise ValueError("path carries no stored noise increments")
    drifts = _drift_slices(path, drift_difference, params, nonlin_cache)
    return record_from_drift(path.times, drifts, path.noise, params, stop=stop)


# --- stopping time ---

TRIGGERS = ("enstrophy", "amplitude", "none")


@dataclass(frozen=True)
class StoppingTime:
    """First exit of the coupled pair from the level-`threshold` region."""

    time: float | None
    threshold: float
    trigger: str

    def __post_init__(self) -> None:
        if self.trigger not in TRIGGERS:
            raise ValueError(f"trigger must be one of {TRIGGERS}")
        if (self.time is None) != (self.trigger == "none"):
            raise ValueError("beyond-horizon exactly when no trigger fired")

    @property
    def beyond_horizon(self) -> bool:
        return self.time is None


def _gamma_window(params: SimParams, gamma: float) -> None:
    low = params.spectrum.decay + 1.0
    high = params.spectrum.decay + params.alpha / 2.0
    if not (low < gamma < high):
        raise ValueError(
            f"gamma = {gamma} outside the admissible window ({low}, {high})"
        )


def stopping_time(cp: CoupledPath, threshold: float, gamma: float) -> StoppingTime:
    """First slice where ||omega|| exceeds the threshold, or the companion
    linear path leaves the weighted-amplitude tube of the same radius."""
    _gamma_window(cp.params, gamma)
    for i, t in enumerate(cp.omega.times):
        if norm_l2(cp.omega.states[i]) > threshold:
            return StoppingTime(float(t), threshold, "enstrophy")
        if norm_sup_gamma(cp.z.states[i], gamma) > threshold:
            return StoppingTime(float(t), threshold, "amplitude")
    return StoppingTime(None, threshold, "none")


# --- relative entropy ---


@dataclass(frozen=True)
class StratumStat:
    """Per-level slice of the estimator: paths confined at integer level
    `level` but not at `level - 1`."""

    level: int
    count: int
    mean: float


@dataclass(frozen=True)
class EntropyEstimate:
    """Monte Carlo estimate of the relative entropy between stopped laws.

    `mean` is the sample average over paths of the stopped quadratic term
    (the stochastic-integral part has mean zero after the drift
    substitution); `majorant` is the deterministic mode-sum
    sum_k 0.5 log(q) q^(-p/2) over the truncation, whose trend under
    truncation refinement controls the estimator's (constants dropped).
    """

    mean: float
    standard_error: float
    count: int
    strata: tuple[StratumStat, ...]
    majorant: float


def _confinement_level(cp: CoupledPath, gamma: float) -> int:
    sup_omega = max(norm_l2(s) for s in cp.omega.states)
    sup_z = max(norm_sup_gamma(s, gamma) for s in cp.z.states)
    return max(1, math.ceil(max(sup_omega, sup_z)))


def entropy_majorant(params: SimParams, drift_difference: str, gamma: float) -> float:
    """Deterministic truncation mode-sum majorizing the estimator's trend."""
    _check_drift_difference(drift_difference)
    p = 2.0 * gamma - 2.0 * params.spectrum.decay - 2.0
    if drift_difference == "auxiliary_vs_ou":
        p += params.alpha
    q = ksq_grid(params.n)
    nz = q > 0
    return float(np.sum(0.5 * np.log(q[nz]) * q[nz] ** (-p / 2.0)))


def entropy_sample(
    cp: CoupledPath, drift_difference: str, stop_threshold: float, gamma: float
) -> tuple[float, int]:
    """One path's estimator contribution: (half the stopped quadratic
    integral, the path's integer confinement level)."""
    _check_drift_difference(drift_difference)
    tau = stopping_time(cp, stop_threshold, gamma)
    stop = math.inf if tau.beyond_horizon else tau.time
    half_integral = 0.5 * novikov_integral(
        cp.omega,
        drift_difference,
        cp.params,
        nonlin_cache=cp.nonlin,
        stop=stop,
    )
    return half_integral, _confinement_level(cp, gamma)


def entropy_from_samples(
    samples: Sequence[tuple[float, int]], majorant: float
) -> EntropyEstimate:
    """Aggregate per-path (value, level) samples into the stratified
    estimate; the merge is associative, so worker outputs combine in any
    order."""
    if not samples:
        raise ValueError("empty ensemble")
    arr = np.asarray([v for v, _ in samples])
    levels = np.asarray([lv for _, lv in samples])
    mean = float(np.mean(arr))
    se = float(np.std(arr, ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else math.nan
    strata = tuple(
        StratumStat(
            level=int(lv),
            count=int(np.sum(levels == lv)),
            mean=float(np.mean(arr[levels == lv])),
        )
        for lv in sorted(set(levels.tolist()))
    )
    return EntropyEstimate(mean, se, len(arr), strata, float(majorant))


def relative_entropy_estimate(
    paths: Iterable[CoupledPath],
    drift_difference: str,
    stop_threshold: float,
    gamma: float,
) -> EntropyEstimate:
    """Mean stopped quadratic term over an ensemble sampled under the
    drifted law, stratified by the integer confinement level of each path."""
    _check_drift_difference(drift_difference)
    samples: list[tuple[float, int]] = []
    majorant: float | None = None
    for cp in paths:
        if majorant is None:
            majorant = entropy_majorant(cp.params, drift_difference, gamma)
        samples.append(entropy_sample(cp, drift_difference, stop_threshold, gamma))
    if majorant is None:
        raise ValueError("empty ensemble")
    return entropy_from_samples(samples, majorant)


# --- entropy inequality ---


@dataclass(frozen=True)
class EntropyInequalityEntry:
    c: float
    rhs: float
    margin: float
    holds: bool


@dataclass(frozen=True)
class EntropyInequalityReport:
    p_hat: float
    p_se: float
    q_hat: float
    q_se: float
    entropy_bound: float
    entries: tuple[EntropyInequalityEntry, ...]

    @property
    def all_hold(self) -> bool:
        return all(e.holds for e in self.entries)


def _event_frequency(samples, event: Callable) -> tuple[float, float, int]:
    hits = np.array([bool(event(x)) for x in np.asarray(samples)])
    n = hits.size
    if n == 0:
        raise ValueError("no samples supplied")
    p = float(np.mean(hits))
    se = math.sqrt(p * (1.0 - p) / n)
    return p, se, n


def entropy_inequality_check(
    p_samples,
    q_samples,
    event: Callable,
    entropy_bound: float,
    c_grid: Sequence[float] = (0.5, 1.0, 2.0, 4.0, 8.0),
) -> EntropyInequalityReport:
    """Check P(A) <= H/c + log((e^c - 1) Q(A) + 1)/c on a grid of c.

    Holds-within-Monte-Carlo-error: each entry allows three combined standard
    errors of slack, propagating the Q-side uncertainty through the log term.
    """
    if entropy_bound < 0:
        raise ValueError("relative entropy bound must be nonnegative")
    p_hat, p_se, _ = _event_frequency(p_samples, event)
    q_hat, q_se, _ = _event_frequency(q_samples, event)
    entries = []
    for c in c_grid:
        if c <= 0:
            raise ValueError("c grid must be positive")
        grow = math.expm1(c)
        rhs = entropy_bound / c + math.log1p(grow * q_hat) / c
        drhs_dq = grow / (c * (grow * q_hat + 1.0))
        slack = 3.0 * math.hypot(p_se, drhs_dq * q_se)
        entries.append(
            EntropyInequalityEntry(
                c=float(c),
                rhs=rhs,
                margin=rhs - p_hat,
                holds=p_hat <= rhs + slack,
            )
        )
    return EntropyInequalityReport(
        p_hat, p_se, q_hat, q_se, entropy_bound, tuple(entries)
    )


# --- one-dimensional Gaussian-shift toy ---


@dataclass(frozen=True)
class ShiftedOuToy:
    """dX = -a X dt + sigma dW under the base law; the tilted law adds the
    constant drift b. Both are simulated with the same Euler grid, so the
    discrete laws are products of Gaussians with shifted means and every
    density identity below is exact at any dt."""

    mean_reversion: float
    shift: float
    noise: float
    horizon: float
    dt: float

    def __post_init__(self) -> None:
        if self.noise <= 0 or self.dt <= 0 or self.horizon <= 0:
            raise ValueError("noise, dt, and horizon must be positive")
        if self.mean_reversion < 0:
            raise ValueError("mean reversion must be nonnegative")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("horizon must be an integer number of steps")

    @property
    def steps(self) -> int:
        return round(self.horizon / self.dt)


def ou_toy_entropy(toy: ShiftedOuToy) -> float:
    """Relative entropy of the tilted law against the base law on one window:
    b^2 T / (2 sigma^2), exact for the discrete product measures."""
    return toy.shift**2 * toy.horizon / (2.0 * toy.noise**2)


@dataclass(frozen=True)
class OuToySamples:
    """Terminal values and the exact log density (tilted against base)
    evaluated on the sampled discrete paths."""

    terminal: np.ndarray
    log_rn: np.ndarray


def ou_toy_samples(
    toy: ShiftedOuToy, count: int, seed: int, *, shifted: bool
) -> OuToySamples:
    """Simulate `count` discrete paths from x0 = 0 under the base law
    (shifted=False) or the tilted law (shifted=True)."""
    if count <= 0:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    a, b, sig, dt = toy.mean_reversion, toy.shift, toy.noise, toy.dt
    x = np.zeros(count)
    acc = np.zeros(count)  # sum of (X_{i+1} - X_i + a X_i dt) = sum of noise + shift parts
    root = math.sqrt(dt)
    for _ in range(toy.steps):
        dw = rng.standard_normal(count) * root
        move = (b * dt if shifted else 0.0) + sig * dw
        acc += move
        x = x - a * x * dt + move
    log_rn = (b / sig**2) * acc - b * b * toy.horizon / (2.0 * sig**2)
    return OuToySamples(terminal=x, log_rn=log_rn)
