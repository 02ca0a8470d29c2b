"""Coupled spectral vorticity / Ornstein-Uhlenbeck dynamics on a shared driver.

Mode equations on K_n, with k_perp = (-k2, k1):

    d omega_k = [-nu |k|^alpha omega_k + F(omega)_k] dt + sigma_k d beta_k
    d z_k     =  -nu |k|^alpha z_k dt                  + sigma_k d beta_k
    F(omega)_k = 2 sum_{l+j=k; l,j in K_n} ((l_perp . k) / |l|^2) omega_l omega_j

The prefactor is real in this basis: with modes stored so that
omega_{-k} = conj(omega_k) (real physical field), the quadratic sum above is
itself conjugate-symmetric, and multiplying it by a real constant is the only
way the drift can preserve that reality constraint.  Conventions that write
the prefactor as 2i belong to the rotated basis omega'_k = i omega_k; the
modulus |F_k| and both conservation laws are identical in either basis.

Both processes consume the same Brownian increments, so the residual
rho = omega - z starts at zero and solves the random ODE
d rho_k / dt = -nu |k|^alpha rho_k + F(omega)_k.

Integrator: exponential Euler-Maruyama. With a_k = exp(-nu |k|^alpha dt) the
noise enters through g_k = c_k d beta_k, c_k = sqrt((1 - a_k^2) /
(2 nu |k|^alpha dt)), which gives the one-step OU transition its exact Ito
variance sigma_k^2 (1 - a_k^2) / (2 nu |k|^alpha). The nonlinear step

    omega_k <- a_k (omega_k + F_k dt) + sigma_k g_k

uses the identical g_k, so with F frozen to zero it reproduces the OU step
bit-for-bit.

The nonlinearity is an exact triad sum (no transform): a per-truncation
coefficient table C[k, l] = (l_perp . k)/|l|^2 over valid pairs (l, j = k - l)
is contracted against the field with one gather and one matrix-vector product,
evaluated on the canonical half lattice and mirrored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .forcing import ForcingSpectrum, NoiseIncrementSet, NoiseStream, sigma_grid
from .lattice import ModeField, ksq_grid, norm_l2


class BlowUpError(RuntimeError):
    """Raised when the vorticity norm crosses the blow-up guard."""

    def __init__(self, t: float, norm: float, guard: float):
        super().__init__(
            f"||omega|| = {norm:.6g} exceeded the blow-up guard {guard:.3g} at t = {t:.6g}"
        )
        self.t = t
        self.norm = norm
        self.guard = guard


@dataclass(frozen=True)
class SimParams:
    """Viscosity nu, dissipation exponent alpha, grid step, horizon, forcing."""

    nu: float
    alpha: float
    dt: float
    horizon: float
    spectrum: ForcingSpectrum
    blowup_guard: float = 1e6

    def __post_init__(self) -> None:
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.alpha >= 2:
            raise ValueError("alpha must satisfy alpha >= 2")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not self.blowup_guard > 0:
            raise ValueError("blow-up guard must be positive")
        steps = round(self.horizon / self.dt)
        if steps < 1 or abs(steps * self.dt - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ValueError("horizon must be an integer number of dt steps")

    @property
    def n(self) -> int:
        return self.spectrum.n

    @property
    def steps(self) -> int:
        return round(self.horizon / self.dt)


@lru_cache(maxsize=64)
def _exp_factors(n: int, nu: float, alpha: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    # decay a_k = exp(-lambda_k dt) and noise factor c_k with exact Ito variance
    q = ksq_grid(n)
    lam = nu * q ** (alpha / 2.0)
    a = np.exp(-lam * dt)
    ratio = np.zeros_like(q)
    nz = q > 0
    ratio[nz] = (1.0 - a[nz] ** 2) / (2.0 * lam[nz] * dt)
    c = np.sqrt(ratio)
    a.setflags(write=False)
    c.setflags(write=False)
    return a, c


@lru_cache(maxsize=16)
def _sigma_grid_cached(spec: ForcingSpectrum) -> np.ndarray:
    g = sigma_grid(spec)
    g.setflags(write=False)
    return g


@lru_cache(maxsize=8)
def triad_tables(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Canonical-half triad tables (rows, coef, idx).

    rows: flat indices of the canonical half modes k.
    coef[r, l_flat] = (l_perp . k_r) / |l|^2 where j = k_r - l stays inside
    K_n and neither l nor j is the origin; 0 otherwise.
    idx[r, l_flat] = flat index of j, or n_sites (a zero padding slot).
    """
    m = 2 * n + 1
    nm = m * m
    kk = np.arange(-n, n + 1)
    K1 = np.repeat(kk, m)
    K2 = np.tile(kk, m)
    canon = (K1 > 0) | ((K1 == 0) & (K2 > 0))
    rows = np.flatnonzero(canon)
    ck1 = K1[rows][:, None].astype(np.int64)
    ck2 = K2[rows][:, None].astype(np.int64)
    l1 = K1[None, :].astype(np.int64)
    l2 = K2[None, :].astype(np.int64)
    j1 = ck1 - l1
    j2 = ck2 - l2
    lsq = (l1 * l1 + l2 * l2).astype(float)
    ok = (
        (np.abs(j1) <= n)
        & (np.abs(j2) <= n)
        & ((j1 != 0) | (j2 != 0))
        & (lsq > 0)
    )
    perp_dot_k = (-l2 * ck1 + l1 * ck2).astype(float)
    coef = np.where(ok, perp_dot_k / np.where(lsq > 0, lsq, 1.0), 0.0)
    idx = np.where(ok, (j1 + n) * m + (j2 + n), nm).astype(np.int64)
    coef.setflags(write=False)
    idx.setflags(write=False)
    rows.setflags(write=False)
    return rows, coef, idx


def nonlinearity(field: ModeField) -> ModeField:
    """F(omega)_k = 2 sum_{l+j=k} ((l_perp . k)/|l|^2) omega_l omega_j on K_n."""
    n = field.n
    m = 2 * n + 1
    nm = m * m
    rows, coef, idx = triad_tables(n)
    w = field.amp.ravel()
    wpad = np.empty(nm + 1, dtype=np.complex128)
    wpad[:nm] = w
    wpad[nm] = 0.0
    half = 2.0 * ((coef * wpad[idx]) @ w)
    out = np.zeros(nm, dtype=np.complex128)
    out[rows] = half
    return ModeField(n, out.reshape(m, m))


def step_ou(z: ModeField, params: SimParams, inc: NoiseIncrementSet) -> ModeField:
    """Exact-in-law OU step: z_k <- a_k z_k + sigma_k c_k dbeta_k."""
    a, c = _exp_factors(params.n, params.nu, params.alpha, params.dt)
    sig = _sigma_grid_cached(params.spectrum)
    return ModeField(params.n, a * z.amp + sig * (c * inc.field.amp))


def step_sns(
    omega: ModeField,
    params: SimParams,
    inc: NoiseIncrementSet,
    f_field: ModeField | None = None,
) -> ModeField:
    """Nonlinear step omega_k <- a_k (omega_k + F_k dt) + sigma_k c_k dbeta_k.

    Shares the noise factor with step_ou: passing a zero f_field reproduces
    the OU update bit-for-bit.
    """
    if f_field is None:
        f_field = nonlinearity(omega)
    a, c = _exp_factors(params.n, params.nu, params.alpha, params.dt)
    sig = _sigma_grid_cached(params.spectrum)
    return ModeField(
        params.n, a * (omega.amp + f_field.amp * params.dt) + sig * (c * inc.field.amp)
    )


@dataclass
class PathRecord:
    """A saved trajectory: times, states, and (optionally) the driving noise."""

    times: np.ndarray
    states: list[ModeField]
    noise: list[NoiseIncrementSet] | None = None

    def __post_init__(self) -> None:
        if len(self.states) != len(self.times):
            raise ValueError("states and times lengths differ")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.noise is not None and len(self.noise) != len(self.times) - 1:
            raise ValueError("noise must hold one increment set per step")

    @property
    def n(self) -> int:
        return self.states[0].n

    def mode_series(self, k1: int, k2: int) -> np.ndarray:
        n = self.n
        return np.array([s.amp[k1 + n, k2 + n] for s in self.states])

    def interpolate(self, t: float) -> ModeField:
        """Linear interpolation between bracketing saved slices."""
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ValueError(f"t = {t} outside the recorded window")
        i = int(np.searchsorted(times, t))
        if i < len(times) and abs(times[i] - t) <= 1e-12:
            return self.states[i].copy()
        lo, hi = i - 1, i
        w = (t - times[lo]) / (times[hi] - times[lo])
        mix = (1.0 - w) * self.states[lo].amp + w * self.states[hi].amp
        return ModeField(self.n, mix)

    def save_jsonl(self, path: str | Path, every: int = 1) -> None:
        with open(path, "w") as fh:
            for i in range(0, len(self.times), every):
                row = {"t": float(self.times[i]), "field": self.states[i].to_payload()}
                fh.write(json.dumps(row) + "\n")

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "PathRecord":
        times = []
        states = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                times.append(float(row["t"]))
                states.append(ModeField.from_payload(row["field"]))
        return cls(np.array(times), states, None)


@dataclass
class CoupledPath:
    """omega, z on the identical driver, and their residual rho = omega - z."""

    omega: PathRecord
    z: PathRecord
    rho: PathRecord
    params: SimParams
    seed: int | None = None
    nonlin: list[ModeField] | None = None


def simulate_coupled(
    omega0: ModeField,
    params: SimParams,
    *,
    seed: int = 0,
    noise: list[NoiseIncrementSet] | None = None,
    linear: bool = False,
    keep_nonlin: bool = False,
    keep_noise: bool = True,
) -> CoupledPath:
    """Integrate omega and z from the shared state omega0 on one noise draw.

    `noise` replays a stored increment sequence; otherwise a fresh per-mode
    stream keyed by `seed` is drawn. `linear` freezes F to zero (test hook for
    the coupling contract). `keep_nonlin` caches F(omega(t_i)) at every slice,
    which the auxiliary process reuses.
    """
    n = params.n
    if omega0.n != n:
        raise ValueError("initial state truncation does not match params")
    steps = params.steps
    if noise is None:
        noise = NoiseStream(n, seed).draw(params.dt, steps)
    elif len(noise) != steps:
        raise ValueError(f"need {steps} increment sets, got {len(noise)}")
    times = np.arange(steps + 1) * params.dt
    zero = ModeField(n)
    omega = omega0.copy()
    z = omega0.copy()
    omega_states = [omega]
    z_states = [z]
    rho_states = [ModeField(n, omega.amp - z.amp)]
    nonlin_states: list[ModeField] | None = [] if keep_nonlin else None
    for i in range(steps):
        f = zero if linear else nonlinearity(omega)
        if nonlin_states is not None:
            nonlin_states.append(f)
        omega = step_sns(omega, params, noise[i], f_field=f)
        z = step_ou(z, params, noise[i])
        nrm = norm_l2(omega)
        if not nrm <= params.blowup_guard:
            raise BlowUpError(float(times[i + 1]), nrm, params.blowup_guard)
        omega_states.append(omega)
        z_states.append(z)
        rho_states.append(ModeField(n, omega.amp - z.amp))
    if nonlin_states is not None:
        nonlin_states.append(zero if linear else nonlinearity(omega))
    kept = noise if keep_noise else None
    return CoupledPath(
        omega=PathRecord(times, omega_states, kept),
        z=PathRecord(times.copy(), z_states, None),
        rho=PathRecord(times.copy(), rho_states, None),
        params=params,
        seed=seed,
        nonlin=nonlin_states,
    )


def simulate_ou(
    z0: ModeField,
    params: SimParams,
    *,
    seed: int = 0,
    noise: list[NoiseIncrementSet] | None = None,
    keep_noise: bool = False,
) -> PathRecord:
    """Pure OU trajectory (no nonlinearity, no guard)."""
    steps = params.steps
    if noise is None:
        noise = NoiseStream(params.n, seed).draw(params.dt, steps)
    times = np.arange(steps + 1) * params.dt
    z = z0.copy()
    states = [z]
    for i in range(steps):
        z = step_ou(z, params, noise[i])
        states.append(z)
    return PathRecord(times, states, noise if keep_noise else None)


def stationary_field(params: SimParams, rng: np.random.Generator) -> ModeField:
    """One sample of the OU invariant law: E|z_k|^2 = sigma_k^2/(2 nu |k|^alpha)."""
    n = params.n
    m = 2 * n + 1
    q = ksq_grid(n)
    sig = _sigma_grid_cached(params.spectrum)
    var = np.zeros_like(q)
    nz = q > 0
    var[nz] = sig[nz] ** 2 / (2.0 * params.nu * q[nz] ** (params.alpha / 2.0))
    half_sd = np.sqrt(var / 2.0)
    raw = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    return ModeField(n, half_sd * raw)


def auxiliary_drift_field(
    s: float,
    params: SimParams,
    omega_path: PathRecord,
    nonlin_cache: list[ModeField] | None = None,
    *,
    linear: bool = False,
) -> ModeField:
    """Full-lattice auxiliary drift at time s.

    Zero for s < t/2; for s in [t/2, t] it is
    2 exp(-nu |k|^alpha (t - s)) F_k(omega(2s - t)), with omega linearly
    interpolated on the grid. When a cached F path is supplied and 2s - t
    lands on a grid time, the cached value is reused. With linear=True the
    nonlinearity is frozen to zero (matching a linear=True coupled run), so
    the drift vanishes identically.
    """
    n = params.n
    t = params.horizon
    if linear or s < t / 2.0 - 1e-12:
        return ModeField(n)
    tau = 2.0 * s - t
    f: ModeField | None = None
    if nonlin_cache is not None:
        pos = tau / params.dt
        i = int(round(pos))
        if 0 <= i < len(nonlin_cache) and abs(pos - i) < 1e-9:
            f = nonlin_cache[i]
    if f is None:
        f = nonlinearity(omega_path.interpolate(tau))
    q = ksq_grid(n)
    decay = np.exp(-params.nu * q ** (params.alpha / 2.0) * (t - s))
    return ModeField(n, 2.0 * decay * f.amp)


def auxiliary_drift(
    s: float,
    params: SimParams,
    omega_path: PathRecord,
    k: tuple[int, int],
    nonlin_cache: list[ModeField] | None = None,
    *,
    linear: bool = False,
) -> complex:
    """Auxiliary drift of a single mode k at time s."""
    field = auxiliary_drift_field(s, params, omega_path, nonlin_cache, linear=linear)
    return field.value(k[0], k[1])


def simulate_auxiliary(
    omega_path: PathRecord,
    params: SimParams,
    nonlin_cache: list[ModeField] | None = None,
    *,
    linear: bool = False,
) -> PathRecord:
    """Integrate the auxiliary process on the stored noise of omega_path.

    Same exponential scheme as step_sns with F replaced by the auxiliary
    drift, driven by the identical increments; in the continuum the terminal
    state coincides with omega(t). With linear=True the drift is zero and the
    result reproduces the OU path on the same noise bit-for-bit.
    """
    if omega_path.noise is None:
        raise ValueError("omega_path must carry its noise to drive the auxiliary process")
    n = omega_path.n
    steps = len(omega_path.times) - 1
    a, c = _exp_factors(n, params.nu, params.alpha, params.dt)
    sig = _sigma_grid_cached(params.spectrum)
    x = omega_path.states[0].copy()
    states = [x]
    for i in range(steps):
        s_i = float(omega_path.times[i])
        drift = auxiliary_drift_field(s_i, params, omega_path, nonlin_cache, linear=linear)
        inc = omega_path.noise[i]
        x = ModeField(n, a * (x.amp + drift.amp * params.dt) + sig * (c * inc.field.amp))
        states.append(x)
    return PathRecord(omega_path.times.copy(), states, None)
