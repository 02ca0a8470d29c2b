"""Power-law forcing spectrum and the shared Brownian mode increments.

Noise convention: each conjugate pair (k, -k) carries one complex Brownian
motion beta_k with E|beta_k(t)|^2 = t and beta_{-k} = conj(beta_k). A step of
size dt therefore draws independent real and imaginary parts of variance dt/2
on the canonical half lattice; the other half is the conjugate mirror.

Stream layout (counter-based, order-independent): the trajectory seed is the
first 8 bytes of sha256("{master_seed}:{index}"); each mode's substream is a
Philox generator keyed by SeedSequence(entropy=trajectory_seed,
spawn_key=(k1+n, k2+n)). Mode draws are independent of the order in which
modes or trajectories are generated, so ensembles parallelize with no shared
state and any single path can be replayed from its recorded seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .lattice import ModeField, Wave, ksq_grid


@dataclass(frozen=True)
class ForcingSpectrum:
    """sigma_k = amplitude / |k|^decay on K_n, every mode forced."""

    amplitude: float
    decay: float
    n: int

    def __post_init__(self) -> None:
        if not self.amplitude > 0:
            raise ValueError("forcing amplitude must be positive (all modes forced)")
        if not self.decay > 0:
            raise ValueError("forcing decay exponent must be positive")
        if self.n < 1:
            raise ValueError("truncation must satisfy n >= 1")


def sigma(spec: ForcingSpectrum, k: Wave | tuple[int, int]) -> float:
    """Forcing amplitude at mode k."""
    k1, k2 = (k.k1, k.k2) if isinstance(k, Wave) else k
    r2 = k1 * k1 + k2 * k2
    if r2 == 0:
        raise ValueError("the zero mode carries no forcing")
    return spec.amplitude * r2 ** (-spec.decay / 2.0)


def sigma_grid(spec: ForcingSpectrum) -> np.ndarray:
    """sigma_k on the dense grid; the origin slot holds 0."""
    q = ksq_grid(spec.n)
    out = np.zeros_like(q)
    np.divide(spec.amplitude, q ** (spec.decay / 2.0), out=out, where=q > 0)
    return out


def sigma_max(spec: ForcingSpectrum) -> float:
    """sup over K_n of sigma_k (attained on the unit circle)."""
    return spec.amplitude


def energy_input_rate(spec: ForcingSpectrum) -> float:
    """sum over K_n of sigma_k^2, computed by exact enumeration."""
    return float(np.sum(sigma_grid(spec) ** 2))


@dataclass(frozen=True)
class NoiseIncrementSet:
    """One step's Brownian increments delta beta_k, conjugate-symmetric."""

    dt: float
    field: ModeField


def trajectory_seed(master_seed: int, index: int) -> int:
    """Stated per-trajectory hash: first 8 bytes of sha256("{seed}:{index}")."""
    digest = hashlib.sha256(f"{master_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _half_modes(n: int) -> list[tuple[int, int]]:
    out = [(0, k2) for k2 in range(1, n + 1)]
    out += [(k1, k2) for k1 in range(1, n + 1) for k2 in range(-n, n + 1)]
    return out


# Fixed offset making spawn keys non-negative independently of the truncation,
# so a mode's substream is a function of (seed, k) alone: enlarging n keeps
# every shared mode's draws bit-identical, which makes truncation sweeps at a
# matched seed pathwise comparable.
_SPAWN_OFFSET = 4096


class NoiseStream:
    """Per-mode Philox substreams for one trajectory's Brownian driver."""

    def __init__(self, n: int, seed: int):
        if n > _SPAWN_OFFSET:
            raise ValueError(f"truncation {n} exceeds the supported {_SPAWN_OFFSET}")
        self.n = n
        self.seed = seed
        self._modes = _half_modes(n)
        self._gens = [
            np.random.Generator(
                np.random.Philox(
                    np.random.SeedSequence(
                        entropy=seed,
                        spawn_key=(k1 + _SPAWN_OFFSET, k2 + _SPAWN_OFFSET),
                    )
                )
            )
            for k1, k2 in self._modes
        ]

    def draw(self, dt: float, steps: int) -> list[NoiseIncrementSet]:
        """The next `steps` increment sets, each with E|delta beta_k|^2 = dt."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        n = self.n
        m = 2 * n + 1
        block = np.zeros((steps, m, m), dtype=np.complex128)
        root = np.sqrt(dt / 2.0)
        for (k1, k2), gen in zip(self._modes, self._gens):
            g = gen.standard_normal((steps, 2))
            block[:, k1 + n, k2 + n] = root * (g[:, 0] + 1j * g[:, 1])
        return [NoiseIncrementSet(dt, ModeField(n, block[i])) for i in range(steps)]


def sample_increments(
    spec: ForcingSpectrum, dt: float, stream: NoiseStream
) -> NoiseIncrementSet:
    """Draw one increment set from the stream (forced lattice must match)."""
    if stream.n != spec.n:
        raise ValueError("stream truncation does not match the forcing spectrum")
    return stream.draw(dt, 1)[0]
