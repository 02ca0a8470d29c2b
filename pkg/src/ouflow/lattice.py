"""Integer wave-vector lattice, conjugate-symmetric mode fields, and norms.

State space is the square truncation K_N = {k in Z^2 : max(|k1|, |k2|) <= N,
k != 0}. A field assigns a complex amplitude to each k in K_N and represents a
real scalar, so amplitudes at k and -k are complex conjugates. Fields are kept
dense on the (2N+1) x (2N+1) grid, indexed [k1+N, k2+N], with the origin slot
pinned to zero and conjugate symmetry enforced bit-exactly at construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True, order=True)
class Wave:
    """A nonzero integer wave vector."""

    k1: int
    k2: int

    def __post_init__(self) -> None:
        if self.k1 == 0 and self.k2 == 0:
            raise ValueError("wave vector (0, 0) is excluded from the lattice")

    @property
    def euclid(self) -> float:
        return math.hypot(self.k1, self.k2)

    def perp(self) -> "Wave":
        return Wave(-self.k2, self.k1)

    def __neg__(self) -> "Wave":
        return Wave(-self.k1, -self.k2)

    def astuple(self) -> tuple[int, int]:
        return (self.k1, self.k2)


def perp(k: Wave) -> Wave:
    """Counterclockwise rotation by 90 degrees: (k1, k2) -> (-k2, k1)."""
    return k.perp()


def lattice(n: int) -> list[Wave]:
    """All wave vectors of K_n in row-major order, origin skipped.

    The first element for n >= 1 is (-n, -n).
    """
    if n < 1:
        raise ValueError("truncation must satisfy n >= 1")
    return [
        Wave(k1, k2)
        for k1 in range(-n, n + 1)
        for k2 in range(-n, n + 1)
        if not (k1 == 0 and k2 == 0)
    ]


@lru_cache(maxsize=None)
def k_grids(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer component grids K1, K2 indexed like ModeField.amp."""
    kk = np.arange(-n, n + 1)
    g1, g2 = np.meshgrid(kk, kk, indexing="ij")
    g1.setflags(write=False)
    g2.setflags(write=False)
    return g1, g2


@lru_cache(maxsize=None)
def ksq_grid(n: int) -> np.ndarray:
    """|k|^2 on the grid; the origin slot holds 0."""
    g1, g2 = k_grids(n)
    q = (g1.astype(np.int64) ** 2 + g2.astype(np.int64) ** 2).astype(float)
    q.setflags(write=False)
    return q


def _mirror_half(amp: np.ndarray, n: int) -> None:
    # copy the conjugate of the canonical half (k1 > 0, or k1 == 0 and k2 > 0)
    # onto the other half so both halves are bit-identical conjugates
    amp[:n, :] = np.conj(amp[:n:-1, ::-1])
    amp[n, :n] = np.conj(amp[n, :n:-1])


class ModeField:
    """Complex amplitudes on K_n with omega_{-k} = conj(omega_k) exactly."""

    __slots__ = ("n", "amp")

    def __init__(self, n: int, amp: np.ndarray | None = None):
        m = 2 * n + 1
        if amp is None:
            arr = np.zeros((m, m), dtype=np.complex128)
        else:
            arr = np.array(amp, dtype=np.complex128)
            if arr.shape != (m, m):
                raise ValueError(f"amplitude grid must be {m}x{m} for n={n}")
        arr[n, n] = 0.0
        _mirror_half(arr, n)
        self.n = n
        self.amp = arr

    def value(self, k1: int, k2: int) -> complex:
        n = self.n
        if max(abs(k1), abs(k2)) > n:
            raise ValueError(f"({k1}, {k2}) outside K_{n}")
        if k1 == 0 and k2 == 0:
            raise ValueError("the zero mode is not part of the state")
        return complex(self.amp[k1 + n, k2 + n])

    def copy(self) -> "ModeField":
        return ModeField(self.n, self.amp)

    # --- serialization: canonical half only, [[k1, k2, re, im], ...] ---

    def to_payload(self) -> dict:
        n = self.n
        modes = []
        for k1 in range(0, n + 1):
            lo = 1 if k1 == 0 else -n
            for k2 in range(lo, n + 1):
                z = self.amp[k1 + n, k2 + n]
                modes.append([k1, k2, float(z.real), float(z.imag)])
        return {"N": n, "modes": modes}

    @classmethod
    def from_payload(cls, payload: dict) -> "ModeField":
        n = int(payload["N"])
        m = 2 * n + 1
        arr = np.zeros((m, m), dtype=np.complex128)
        for k1, k2, re, im in payload["modes"]:
            arr[int(k1) + n, int(k2) + n] = complex(re, im)
        return cls(n, arr)

    def to_json(self) -> str:
        return json.dumps(self.to_payload())

    @classmethod
    def from_json(cls, text: str) -> "ModeField":
        return cls.from_payload(json.loads(text))


def conjugate_mirror_exact(field: ModeField) -> bool:
    """True when amp[-k] == conj(amp[k]) bit-for-bit across the grid."""
    return bool(np.array_equal(field.amp, np.conj(field.amp[::-1, ::-1])))


def norm_l2(field: ModeField) -> float:
    """(sum over K_n of |omega_k|^2)^(1/2)."""
    return float(np.linalg.norm(field.amp))


def norm_sup_gamma(field: ModeField, gamma: float) -> float:
    """sup over K_n of |k|^gamma * |omega_k|."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    weights = ksq_grid(field.n) ** (gamma / 2.0)
    return float(np.max(weights * np.abs(field.amp)))


def velocity_from_vorticity(field: ModeField) -> tuple[ModeField, ModeField]:
    """Spectral Biot-Savart: u_k = i k_perp omega_k / |k|^2, k_perp = (-k2, k1)."""
    n = field.n
    g1, g2 = k_grids(n)
    q = ksq_grid(n)
    safe = np.where(q > 0, q, 1.0)
    base = 1j * field.amp / safe
    u1 = ModeField(n, -g2 * base)
    u2 = ModeField(n, g1 * base)
    return u1, u2
