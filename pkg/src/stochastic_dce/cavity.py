"""Static cavity geometry: mode frequencies and intermode couplings.

One run simulates a single transverse family (kx, ky) with nz = 1..nz_max;
the wall motion only couples modes that share transverse indices, so this
truncation is exact in the transverse directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["CavityConfig", "ModeIndex", "omega", "omega_z", "g", "v"]


@dataclass(frozen=True)
class CavityConfig:
    Lx: float
    Ly: float
    Lz0: float
    epsilon: float
    kx: int = 1
    ky: int = 1
    nz_max: int = 1

    def __post_init__(self):
        if min(self.Lx, self.Ly, self.Lz0) <= 0:
            raise ValueError("all cavity lengths must be > 0")
        if not 0 <= self.epsilon < 1:
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if self.kx < 1 or self.ky < 1:
            raise ValueError("transverse indices must be >= 1")
        if self.nz_max < 1:
            raise ValueError("nz_max must be >= 1")

    @property
    def transverse_sq(self) -> float:
        return (self.kx / self.Lx) ** 2 + (self.ky / self.Ly) ** 2

    def modes(self) -> list["ModeIndex"]:
        return [ModeIndex(n) for n in range(1, self.nz_max + 1)]

    def omegas(self) -> np.ndarray:
        """Frequencies of the retained family, ordered by nz."""
        nz = np.arange(1, self.nz_max + 1)
        return np.pi * np.sqrt(self.transverse_sq + (nz / self.Lz0) ** 2)

    def omega_zs(self) -> np.ndarray:
        nz = np.arange(1, self.nz_max + 1)
        return np.pi * nz / self.Lz0

    def g_matrix(self) -> np.ndarray:
        """Antisymmetric coupling matrix over the retained family."""
        nz = np.arange(1, self.nz_max + 1, dtype=float)
        k = nz[:, None]
        j = nz[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            mat = (-1.0) ** (k + j) * 2.0 * k * j / (j * j - k * k)
        np.fill_diagonal(mat, 0.0)
        return mat


@dataclass(frozen=True)
class ModeIndex:
    nz: int

    def __post_init__(self):
        if self.nz < 1:
            raise ValueError(f"nz must be >= 1, got {self.nz}")


def omega(config: CavityConfig, mode: ModeIndex) -> float:
    """omega = pi sqrt((kx/Lx)^2 + (ky/Ly)^2 + (nz/Lz0)^2)."""
    _check(config, mode)
    return math.pi * math.sqrt(config.transverse_sq + (mode.nz / config.Lz0) ** 2)


def omega_z(config: CavityConfig, mode: ModeIndex) -> float:
    """Longitudinal part pi nz / Lz0 (enters the driving term squared)."""
    _check(config, mode)
    return math.pi * mode.nz / config.Lz0


def g(config: CavityConfig, k: ModeIndex, j: ModeIndex) -> float:
    """Intermode coupling; 0 on the diagonal, antisymmetric off it."""
    _check(config, k)
    _check(config, j)
    if k.nz == j.nz:
        return 0.0
    return (-1.0) ** (k.nz + j.nz) * 2.0 * k.nz * j.nz / (j.nz**2 - k.nz**2)


def v(config: CavityConfig, n: ModeIndex, k: ModeIndex) -> float:
    """Perturbative coupling v_nk (depends only on the static geometry)."""
    wk = omega(config, k)
    wn = omega(config, n)
    wkz = omega_z(config, k)
    out = g(config, k, n) * (wn**2 - wk**2) / (2.0 * math.sqrt(wk * wn))
    if n.nz == k.nz:
        out += wkz**2 / wk
    return out


def _check(config: CavityConfig, mode: ModeIndex):
    if mode.nz > config.nz_max:
        raise ValueError(f"mode nz={mode.nz} outside family (nz_max={config.nz_max})")
