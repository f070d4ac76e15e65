"""Atomic measures, Gaussian heat kernels, observation windows, and the
local-finiteness predicate for initial densities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


@dataclass
class AtomicMeasure:
    """Finite atomic measure: positions (n, d) and strictly positive masses (n,)."""

    positions: np.ndarray
    masses: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.masses = np.asarray(self.masses, dtype=float).ravel()
        if self.positions.size == 0:
            self.positions = self.positions.reshape(0, self.dim if self.dim else 1)
        if self.dim == 0:
            self.dim = self.positions.shape[1]
        if self.positions.shape != (len(self.masses), self.dim):
            raise ValueError("positions/masses shape mismatch")
        if len(self.masses) and not np.all(self.masses > 0):
            raise ValueError("all masses must be positive")

    def __len__(self) -> int:
        return len(self.masses)

    @classmethod
    def empty(cls, dim: int) -> "AtomicMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0), dim=dim)

    @classmethod
    def point(cls, x: Sequence[float], mass: float) -> "AtomicMeasure":
        return cls(np.asarray(x, dtype=float)[None, :], np.array([mass]))

    def to_csv(self, path: str | Path) -> None:
        header = ",".join(f"x{i+1}" for i in range(self.dim)) + ",mass"
        data = np.column_stack([self.positions, self.masses])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.17g")

    @classmethod
    def from_csv(cls, path: str | Path) -> "AtomicMeasure":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            raise ValueError(f"no atoms in {path}")
        return cls(data[:, :-1], data[:, -1])


def total_mass(m: AtomicMeasure) -> float:
    return float(np.sum(m.masses))


def integrate(m: AtomicMeasure, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Pairing <m, f> = sum_i mass_i * f(pos_i); f is vectorized over rows."""
    if len(m) == 0:
        return 0.0
    return float(np.dot(m.masses, np.asarray(f(m.positions), dtype=float).ravel()))


def heat_kernel(t: float, x: np.ndarray, d: int | None = None) -> float | np.ndarray:
    """Gaussian transition density with covariance t*I (generator Laplacian/2).

    p_t(x) = (2*pi*t)^(-d/2) * exp(-|x|^2 / (2t)).
    """
    if t <= 0:
        raise ValueError(f"time must be positive, got {t}")
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        dd = d if d is not None else (x.size if x.ndim == 1 else 1)
        r2 = float(np.dot(x.ravel(), x.ravel()))
        return (2.0 * math.pi * t) ** (-dd / 2.0) * math.exp(-r2 / (2.0 * t))
    dd = d if d is not None else x.shape[1]
    r2 = np.sum(x * x, axis=1)
    return (2.0 * math.pi * t) ** (-dd / 2.0) * np.exp(-r2 / (2.0 * t))


def heat_kernel_radial(t: float, r: np.ndarray, d: int) -> np.ndarray:
    """p_t at radius r in dimension d."""
    if t <= 0:
        raise ValueError(f"time must be positive, got {t}")
    r = np.asarray(r, dtype=float)
    return (2.0 * math.pi * t) ** (-d / 2.0) * np.exp(-r * r / (2.0 * t))


def convolve_heat(m: AtomicMeasure, t: float, x: np.ndarray) -> float:
    """(m * p_t)(x) = sum_i mass_i * p_t(x - pos_i)."""
    if t <= 0:
        raise ValueError(f"time must be positive, got {t}")
    if len(m) == 0:
        return 0.0
    x = np.asarray(x, dtype=float)
    diff = x[None, :] - m.positions
    r2 = np.sum(diff * diff, axis=1)
    vals = (2.0 * math.pi * t) ** (-m.dim / 2.0) * np.exp(-r2 / (2.0 * t))
    return float(np.dot(m.masses, vals))


@dataclass(frozen=True)
class Window:
    """Axis-aligned observation box with a voxel edge length."""

    lower: np.ndarray
    upper: np.ndarray
    resolution: float

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if not np.all(self.lower < self.upper):
            raise ValueError("window must have lower < upper componentwise")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def shape(self) -> tuple[int, ...]:
        return tuple(
            int(math.ceil((hi - lo) / self.resolution))
            for lo, hi in zip(self.lower, self.upper)
        )


@dataclass(frozen=True)
class DensitySpec:
    """Initial-measure description for the local-finiteness predicate.

    kind 'finite-atomic': params = {'measure': AtomicMeasure}
    kind 'gaussian-mixture': params = {'weights', 'centers', 'scales'}
    kind 'tail-power-exp': density proportional to (1+|x|)^a * exp(c*|x|^gamma),
        params = {'a': float, 'c': float >= 0, 'gamma': float > 0}
    """

    kind: str
    params: dict

    SUPPORTED = ("finite-atomic", "gaussian-mixture", "tail-power-exp")


class UnsupportedDensityError(ValueError):
    pass


def local_finiteness(mu: DensitySpec) -> str:
    """Classify whether the Gaussian-smoothed mass mu*p_t is finite for all t.

    Comparing the density tail against exp(-|x|^2/(2t)): any sub-Gaussian
    tail (gamma < 2, or c = 0) integrates for every t; a Gaussian-or-heavier
    tail (c > 0 and gamma >= 2) diverges for some t.
    """
    if mu.kind not in DensitySpec.SUPPORTED:
        raise UnsupportedDensityError(f"unsupported density class: {mu.kind!r}")
    if mu.kind in ("finite-atomic", "gaussian-mixture"):
        return "finite-for-all-t"
    c = float(mu.params["c"])
    gamma = float(mu.params["gamma"])
    if gamma <= 0:
        raise UnsupportedDensityError("gamma must be positive")
    if c == 0.0 or gamma < 2.0:
        return "finite-for-all-t"
    return "infinite-for-some-t"


def smoothed_mass_quadrature(mu: DensitySpec, t: float, d: int = 1,
                             r_max: float = 60.0) -> float:
    """Numeric (mu * p_t)(0) for a radial tail-power-exp density; grows without
    bound in r_max when the product diverges.  Oracle for local_finiteness."""
    if mu.kind != "tail-power-exp":
        raise UnsupportedDensityError("quadrature oracle only for tail-power-exp")
    a = float(mu.params["a"])
    c = float(mu.params["c"])
    gamma = float(mu.params["gamma"])
    r = np.linspace(0.0, r_max, 200001)
    dens = (1.0 + r) ** a * np.exp(c * r ** gamma)
    surf = 2.0 if d == 1 else (
        2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0) * r ** (d - 1)
    )
    kern = heat_kernel_radial(t, r, d)
    return float(np.trapezoid(dens * surf * kern, r))
