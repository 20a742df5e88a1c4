"""Sampled Gaussian and SOGDD kernels, and the oriented response stack."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels as _k
from .imagecore import GrayImage


@dataclass(frozen=True)
class Kernel2D:
    """Square kernel of side ``2*radius+1``; ``taps[i, j]`` sits at offset
    ``(dy, dx) = (i - radius, j - radius)``."""

    radius: int
    taps: np.ndarray
    sigma: float
    theta: float | None = None

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64)
        n = 2 * self.radius + 1
        if taps.shape != (n, n):
            raise ValueError(f"taps must be {n}x{n}, got {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise ValueError("kernel taps must be finite")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)


def radius_for(sigma: float) -> int:
    """Support radius ``ceil(4*sigma) + 1``."""
    return int(math.ceil(4.0 * sigma)) + 1


def _grid(radius):
    offs = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.meshgrid(offs, offs, indexing="xy")  # x varies along columns


def gaussian_samples(sigma, radius):
    x, y = _grid(radius)
    return np.exp(-(x * x + y * y) / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma)


def sogdd_samples(sigma, theta, radius):
    """Second directional derivative of the Gaussian sampled on the grid,
    before any DC correction."""
    x, y = _grid(radius)
    u = x * math.cos(theta) + y * math.sin(theta)
    s2 = sigma * sigma
    return (u * u / s2 - 1.0) / s2 * gaussian_samples(sigma, radius)


def gaussian_kernel(sigma: float, radius: int) -> Kernel2D:
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    if radius < 1:
        raise ValueError("radius must be >= 1")
    g = gaussian_samples(sigma, radius)
    return Kernel2D(radius, g / g.sum(), float(sigma))


def sogdd_kernel(sigma: float, theta: float, radius: int | None = None) -> Kernel2D:
    """Zero-sum SOGDD kernel at orientation ``theta`` (radians from +x
    towards +y, i.e. towards increasing row index)."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    if radius is None:
        radius = radius_for(sigma)
    if radius < 1:
        raise ValueError("radius must be >= 1")
    taps = sogdd_samples(sigma, math.fmod(theta, math.pi), radius)
    return Kernel2D(radius, taps - taps.mean(), float(sigma), float(theta))


@dataclass(frozen=True)
class FilterBank:
    sigma: float
    kernels: tuple

    def __post_init__(self):
        if len(self.kernels) < 2:
            raise ValueError("a filter bank needs at least 2 orientations")
        radii = {k.radius for k in self.kernels}
        if len(radii) != 1:
            raise ValueError("all kernels must share one radius")
        thetas = [k.theta for k in self.kernels]
        if any(b <= a for a, b in zip(thetas, thetas[1:])):
            raise ValueError("orientations must be strictly increasing")
        if thetas[0] < 0 or thetas[-1] >= math.pi:
            raise ValueError("orientations must lie in [0, pi)")

    @property
    def K(self) -> int:
        return len(self.kernels)

    @property
    def radius(self) -> int:
        return self.kernels[0].radius

    @property
    def thetas(self) -> np.ndarray:
        return np.array([k.theta for k in self.kernels])

    def stacked(self) -> np.ndarray:
        return np.stack([k.taps for k in self.kernels])


def orientations(K: int) -> np.ndarray:
    return np.array([k * math.pi / K for k in range(K)])


def build_bank(sigma: float, K: int = 8) -> FilterBank:
    """K SOGDD kernels at ``theta_k = (k-1)*pi/K``, k = 1..K."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    r = radius_for(sigma)
    return FilterBank(float(sigma), tuple(sogdd_kernel(sigma, th, r) for th in orientations(K)))


@dataclass(frozen=True)
class ResponseStack:
    """Per-pixel K-vectors of filter responses, stored as ``(K, h, w)``."""

    responses: np.ndarray
    abs_flag: bool

    def __post_init__(self):
        r = np.asarray(self.responses, dtype=np.float64)
        if r.ndim != 3:
            raise ValueError("responses must have shape (K, height, width)")
        if self.abs_flag and np.any(r < 0):
            raise ValueError("abs_flag set but negative responses present")
        r.setflags(write=False)
        object.__setattr__(self, "responses", r)

    @property
    def K(self) -> int:
        return self.responses.shape[0]

    @property
    def height(self) -> int:
        return self.responses.shape[1]

    @property
    def width(self) -> int:
        return self.responses.shape[2]


def convolve_bank(img: GrayImage, bank: FilterBank, take_abs: bool = True, backend=None) -> ResponseStack:
    """Convolve ``img`` with every kernel of ``bank`` (replicate boundary)."""
    padded = np.pad(img.data, bank.radius, mode="edge")
    out = _k.convolve_stack(padded, bank.stacked(), take_abs=take_abs, backend=backend)
    return ResponseStack(out, bool(take_abs))


def kernels_csv_rows(bank: FilterBank):
    """Rows ``(k, theta, dy, dx, tap)`` for exporting a bank."""
    r = bank.radius
    for k, kern in enumerate(bank.kernels):
        for i in range(2 * r + 1):
            for j in range(2 * r + 1):
                yield k, kern.theta, i - r, j - r, kern.taps[i, j]
