"""Periodic uniform grids on the 1- and 2-torus with Fourier collocation.

Fields are plain numpy arrays. A scalar field has shape ``grid.shape``; a
vector field has shape ``(dim, *grid.shape)``. Everything here is pure.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` points per axis on ``[0, length)^dim``."""

    dim: int
    n: int
    length: float = 2 * math.pi

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n % 2:
            raise ValueError("n must be even")
        if self.n < 8:
            raise ValueError(f"n must be at least 8, got {self.n}")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer frequencies ``-n/2+1, ..., n/2`` in FFT storage order."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        k[self.n // 2] = self.n // 2
        return k.astype(int)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.n) * self.spacing
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    # -- spectral machinery (rfftn layout: last axis is the half axis) --

    @cached_property
    def _k(self) -> tuple[np.ndarray, ...]:
        """Physical wavenumbers per axis, broadcastable against rfftn output."""
        scale = 2 * math.pi / self.length
        out = []
        for axis in range(self.dim):
            if axis == self.dim - 1:
                k = np.fft.rfftfreq(self.n, 1.0 / self.n)
            else:
                k = np.fft.fftfreq(self.n, 1.0 / self.n)
            if axis != self.dim - 1:
                k[self.n // 2] = self.n // 2
            shape = [1] * self.dim
            shape[axis] = k.size
            out.append((scale * k).reshape(shape))
        return tuple(out)

    @cached_property
    def _k_odd(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers with the Nyquist entry zeroed, for odd derivatives."""
        scale = 2 * math.pi / self.length
        out = []
        for k in self._k:
            k = k.copy()
            k[np.isclose(np.abs(k), scale * self.n / 2)] = 0.0
            out.append(k)
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        """``|k|^2`` built from Nyquist-free wavenumbers (div∘grad symbol)."""
        return sum(k**2 for k in self._k_odd)

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        return -sum(k**2 for k in self._k)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with every ``|k_i| <= n/3``."""
        scale = 2 * math.pi / self.length
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k in self._k:
            mask &= np.abs(k / scale) <= self.n / 3
        return mask

    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.shape[:-1] + (self.n // 2 + 1,)

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f, axes=tuple(range(-self.dim, 0)))

    def ifft(self, F: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(F, s=self.shape, axes=tuple(range(-self.dim, 0)))

    def multiplier(self, multi_index) -> np.ndarray:
        mult = np.ones(self.spectral_shape, dtype=complex)
        for axis, order in enumerate(multi_index):
            if order == 0:
                continue
            k = self._k_odd[axis] if order % 2 else self._k[axis]
            mult = mult * (1j * k) ** order
        return mult

    def check_scalar(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(
                f"expected a single-component field of shape {self.shape}, got {f.shape}"
            )
        return f

    def zeros(self, components: int | None = None) -> np.ndarray:
        if components is None:
            return np.zeros(self.shape)
        return np.zeros((components,) + self.shape)


def make_grid(dim: int, n: int, length: float = 2 * math.pi) -> Grid:
    return Grid(dim, n, length)


def derivative(grid: Grid, f: np.ndarray, multi_index) -> np.ndarray:
    """Fourier-collocation partial derivative ``∂^multi_index f``."""
    f = grid.check_scalar(f)
    multi_index = tuple(int(m) for m in multi_index)
    if len(multi_index) != grid.dim or any(m < 0 for m in multi_index):
        raise ValueError(f"multi_index must be {grid.dim} nonnegative integers")
    if not any(multi_index):
        return f.copy()
    return grid.ifft(grid.fft(f) * grid.multiplier(multi_index))


def unit(grid: Grid, axis: int, order: int = 1) -> tuple[int, ...]:
    idx = [0] * grid.dim
    idx[axis] = order
    return tuple(idx)


def gradient(grid: Grid, f: np.ndarray) -> np.ndarray:
    F = grid.fft(grid.check_scalar(f))
    return np.stack([grid.ifft(F * 1j * k) for k in grid._k_odd])


def divergence(grid: Grid, v: np.ndarray) -> np.ndarray:
    F = sum(grid.fft(v[i]) * 1j * grid._k_odd[i] for i in range(grid.dim))
    return grid.ifft(F)


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    return grid.ifft(grid.fft(grid.check_scalar(f)) * grid.laplacian_symbol)


def hessian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Array of shape ``(dim, dim, *shape)``."""
    F = grid.fft(grid.check_scalar(f))
    H = np.empty((grid.dim, grid.dim) + grid.shape)
    for i in range(grid.dim):
        for j in range(i, grid.dim):
            idx = [0] * grid.dim
            idx[i] += 1
            idx[j] += 1
            H[i, j] = H[j, i] = grid.ifft(F * grid.multiplier(idx))
    return H


def dealias(grid: Grid, f: np.ndarray) -> np.ndarray:
    return grid.ifft(grid.fft(f) * grid.dealias_mask)


def multi_indices(dim: int, order: int):
    """All multi-indices of the given total order, in lexicographic order."""
    if dim == 1:
        yield (order,)
        return
    for a in range(order, -1, -1):
        yield (a, order - a)


def multinomial(alpha) -> int:
    out = math.factorial(sum(alpha))
    for a in alpha:
        out //= math.factorial(a)
    return out


def tensor_norm_sq(grid: Grid, f: np.ndarray, order: int) -> np.ndarray:
    """Pointwise ``|∇^order f|^2`` summed over all ordered index tuples."""
    f = grid.check_scalar(f)
    if order == 0:
        return f**2
    F = grid.fft(f)
    out = np.zeros(grid.shape)
    for alpha in multi_indices(grid.dim, order):
        d = grid.ifft(F * grid.multiplier(alpha))
        out += multinomial(alpha) * d**2
    return out


def integrate(grid: Grid, f: np.ndarray) -> float:
    """Rectangle rule over the torus."""
    f = grid.check_scalar(f)
    return float(grid.cell_volume * np.sum(f))


def reduce(grid: Grid, f: np.ndarray, kind: str) -> tuple[float, tuple[int, ...]]:
    """Extremum of the samples and its first row-major index."""
    f = grid.check_scalar(f)
    if kind == "sup":
        flat = int(np.argmax(f))
    elif kind == "inf":
        flat = int(np.argmin(f))
    elif kind == "sup_abs":
        flat = int(np.argmax(np.abs(f)))
    else:
        raise ValueError(f"unknown reduction {kind!r}")
    index = tuple(int(i) for i in np.unravel_index(flat, grid.shape))
    value = float(np.abs(f[index]) if kind == "sup_abs" else f[index])
    return value, index


def spectral_tail(grid: Grid, f: np.ndarray) -> float:
    """Energy fraction of the outermost retained shell, mean excluded.

    The shell is ``n/4 < max_i |k_i| <= n/3``; with 2/3 dealiasing, modes
    above ``n/3`` carry nothing, so growth in this band is the first sign
    that the solution outruns the grid.
    """
    F = np.abs(grid.fft(grid.check_scalar(f))) ** 2
    weight = np.full(grid.spectral_shape, 2.0)
    weight[..., 0] = 1.0
    if grid.n % 2 == 0:
        weight[..., -1] = 1.0
    F = F * weight
    scale = 2 * math.pi / grid.length
    kmax = np.zeros(grid.spectral_shape)
    for k in grid._k:
        kmax = np.maximum(kmax, np.abs(k / scale))
    total = F[kmax > 0].sum()
    if total == 0:
        return 0.0
    return float(F[(kmax > grid.n / 4) & (kmax <= grid.n / 3)].sum() / total)


def torus_distance(grid: Grid, center) -> np.ndarray:
    """Distance to ``center`` minimized over lattice translates."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    sq = np.zeros(grid.shape)
    for axis in range(grid.dim):
        dx = np.abs(grid.coords[axis] - center[axis]) % grid.length
        dx = np.minimum(dx, grid.length - dx)
        sq += dx**2
    return np.sqrt(sq)


def iter_tuples(order: int, parts: int):
    """Ordered compositions helper used by the inequality sweeps."""
    return itertools.product(range(1, order + 1), repeat=parts)
