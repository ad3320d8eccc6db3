"""Right-hand sides for the consumption Keller-Segel system and its fluid coupling.

    rho_t + u.grad rho = D_rho lap rho - div(chi(c) rho S grad c)
    c_t   + u.grad c   = D_c lap c - k(c) rho
    u_t   + u.grad u + grad p = D_u lap u + rho grad phi,   div u = 0
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import grid as G
from .grid import Grid

TOL_NEG = 1e-10


class ConfigError(ValueError):
    """Raised by validate_config; ``errors`` lists every violated hypothesis."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NonfiniteError(FloatingPointError):
    pass


@dataclass(frozen=True)
class CoefficientSpec:
    """Coefficient function of c for chi or k.

    kind ``constant``: value; ``power``: value * z**gamma;
    ``smooth_of_power``: F(z**gamma) with F given by ascending polynomial ``coeffs``.
    """

    kind: str = "constant"
    value: float = 1.0
    gamma: float = 1.0
    coeffs: tuple = ()

    def __call__(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, None)
        if self.kind == "constant":
            return np.full_like(z, self.value)
        if self.kind == "power":
            return self.value * z**self.gamma
        if self.kind == "smooth_of_power":
            return np.polynomial.polynomial.polyval(z**self.gamma, self.coeffs)
        raise ValueError(f"unknown coefficient kind {self.kind!r}")

    @classmethod
    def from_dict(cls, d) -> "CoefficientSpec":
        if isinstance(d, (int, float)):
            return cls("constant", float(d))
        d = dict(d)
        if "coeffs" in d:
            d["coeffs"] = tuple(float(a) for a in d["coeffs"])
        return cls(**d)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "value": self.value, "gamma": self.gamma}
        if self.coeffs:
            out["coeffs"] = list(self.coeffs)
        return out


def identity_sensitivity(dim: int) -> np.ndarray:
    return np.eye(dim)


@dataclass
class ModelConfig:
    dim: int = 1
    D_rho: float = 0.0
    D_c: float = 0.0
    D_u: float = 0.0
    chi: CoefficientSpec = field(default_factory=CoefficientSpec)
    k: CoefficientSpec = field(default_factory=lambda: CoefficientSpec("power", 1.0, 1.0))
    phi: Optional[np.ndarray] = None
    S: Optional[np.ndarray] = None
    include_fluid: bool = False
    dealias: bool = True
    eps_floor: float = 1e-12

    def __post_init__(self):
        if self.S is None:
            self.S = identity_sensitivity(self.dim)
        self.S = np.asarray(self.S, dtype=float)

    @property
    def diagonal_S(self) -> bool:
        return bool(np.allclose(self.S, np.diag(np.diag(self.S)), atol=0.0))


@dataclass
class State:
    grid: Grid
    t: float
    rho: np.ndarray
    c: np.ndarray
    u: Optional[np.ndarray] = None

    def copy(self) -> "State":
        return State(
            self.grid,
            self.t,
            self.rho.copy(),
            self.c.copy(),
            None if self.u is None else self.u.copy(),
        )

    @property
    def f(self) -> np.ndarray:
        return G.gradient(self.grid, self.c)

    def pressure(self, cfg: ModelConfig) -> np.ndarray:
        return solve_pressure(self.u, self.rho, cfg.phi, self.grid, cfg.dealias)


@dataclass
class Rates:
    drho: np.ndarray
    dc: np.ndarray
    du: Optional[np.ndarray] = None


def _product(grid: Grid, a, b, dealias: bool):
    out = a * b
    return G.dealias(grid, out) if dealias else out


def _check_finite(*arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise NonfiniteError("nonfinite RHS")


def chemotactic_flux(s: State, cfg: ModelConfig) -> np.ndarray:
    """``chi(c) rho S grad c`` as a vector field."""
    grid = s.grid
    grad_c = G.gradient(grid, s.c)
    if cfg.diagonal_S and np.all(np.diag(cfg.S) == 1.0):
        sgrad = grad_c
    else:
        sgrad = np.einsum("ij,j...->i...", cfg.S, grad_c)
    chi_c = cfg.chi(s.c)
    if cfg.chi.kind == "constant":
        weight = cfg.chi.value * s.rho
    else:
        weight = _product(grid, chi_c, s.rho, cfg.dealias)
    return np.stack([_product(grid, weight, sgrad[i], cfg.dealias) for i in range(grid.dim)])


def _scalar_rates(s: State, cfg: ModelConfig):
    grid = s.grid
    flux = chemotactic_flux(s, cfg)
    drho = -G.divergence(grid, flux)
    consumption = _product(grid, cfg.k(s.c), s.rho, cfg.dealias)
    dc = -consumption
    if cfg.D_rho:
        drho = drho + cfg.D_rho * G.laplacian(grid, s.rho)
    if cfg.D_c:
        dc = dc + cfg.D_c * G.laplacian(grid, s.c)
    return drho, dc


def rhs_ks(s: State, cfg: ModelConfig) -> Rates:
    drho, dc = _scalar_rates(s, cfg)
    _check_finite(drho, dc)
    return Rates(drho, dc)


def fluid_forcing(u, rho, phi, grid: Grid, dealias: bool = True) -> np.ndarray:
    """``-(u.grad)u + rho grad phi`` before projection."""
    out = np.zeros((grid.dim,) + grid.shape)
    if phi is not None:
        gphi = G.gradient(grid, phi)
        for i in range(grid.dim):
            out[i] += _product(grid, rho, gphi[i], dealias)
    if u is not None:
        for i in range(grid.dim):
            gu = G.gradient(grid, u[i])
            adv = sum(u[j] * gu[j] for j in range(grid.dim))
            out[i] -= G.dealias(grid, adv) if dealias else adv
    return out


def _pressure_from_forcing(grid: Grid, N: np.ndarray) -> np.ndarray:
    # div(N) = lap p  =>  p_hat = -i k.N_hat / |k|^2, zero and pure-Nyquist modes dropped
    div_hat = sum(grid.fft(N[i]) * 1j * grid._k_odd[i] for i in range(grid.dim))
    k2 = grid.k_squared
    p_hat = np.zeros_like(div_hat)
    nz = k2 > 0
    p_hat[nz] = -div_hat[nz] / k2[nz]
    return grid.ifft(p_hat)


def solve_pressure(u, rho, phi, grid: Grid, dealias: bool = True) -> np.ndarray:
    """Mean-free pressure with ``lap p = div(-(u.grad)u + rho grad phi)``.

    For divergence-free u this is the same as
    ``lap p = -sum_ij d_i u^j d_j u^i + div(rho grad phi)``.
    """
    N = fluid_forcing(u, rho, phi, grid, dealias)
    p = _pressure_from_forcing(grid, N)
    if not np.all(np.isfinite(p)):
        raise NonfiniteError("pressure solve failed")
    return p


def pressure_rhs_expanded(u, rho, phi, grid: Grid) -> np.ndarray:
    """``-sum_ij d_i u^j d_j u^i + div(rho grad phi)`` evaluated without dealiasing."""
    out = np.zeros(grid.shape)
    if u is not None:
        grads = [G.gradient(grid, u[j]) for j in range(grid.dim)]
        for i in range(grid.dim):
            for j in range(grid.dim):
                out -= grads[j][i] * grads[i][j]
    if phi is not None:
        out += G.divergence(grid, rho * G.gradient(grid, phi))
    return out


def leray_project(u: np.ndarray, grid: Grid) -> np.ndarray:
    U = [grid.fft(u[i]) for i in range(grid.dim)]
    k = grid._k_odd
    k2 = grid.k_squared
    kdotu = sum(k[i] * U[i] for i in range(grid.dim))
    factor = np.zeros_like(kdotu)
    nz = k2 > 0
    factor[nz] = kdotu[nz] / k2[nz]
    return np.stack([grid.ifft(U[i] - k[i] * factor) for i in range(grid.dim)])


def rhs_ksf(s: State, cfg: ModelConfig) -> Rates:
    grid = s.grid
    if s.u is None:
        raise ValueError("fluid system needs a velocity field")
    drho, dc = _scalar_rates(s, cfg)
    u = s.u
    # transport of rho in divergence form keeps the mass exact
    drho = drho - G.divergence(
        grid, np.stack([_product(grid, u[i], s.rho, cfg.dealias) for i in range(grid.dim)])
    )
    grad_c = G.gradient(grid, s.c)
    adv_c = sum(u[i] * grad_c[i] for i in range(grid.dim))
    dc = dc - (G.dealias(grid, adv_c) if cfg.dealias else adv_c)
    N = fluid_forcing(u, s.rho, cfg.phi, grid, cfg.dealias)
    p = _pressure_from_forcing(grid, N)
    du = N - G.gradient(grid, p)
    if cfg.D_u:
        du = du + cfg.D_u * np.stack([G.laplacian(grid, u[i]) for i in range(grid.dim)])
    _check_finite(drho, dc, du)
    return Rates(drho, dc, du)


def rhs(s: State, cfg: ModelConfig) -> Rates:
    return rhs_ksf(s, cfg) if cfg.include_fluid else rhs_ks(s, cfg)


def validate_config(cfg: ModelConfig, state: Optional[State] = None) -> ModelConfig:
    """Check the structural hypotheses; raise ConfigError listing all violations."""
    errors = []
    if cfg.dim not in (1, 2):
        errors.append(f"dim must be 1 or 2, got {cfg.dim}")
    for name in ("D_rho", "D_c", "D_u"):
        if getattr(cfg, name) < 0:
            errors.append(f"negative viscosity {name}={getattr(cfg, name)}")
    S = np.asarray(cfg.S, dtype=float)
    if S.shape != (cfg.dim, cfg.dim):
        errors.append(f"S must be {cfg.dim}x{cfg.dim}")
    else:
        sym = S + S.T
        off = sym - np.diag(np.diag(sym))
        if np.any(off != 0.0):
            errors.append("S+Sᵀ not diagonal")
        if np.any(np.diag(sym) <= 0.0):
            errors.append("S+Sᵀ diagonal entries not strictly positive")
    if cfg.eps_floor < 0:
        errors.append("eps_floor must be nonnegative")
    if cfg.include_fluid and cfg.phi is None:
        errors.append("fluid coupling needs a potential phi")
    if state is not None:
        c_sup = float(np.max(state.c))
        z = np.linspace(0.0, max(c_sup, 0.0), 257)
        if np.min(cfg.chi(z)) <= 0:
            errors.append("chi not positive on [0, sup c]")
        zk = np.linspace(0.0, max(2 * c_sup, 1.0), 257)
        if np.min(cfg.k(zk)) < 0:
            errors.append("k negative on [0, inf)")
        if cfg.include_fluid and state.u is None:
            errors.append("fluid coupling needs an initial velocity")
    if errors:
        raise ConfigError(errors)
    return cfg


def with_time(s: State, t: float) -> State:
    return replace(s, t=t)
