"""Explicit RK4 and integrating-factor RK4 steppers with CFL control."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grid as G
from .models import ModelConfig, Rates, State, leray_project, rhs

SCHEMES = ("rk4", "imex")
# RK4 stability interval on the negative real axis
RK4_REAL_STABILITY = 2.78


@dataclass(frozen=True)
class StepperConfig:
    scheme: str = "rk4"
    cfl_number: float = 0.4
    dt_min: float = 1e-9
    dt_max: float = 1e-2
    t_end: float = 1.0
    abort_threshold: float = math.inf

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if not 0 < self.cfl_number <= 1:
            raise ValueError("cfl_number must lie in (0, 1]")


def transport_speed(s: State) -> float:
    speed = np.sqrt(np.sum(s.f**2, axis=0))
    if s.u is not None:
        speed = speed + np.sqrt(np.sum(s.u**2, axis=0))
    return float(np.max(speed))


def cfl_dt(s: State, cfg: ModelConfig, sc: StepperConfig) -> tuple[float, bool]:
    """Step size and a flag that is True when the step was clamped at dt_min."""
    h = s.grid.spacing
    dt = sc.cfl_number * h / max(transport_speed(s), 1e-300)
    diffusivities = [cfg.D_rho, cfg.D_u if cfg.include_fluid else 0.0]
    if sc.scheme == "rk4":
        diffusivities.append(cfg.D_c)
    d_max = max(diffusivities)
    if d_max > 0:
        kmax_sq = s.grid.dim * (math.pi / h) ** 2
        dt = min(dt, sc.cfl_number * RK4_REAL_STABILITY / (d_max * kmax_sq))
    if not np.isfinite(dt) or dt < sc.dt_min:
        return sc.dt_min, True
    return min(dt, sc.dt_max), False


def _shift(s: State, r: Rates, a: float) -> State:
    return State(
        s.grid,
        s.t,
        s.rho + a * r.drho,
        s.c + a * r.dc,
        None if s.u is None else s.u + a * r.du,
    )


def step_rk4(s: State, dt: float, cfg: ModelConfig) -> State:
    if dt == 0:
        return s.copy()
    k1 = rhs(s, cfg)
    k2 = rhs(_shift(s, k1, dt / 2), cfg)
    k3 = rhs(_shift(s, k2, dt / 2), cfg)
    k4 = rhs(_shift(s, k3, dt), cfg)
    w = dt / 6
    rho = s.rho + w * (k1.drho + 2 * k2.drho + 2 * k3.drho + k4.drho)
    c = s.c + w * (k1.dc + 2 * k2.dc + 2 * k3.dc + k4.dc)
    u = None
    if s.u is not None:
        u = s.u + w * (k1.du + 2 * k2.du + 2 * k3.du + k4.du)
        u = leray_project(u, s.grid)
    return State(s.grid, s.t + dt, rho, c, u)


def step_imex(s: State, dt: float, cfg: ModelConfig) -> State:
    """RK4 in the variable ``exp(-D_c lap t) c``; the c-diffusion is exact."""
    if cfg.D_c == 0:
        return step_rk4(s, dt, cfg)
    if dt == 0:
        return s.copy()
    grid = s.grid
    lin = cfg.D_c * grid.laplacian_symbol

    def heat(f, tau):
        return grid.ifft(grid.fft(f) * np.exp(lin * tau))

    explicit = ModelConfig(**{**cfg.__dict__, "D_c": 0.0})

    c_half = heat(s.c, dt / 2)
    c_full = heat(s.c, dt)

    k1 = rhs(s, explicit)
    s2 = _shift(s, k1, dt / 2)
    s2.c = heat(s.c + dt / 2 * k1.dc, dt / 2)
    k2 = rhs(s2, explicit)
    s3 = _shift(s, k2, dt / 2)
    s3.c = c_half + dt / 2 * k2.dc
    k3 = rhs(s3, explicit)
    s4 = _shift(s, k3, dt)
    s4.c = c_full + dt * heat(k3.dc, dt / 2)
    k4 = rhs(s4, explicit)

    w = dt / 6
    rho = s.rho + w * (k1.drho + 2 * k2.drho + 2 * k3.drho + k4.drho)
    c = c_full + w * (heat(k1.dc, dt) + 2 * heat(k2.dc + k3.dc, dt / 2) + k4.dc)
    u = None
    if s.u is not None:
        u = s.u + w * (k1.du + 2 * k2.du + 2 * k3.du + k4.du)
        u = leray_project(u, grid)
    return State(grid, s.t + dt, rho, c, u)


def step(s: State, dt: float, cfg: ModelConfig, sc: StepperConfig) -> State:
    if sc.scheme == "imex":
        return step_imex(s, dt, cfg)
    return step_rk4(s, dt, cfg)


def integrate_to(s: State, t_end: float, cfg: ModelConfig, sc: StepperConfig) -> State:
    """Advance with CFL steps, landing exactly on ``t_end``."""
    while s.t < t_end - 1e-14:
        dt, _ = cfl_dt(s, cfg, sc)
        dt = min(dt, t_end - s.t)
        s = step(s, dt, cfg, sc)
    return s


def mass(s: State) -> float:
    return G.integrate(s.grid, s.rho)
