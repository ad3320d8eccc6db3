"""Blow-up ODEs for the Taylor coefficients at a quadratic zero, and the
lower-bound certificate ODEs.

State layout: scalar kinds use ``(C, R)``; ``multi_d`` uses
``(C_1, ..., C_d, R_1, ..., R_d)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp

KINDS = ("scalar_1d", "scalar_general_chik", "multi_d")


class NoBlowupError(ValueError):
    pass


@dataclass(frozen=True)
class BlowupOde:
    kind: str = "scalar_1d"
    k1: float = 1.0
    chi1: float = 1.0
    d: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ODE kind {self.kind!r}")
        if self.kind == "multi_d" and self.d not in (1, 2):
            raise ValueError("multi_d needs d in {1, 2}")

    @property
    def size(self) -> int:
        return 2 * self.d if self.kind == "multi_d" else 2

    def split(self, state):
        state = np.asarray(state, dtype=float)
        if state.shape != (self.size,):
            raise ValueError(f"state must have {self.size} entries")
        if self.kind == "multi_d":
            return state[: self.d], state[self.d :]
        return state[:1], state[1:]


def ode_rhs(ode: BlowupOde, state, t: float = 0.0) -> np.ndarray:
    C, R = ode.split(state)
    if ode.kind == "scalar_1d":
        return np.array([R[0], 6 * C[0] * R[0]])
    if ode.kind == "scalar_general_chik":
        return np.array([ode.k1 * R[0], 6 * ode.chi1 * C[0] * R[0]])
    dR = 2 * R * (2 * C + C.sum())
    return np.concatenate([R, dR])


def _symmetric_factor(ode: BlowupOde) -> float:
    """``a`` in the first integral ``R - a C^2``."""
    if ode.kind == "scalar_1d":
        return 3.0
    if ode.kind == "scalar_general_chik":
        return 3.0 * ode.chi1 / ode.k1
    return float(ode.d + 2)


def first_integral(ode: BlowupOde, state) -> float:
    C, R = ode.split(state)
    if ode.kind == "multi_d" and not (np.all(C == C[0]) and np.all(R == R[0])):
        raise ValueError("first integral needs a symmetric multi_d state")
    return float(R[0] - _symmetric_factor(ode) * C[0] ** 2)


@dataclass
class BlowupResult:
    T_star: float
    T_coarse: float
    T_fine: float
    drift: float
    nfev: int


def _time_to(ode: BlowupOde, init, threshold: float, tol: float):
    def event(t, y):
        return y[0] - threshold

    event.terminal = True
    event.direction = 1
    # C grows like 1/(3(T*-t)); the ODE itself bounds the horizon well below 1e6
    sol = solve_ivp(
        lambda t, y: ode_rhs(ode, y, t),
        (0.0, 1e6),
        np.asarray(init, dtype=float),
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-3,
        events=event,
        dense_output=False,
    )
    if sol.status != 1 or not sol.t_events[0].size:
        raise NoBlowupError("no blow-up guaranteed: threshold never reached")
    return float(sol.t_events[0][0]), sol


def blowup_time(ode: BlowupOde, init, tol: float = 1e-12, threshold: float = 1e8) -> BlowupResult:
    """Adaptive T*, extrapolated from the hitting times of C = threshold and threshold/10."""
    C, R = ode.split(init)
    if np.any(C <= 0) or np.any(R <= 0):
        raise NoBlowupError("no blow-up guaranteed: need C0 > 0 and R0 > 0")
    lower = threshold / 10
    t_fine, sol = _time_to(ode, init, threshold, tol)
    t_coarse, _ = _time_to(ode, init, lower, tol)
    T = (threshold * t_fine - lower * t_coarse) / (threshold - lower)
    drift = math.nan
    symmetric = ode.kind != "multi_d" or (np.all(C == C[0]) and np.all(R == R[0]))
    if symmetric:
        ys = sol.y[:, sol.y[0] <= 1e3]
        e0 = first_integral(ode, init)
        vals = np.array([first_integral(ode, y) for y in ys.T])
        # R and aC^2 cancel; measure drift against the size of the terms
        scale = np.maximum(np.abs(ys[ode.size // 2]), abs(e0))
        drift = float(np.max(np.abs(vals - e0) / scale))
    return BlowupResult(T, t_coarse, t_fine, drift, int(sol.nfev))


def gauss_legendre(func, a: float, b: float, panels: int = 64, order: int = 20) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        x = lo + half * (nodes + 1)
        total += half * float(np.dot(weights, func(x)))
    return total


def quadrature_blowup_time(ode: BlowupOde, init) -> float:
    """T* = integral of dC / C' along the first integral, with u = 1/C."""
    C, R = ode.split(init)
    if ode.kind == "multi_d":
        if not (np.all(C == C[0]) and np.all(R == R[0])):
            raise ValueError("quadrature oracle needs a symmetric multi_d state")
        lead, speed = float(ode.d + 2), 1.0
    elif ode.kind == "scalar_1d":
        lead, speed = 3.0, 1.0
    else:
        lead, speed = 3.0 * ode.chi1, ode.k1
    C0, R0 = float(C[0]), float(R[0])
    if C0 <= 0 or R0 <= 0:
        raise NoBlowupError("no blow-up guaranteed: need C0 > 0 and R0 > 0")
    slope = speed * R0 - lead * C0**2
    return gauss_legendre(lambda u: 1.0 / (lead + slope * u**2), 0.0, 1.0 / C0)


def trajectory(ode: BlowupOde, init, t_eval, tol: float = 1e-12) -> np.ndarray:
    """Dense ODE solution at ``t_eval``; shape ``(len(t_eval), size)``."""
    t_eval = np.asarray(t_eval, dtype=float)
    sol = solve_ivp(
        lambda t, y: ode_rhs(ode, y, t),
        (0.0, float(t_eval[-1])),
        np.asarray(init, dtype=float),
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-3,
        t_eval=t_eval,
    )
    if sol.status != 0:
        raise NoBlowupError(f"trajectory ended early: {sol.message}")
    return sol.y.T


@dataclass(frozen=True)
class CertificateState:
    c_low: float
    delta_low: float
    a_low: float
    r_low: float

    def __post_init__(self):
        for name in ("c_low", "delta_low", "a_low", "r_low"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass
class CertificateSeries:
    t: np.ndarray
    c_low: np.ndarray
    delta_low: np.ndarray
    a_low: np.ndarray
    r_low: np.ndarray

    def at(self, i: int) -> CertificateState:
        return CertificateState(self.c_low[i], self.delta_low[i], self.a_low[i], self.r_low[i])


def _cumulative(t, rate):
    if len(t) == 1:
        return np.zeros(1)
    if len(t) == 2:
        return np.concatenate([[0.0], [0.5 * (rate[0] + rate[1]) * (t[1] - t[0])]])
    return cumulative_simpson(rate, x=t, initial=0.0)


def certificate_evolve(t, rho_sup, gradf_sup, init: CertificateState, dim: int = 1) -> CertificateSeries:
    """Integrate the linear lower-bound ODEs along a recorded history.

    ``gradf_sup`` is the sup over x of the operator norm of the Hessian of c.
    """
    t = np.asarray(t, dtype=float)
    rho_sup = np.asarray(rho_sup, dtype=float)
    gradf_sup = np.asarray(gradf_sup, dtype=float)
    if not (t.shape == rho_sup.shape == gradf_sup.shape):
        raise ValueError("history arrays must share one shape")
    P = _cumulative(t, rho_sup)
    Q = _cumulative(t, gradf_sup)
    return CertificateSeries(
        t,
        init.c_low * np.exp(-P),
        init.delta_low * np.exp(-Q),
        init.a_low * np.exp(-(2 + dim) * Q),
        init.r_low * np.exp(-3 * Q),
    )


def write_ode_csv(path, rows) -> None:
    """Rows of (init, T_adaptive, T_quadrature, drift)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["init", "T*_adaptive", "T*_quadrature", "first_integral_drift"])
        for init, ta, tq, drift in rows:
            w.writerow([";".join(f"{v:.17g}" for v in init), f"{ta:.17g}", f"{tq:.17g}", f"{drift:.17g}"])
