"""Fourier-mode analysis of the linearized systems.

Two-component kinds act on (rho_hat, c_hat). Amplification is measured on the
balanced pair (rho_hat, k c_hat), i.e. rho in H^s paired with c in H^{s+1};
the plain Euclidean amplification of (rho_hat, c_hat) is reported alongside.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

KINDS = ("ks_wellposed", "ks_illposed_c", "ks_illposed_rho", "ksf1d", "ksf1d_good")
ILLPOSED = ("ks_illposed_c", "ks_illposed_rho")

_KSF = np.array([[2.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 0.0, 1.0]])
_KSF_GOOD = np.array([[2.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
GOOD_TRANSFORM = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, -1.0], [0.0, 0.0, 1.0]])


class NonMonotoneError(ValueError):
    pass


def dimension(kind: str) -> int:
    if kind not in KINDS:
        raise ValueError(f"unknown linear system kind {kind!r}")
    return 3 if kind.startswith("ksf1d") else 2


def mode_matrix(kind: str, k: float, t: float) -> np.ndarray:
    """Coefficient matrix of the mode ODE ``d/dt v = A(t) v``."""
    dimension(kind)
    k2 = float(k) ** 2
    if kind == "ks_wellposed":
        # rho_t = -c_xx,  c_t = -e^{-t} rho - c
        return np.array([[0.0, k2], [-math.exp(-t), -1.0]])
    if kind == "ks_illposed_c":
        # rho_t = -c_xx,  c_t = e^{t} rho + c
        return np.array([[0.0, k2], [math.exp(t), 1.0]])
    if kind == "ks_illposed_rho":
        # around (1, 1 + t): rho_t = -c_xx,  c_t = rho
        return np.array([[0.0, k2], [1.0, 0.0]])
    if kind == "ksf1d":
        return -1j * k * _KSF
    return -1j * k * _KSF_GOOD


def _balance(kind: str, k: float) -> np.ndarray:
    if dimension(kind) == 3:
        return np.eye(3)
    return np.diag([1.0, max(float(k), 1.0)])


def _batch_matrix(kind: str, ks: np.ndarray, t: float) -> np.ndarray:
    """Balanced matrices ``B A B^{-1}`` for every wavenumber, shape ``(K, n, n)``."""
    if dimension(kind) == 3:
        base = _KSF if kind == "ksf1d" else _KSF_GOOD
        return -1j * ks[:, None, None] * base
    scale = np.maximum(ks, 1.0)
    A = np.stack([mode_matrix(kind, 0.0, t)] * len(ks))
    A[:, 0, 1] = ks**2 / scale
    A[:, 1, 0] *= scale
    return A


def default_dt(k_max: float, T: float) -> float:
    return min(1e-3, 0.1 / (max(k_max, 1.0) * math.exp(T / 2)))


@dataclass
class Amplification:
    kind: str
    k: float
    T: float
    amplification: float
    euclidean: float
    log_amplification: float
    energy_ratio: float
    energy_violation: float
    overflow: bool


def _energy_form(Phi, weight, t):
    W = np.zeros(Phi.shape)
    W[:, 0, 0] = 1.0
    W[:, 1, 1] = math.exp(t) * weight
    return np.swapaxes(Phi, 1, 2) @ W @ Phi


def _integrate(kind: str, ks, T: float, dt: float):
    """RK4 for the balanced fundamental matrices of all modes at once."""
    ks = np.asarray(ks, dtype=float)
    n = dimension(kind)
    dtype = complex if n == 3 else float
    Phi = np.broadcast_to(np.eye(n, dtype=dtype), (len(ks), n, n)).copy()
    steps = max(1, math.ceil(T / dt - 1e-12))
    h = T / steps
    wellposed = kind == "ks_wellposed"
    weight = (ks / np.maximum(ks, 1.0)) ** 2
    worst = np.zeros(len(ks))
    overflow = np.zeros(len(ks), dtype=bool)
    t = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            A1 = _batch_matrix(kind, ks, t)
            Am = _batch_matrix(kind, ks, t + h / 2)
            A4 = _batch_matrix(kind, ks, t + h)
            k1 = A1 @ Phi
            k2 = Am @ (Phi + h / 2 * k1)
            k3 = Am @ (Phi + h / 2 * k2)
            k4 = A4 @ (Phi + h * k3)
            new = Phi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if wellposed:
                # weighted energy form Phi^T W Phi with W = diag(1, e^t (k/scale)^2)
                grow = _energy_form(new, weight, t + h) - _energy_form(Phi, weight, t)
                worst = np.maximum(worst, np.linalg.eigvalsh(grow)[:, -1])
            Phi = new
            t += h
            overflow |= ~np.all(np.isfinite(Phi), axis=(1, 2))
    return ks, Phi, worst, overflow


def mode_amplifications(kind: str, ks, T: float, dt: float | None = None) -> list[Amplification]:
    if T <= 0:
        raise ValueError("T must be positive")
    ks = np.asarray(ks, dtype=float)
    if dt is None:
        dt = default_dt(float(np.max(ks)), T)
    ks, Phi, worst, overflow = _integrate(kind, ks, T, dt)
    out = []
    for i, k in enumerate(ks):
        if overflow[i]:
            out.append(Amplification(kind, k, T, math.inf, math.inf, math.inf, math.nan, math.nan, True))
            continue
        amp = float(np.linalg.norm(Phi[i], 2))
        B = _balance(kind, k)
        eu = float(np.linalg.norm(np.linalg.inv(B) @ Phi[i] @ B, 2))
        if kind == "ks_wellposed":
            w = (k / max(k, 1.0)) ** 2
            form = _energy_form(Phi[i : i + 1], np.array([w]), T)[0]
            # initial form is diag(1, w); compare on its range
            if w > 0:
                D = np.diag([1.0, 1.0 / math.sqrt(w)])
                energy_ratio = float(np.linalg.eigvalsh(D @ form @ D)[-1])
            else:
                energy_ratio = float(form[0, 0])
            violation = float(worst[i])
        else:
            energy_ratio = violation = math.nan
        out.append(Amplification(kind, k, T, amp, eu, math.log(amp), energy_ratio, violation, False))
    return out


def mode_amplification(kind: str, k: float, T: float, dt: float | None = None) -> Amplification:
    return mode_amplifications(kind, [k], T, dt)[0]


def illposedness_slope(kind: str, k_list, T: float, dt: float | None = None, norm: str = "balanced"):
    """Least-squares slope of log amplification against k, and r^2."""
    k_list = np.asarray(k_list, dtype=float)
    if len(k_list) < 4 or np.any(np.diff(k_list) <= 0):
        raise ValueError("need at least 4 increasing wavenumbers")
    amps = mode_amplifications(kind, k_list, T, dt)
    attr = "amplification" if norm == "balanced" else "euclidean"
    y = np.log([getattr(a, attr) for a in amps])
    if kind in ILLPOSED and np.any(np.diff(y) <= 0):
        raise NonMonotoneError("non-monotone amplification; T may be too small")
    slope, intercept = np.polyfit(k_list, y, 1)
    fit = slope * k_list + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


def wkb_slope(T: float) -> float:
    """Growth exponent per unit k for the sign-flipped system: int_0^T e^{s/2} ds."""
    return 2.0 * (math.exp(T / 2) - 1.0)


def good_variable_transform(v) -> np.ndarray:
    return GOOD_TRANSFORM @ np.asarray(v)


def inverse_good_variable_transform(w) -> np.ndarray:
    w = np.asarray(w)
    return np.array([w[0] - w[2], w[1] + w[2], w[2]])


def write_linear_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "k", "T", "log_amplification", "energy_ratio"])
        for a in rows:
            w.writerow([a.kind, f"{a.k:.17g}", f"{a.T:.17g}", f"{a.log_amplification:.17g}", f"{a.energy_ratio:.17g}"])
