"""Norms, energies and blow-up observables evaluated on a State."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import grid as G
from .grid import Grid
from .models import ModelConfig, State


class DiagnosticsError(ValueError):
    pass


# ---------------------------------------------------------------- basic norms


def sobolev_norm(grid: Grid, f: np.ndarray, m: int) -> float:
    if m < 0:
        raise ValueError("m must be nonnegative")
    total = sum(G.integrate(grid, G.tensor_norm_sq(grid, f, j)) for j in range(m + 1))
    return math.sqrt(total)


def _vector_tensor_sq(grid: Grid, v: np.ndarray, order: int) -> np.ndarray:
    return sum(G.tensor_norm_sq(grid, v[i], order) for i in range(v.shape[0]))


def winf_norm(grid: Grid, f: np.ndarray, k: int) -> float:
    """``sum_{j<=k} sup |grad^j f|`` for a scalar or vector field."""
    total = 0.0
    for j in range(k + 1):
        if f.ndim == grid.dim:
            sq = G.tensor_norm_sq(grid, f, j)
        else:
            sq = _vector_tensor_sq(grid, f, j)
        total += math.sqrt(float(np.max(sq)))
    return total


def hessian_opnorm(grid: Grid, c: np.ndarray) -> np.ndarray:
    """Pointwise spectral norm of the Hessian of c."""
    H = G.hessian(grid, c)
    if grid.dim == 1:
        return np.abs(H[0, 0])
    a, b, d = H[0, 0], H[0, 1], H[1, 1]
    return np.abs(0.5 * (a + d)) + np.sqrt(0.25 * (a - d) ** 2 + b**2)


def blowup_monitor(s: State) -> tuple[float, float]:
    """(W^{2,inf}(c) + W^{1,inf}(rho) + W^{1,inf}(u), C^2 norm of c)."""
    grid = s.grid
    c2 = winf_norm(grid, s.c, 2)
    total = c2 + winf_norm(grid, s.rho, 1)
    if s.u is not None:
        total += winf_norm(grid, s.u, 1)
    return total, c2


# -------------------------------------------------------- good variables / energy


@dataclass
class GoodVariables:
    alpha: tuple
    R: np.ndarray
    F: np.ndarray


def _has_velocity(s: State) -> bool:
    return s.u is not None and bool(np.any(s.u != 0))


def good_variables(s: State, alpha, cfg: ModelConfig) -> GoodVariables:
    grid = s.grid
    alpha = tuple(alpha)
    P = G.derivative(grid, s.rho, alpha)
    f = s.f
    F = np.stack([G.derivative(grid, f[i], alpha) for i in range(grid.dim)])
    if not _has_velocity(s):
        return GoodVariables(alpha, P, F)
    kc = cfg.k(s.c)
    if np.min(kc) < cfg.eps_floor:
        raise DiagnosticsError("singular coefficient: k(c) below eps_floor with nonzero velocity")
    du = np.stack([G.derivative(grid, s.u[i], alpha) for i in range(grid.dim)])
    f_du = np.sum(f * du, axis=0)
    R = P + f_du / (kc + cfg.eps_floor)
    F = F - f * (f_du / (s.rho * kc + cfg.eps_floor))
    return GoodVariables(alpha, R, F)


def reconstruct(s: State, gv: GoodVariables, cfg: ModelConfig):
    """Invert good_variables: return (d^alpha rho, d^alpha f)."""
    if not _has_velocity(s):
        return gv.R.copy(), gv.F.copy()
    grid = s.grid
    kc = cfg.k(s.c)
    f = s.f
    du = np.stack([G.derivative(grid, s.u[i], gv.alpha) for i in range(grid.dim)])
    f_du = np.sum(f * du, axis=0)
    return gv.R - f_du / (kc + cfg.eps_floor), gv.F + f * (f_du / (s.rho * kc + cfg.eps_floor))


def _positivity_mask(s: State, cfg: ModelConfig) -> np.ndarray:
    mask = (s.c > cfg.eps_floor) & (s.rho > cfg.eps_floor)
    if not np.any(mask):
        raise DiagnosticsError("degenerate weight: empty positivity set")
    return mask


def energy_parts(s: State, m: int, cfg: ModelConfig, mask: Optional[np.ndarray] = None):
    """(R-part, F-part, u-part) of the order-m modified energy."""
    grid = s.grid
    if mask is None:
        mask = _positivity_mask(s, cfg)
    weight = np.where(mask, cfg.k(s.c) / cfg.chi(s.c), 0.0)
    rho_w = np.where(mask, s.rho, 0.0)
    r_part = f_part = u_part = 0.0
    for alpha in G.multi_indices(grid.dim, m):
        gv = good_variables(s, alpha, cfg)
        r_part += G.integrate(grid, weight * gv.R**2)
        f_part += G.integrate(grid, rho_w * np.sum(gv.F**2, axis=0))
        if s.u is not None:
            du = np.stack([G.derivative(grid, s.u[i], alpha) for i in range(grid.dim)])
            u_part += G.integrate(grid, np.sum(du**2, axis=0))
    return r_part, f_part, u_part


def modified_energy(s: State, m: int, cfg: ModelConfig) -> float:
    return float(sum(energy_parts(s, m, cfg)))


def z_functional(s: State, m: int, cfg: ModelConfig) -> float:
    inf_rho = float(np.min(s.rho))
    inf_c = float(np.min(s.c))
    if min(inf_rho, inf_c) <= cfg.eps_floor:
        raise DiagnosticsError("infimum too small for Z_m")
    mask = np.ones(s.grid.shape, dtype=bool)
    total = sum(sum(energy_parts(s, j, cfg, mask)) for j in range(m + 1))
    f_sup = math.sqrt(float(np.max(np.sum(s.f**2, axis=0))))
    return float(total + 1.0 / inf_rho + 1.0 / inf_c + f_sup)


# ------------------------------------------------------------ weighted norms


def weighted_X_norm(grid: Grid, g: np.ndarray, m: int, gamma: float, eps: float):
    """Parts ``[X_0, ..., X_m]`` of the self-weighted norm (squared) and their sum."""
    g = np.clip(grid.check_scalar(g), 0.0, None)
    base = g + eps
    parts = [G.integrate(grid, g ** (2.0 - gamma))]
    if m >= 1:
        grad_sq = G.tensor_norm_sq(grid, g, 1)
    for k in range(1, m + 1):
        top = G.integrate(grid, G.tensor_norm_sq(grid, g, k) / base**gamma)
        low = G.integrate(grid, grad_sq**k / base ** (2 * k + gamma - 2))
        parts.append(top + low)
    parts = np.array(parts)
    return parts, float(parts.sum())


def aitken_limit(seq) -> float:
    """Delta-squared extrapolation from the last three entries (last entry if fewer)."""
    seq = np.asarray(seq, dtype=float)
    if len(seq) < 3:
        return float(seq[-1])
    a, b, c = seq[-3:]
    denom = (c - b) - (b - a)
    if denom == 0:
        return float(c)
    return float(c - (c - b) ** 2 / denom)


def x_membership(grid: Grid, g: np.ndarray, m: int, gamma: float, zero, tol: float = 0.01,
                 eps_range=(0, 13)) -> dict:
    """Epsilon-decade sweep of the self-weighted norm for g vanishing at grid index ``zero``.

    The sweep stops where the grid no longer resolves {g ~ eps} (eps below 1e3 times
    g one cell from the zero) or where roundoff in the top derivative, measured
    by differentiating a shifted copy, would contribute 1e-4 of the norm. The limit of the
    successive decade ratios is estimated by Aitken extrapolation; the norm is
    taken to converge when that limit is within ``tol`` of 1.
    """
    g = grid.check_scalar(g)
    zero = tuple(zero)
    ref = weighted_X_norm(grid, g, m, gamma, 10.0 ** -eps_range[0])[1]
    # differentiating a shifted copy is exact in exact arithmetic, so the
    # discrepancy measures the roundoff of the top derivative
    alpha = G.unit(grid, 0, m)
    shifted = np.roll(G.derivative(grid, np.roll(g, 1, axis=0), alpha), -1, axis=0)
    noise = float(np.max(np.abs(G.derivative(grid, g, alpha) - shifted)))
    neighbour = tuple((i + 1) % grid.n if a == 0 else i for a, i in enumerate(zero))
    eps_values, totals = [], []
    for e in 10.0 ** -np.arange(eps_range[0], eps_range[1] + 1):
        if e < 1e3 * g[neighbour]:
            break
        if noise**2 * grid.cell_volume * np.count_nonzero(g <= e) / e**gamma > 1e-4 * ref:
            break
        eps_values.append(float(e))
        totals.append(weighted_X_norm(grid, g, m, gamma, e)[1])
    if len(totals) < 2:
        raise DiagnosticsError("epsilon window too narrow for this grid")
    ratios = np.array(totals[1:]) / np.array(totals[:-1])
    limit = aitken_limit(ratios)
    return {
        "eps": eps_values,
        "values": totals,
        "ratios": ratios,
        "limit": limit,
        "converged": abs(limit - 1.0) <= tol,
    }


def ratio_bounds(s: State, delta: float, floor: float = 1e-12) -> tuple[float, float]:
    mask = s.c > floor
    if not np.any(mask):
        raise DiagnosticsError("empty evaluation set for ratio bounds")
    cd = s.c[mask] ** delta
    rho = s.rho[mask]
    return float(np.max(rho / cd)), float(np.max(cd / (rho + floor)))


def y_norms(s: State, m: int) -> tuple[float, float]:
    grid = s.grid
    c = np.clip(s.c, 0.0, None)
    rho = np.clip(s.rho, 0.0, None)
    f = s.f
    yr = yf = 0.0
    for j in range(m + 1):
        yr += G.integrate(grid, c * G.tensor_norm_sq(grid, s.rho, j))
        yf += G.integrate(grid, rho * _vector_tensor_sq(grid, f, j))
    return math.sqrt(yr), math.sqrt(yf)


# ------------------------------------------------------- vanishing-point data


def taylor_coeffs(s: State, x0) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis ``C_i = -c_ii(x0)/2`` and ``R_i = rho_ii(x0)/2``."""
    grid = s.grid
    x0 = tuple(int(i) for i in x0)
    C = np.empty(grid.dim)
    R = np.empty(grid.dim)
    for axis in range(grid.dim):
        idx = G.unit(grid, axis, 2)
        C[axis] = -0.5 * G.derivative(grid, s.c, idx)[x0]
        R[axis] = 0.5 * G.derivative(grid, s.rho, idx)[x0]
    return C, R


def weight_equivalence_check(s: State, x0, a_low: float, r_low: float, K: float = 2.0) -> dict:
    """Both sides of the two-sided comparison between ``|x|/(1+|x|)`` and sqrt(rho).

    Returns the largest violations (positive means violated).
    """
    grid = s.grid
    center = np.array([grid.coords[i][tuple(x0)] for i in range(grid.dim)])
    r = G.torus_distance(grid, center)
    w = r / (1.0 + r)
    sq = np.sqrt(np.clip(s.rho, 0.0, None))
    lower = float(np.max(w - math.sqrt(1.0 / a_low + 1.0 / r_low) * sq))
    w2 = winf_norm(grid, s.rho, 2)
    upper = float(np.max(sq - K * math.sqrt(w2) * w))
    return {"lower_violation": lower, "upper_violation": upper, "W2": w2}


# ------------------------------------------------- top-order cancellation


def top_order_cancellation(s: State, m: int, cfg: ModelConfig, form: str = "dynamic") -> dict:
    """Discrete check of the cancellation between the two top-order pairings.

    With P = d^a rho, Q = d^a c, w = k(c) rho, summed over |a| = m:

    ``dynamic``:  A = -2 int w P (S:hess Q),  B = -2 sum_j s_jj int w d_jQ d_jP,
                  remainder L = 2 sum_j s_jj int d_j w P d_jQ,  A + B = L.
    ``rotation``: I = int w grad P . S grad Q,  II = -sum_j s_jj int w d_jQ d_jP,
                  remainder J = -sum_{i!=j} s_ij int d_i w P d_jQ,  I + II = J.
    """
    grid = s.grid
    S = cfg.S
    w = cfg.k(s.c) * s.rho
    gw = G.gradient(grid, w)
    terms = {"first": 0.0, "second": 0.0, "remainder": 0.0}
    for alpha in G.multi_indices(grid.dim, m):
        P = G.derivative(grid, s.rho, alpha)
        Q = G.derivative(grid, s.c, alpha)
        gP = G.gradient(grid, P)
        gQ = G.gradient(grid, Q)
        second = -sum(S[j, j] * G.integrate(grid, w * gQ[j] * gP[j]) for j in range(grid.dim))
        if form == "dynamic":
            H = G.hessian(grid, Q)
            SH = sum(S[i, j] * H[i, j] for i in range(grid.dim) for j in range(grid.dim))
            first = -2 * G.integrate(grid, w * P * SH)
            second = 2 * second
            rem = 2 * sum(S[j, j] * G.integrate(grid, gw[j] * P * gQ[j]) for j in range(grid.dim))
        elif form == "rotation":
            SgQ = np.einsum("ij,j...->i...", S, gQ)
            first = G.integrate(grid, w * np.sum(gP * SgQ, axis=0))
            rem = -sum(
                S[i, j] * G.integrate(grid, gw[i] * P * gQ[j])
                for i in range(grid.dim)
                for j in range(grid.dim)
                if i != j
            )
        else:
            raise ValueError(f"unknown form {form!r}")
        terms["first"] += first
        terms["second"] += second
        terms["remainder"] += rem
    residual = terms["first"] + terms["second"] - terms["remainder"]
    scale = abs(terms["first"]) + abs(terms["second"]) + abs(terms["remainder"])
    return {**terms, "residual": residual, "scale": scale}


# ------------------------------------------------------------ time series


def fit_blowup_rate(t, C, window: int) -> tuple[float, float]:
    """Fit ``1/C = kappa (T* - t)`` on the last ``window`` samples.

    Returns T* and the slope of log C against log(T* - t).
    """
    t = np.asarray(t, dtype=float)[-window:]
    C = np.asarray(C, dtype=float)[-window:]
    if len(t) < 3:
        raise ValueError("need at least 3 samples")
    if np.any(np.diff(C) <= 0) or np.any(C <= 0):
        raise DiagnosticsError("non-monotone series")
    b, a = np.polyfit(t, 1.0 / C, 1)
    T = -a / b
    gap = T - t
    if np.any(gap <= 0):
        return float(T), math.nan
    exponent = np.polyfit(np.log(gap), np.log(C), 1)[0]
    return float(T), float(exponent)


def infimum_rate_check(t, inf_rho, inf_c, bound_rho, bound_c, one_sided: bool = False) -> dict:
    """Worst ratio of |d/dt (1/inf)| to its bound, by central differences.

    ``bound_rho`` is sup|div(chi S grad c)| / inf rho and ``bound_c`` is
    sup(k(c) rho / c) / inf c, sampled with the infima. With diffusion the
    estimates are one-sided, so only growth of 1/inf is compared.
    """
    t = np.asarray(t, dtype=float)
    if len(t) < 3:
        raise ValueError("need at least 3 samples")
    out = {}
    for name, inf, bound in (("rho", inf_rho, bound_rho), ("c", inf_c, bound_c)):
        y = 1.0 / np.asarray(inf, dtype=float)
        rate = np.gradient(y, t)[1:-1]
        # uneven float spacing leaves roundoff-sized rates on frozen series
        rate[np.abs(rate) <= 64 * np.finfo(float).eps * np.max(np.abs(y)) / np.min(np.diff(t))] = 0.0
        if one_sided:
            rate = np.clip(rate, 0.0, None)
        b = np.asarray(bound, dtype=float)[1:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(b > 0, np.abs(rate) / b, np.where(np.abs(rate) > 0, np.inf, 0.0))
        out[name] = float(np.max(ratio))
    out["worst"] = max(out["rho"], out["c"])
    return out


# ------------------------------------------------------------ records


@dataclass(frozen=True)
class DiagnosticsSpec:
    energy_orders: tuple = (1, 2)
    z_order: Optional[int] = None
    x_order: Optional[int] = None
    gamma: float = 1.0
    y_order: Optional[int] = None
    delta: Optional[float] = None
    ratio_floor: float = 1e-8
    x0: Optional[tuple] = None
    eps: float = 1e-12

    def columns(self, dim: int, fluid: bool) -> list[str]:
        cols = [
            "t", "rho_sup", "rho_inf", "c_sup", "c_inf",
            "rho_W1", "c_W1", "c_W2", "monitor", "c_C2",
            "mass", "div_u", "u_W1",
            "div_flux_sup", "consumption_ratio_sup", "hess_c_sup",
            "tail_rho", "tail_c",
        ]
        for m in self.energy_orders:
            cols += [f"E{m}", f"E{m}_R", f"E{m}_F", f"E{m}_u"]
        if self.z_order is not None:
            cols.append(f"Z{self.z_order}")
        if self.x_order is not None:
            cols += [f"X{k}" for k in range(self.x_order + 1)]
        if self.y_order is not None:
            cols += ["Y_rho", "Y_f"]
        if self.delta is not None:
            cols += ["ratio_up", "ratio_down"]
        if self.x0 is not None:
            cols += [f"C{i + 1}" for i in range(dim)] + [f"R{i + 1}" for i in range(dim)]
            cols += ["rho_x0", "grad_rho_x0", "grad_c_x0"]
        return cols


@dataclass
class DiagnosticsRecord:
    values: dict = field(default_factory=dict)

    @property
    def t(self) -> float:
        return self.values["t"]

    def __getitem__(self, key):
        return self.values[key]

    def row(self, columns: Sequence[str]) -> list[float]:
        return [self.values[c] for c in columns]


def _safe(fn, *args):
    try:
        return fn(*args)
    except DiagnosticsError:
        return math.nan


def compute_record(s: State, cfg: ModelConfig, spec: DiagnosticsSpec) -> DiagnosticsRecord:
    grid = s.grid
    v = {"t": float(s.t)}
    v["rho_sup"] = float(np.max(s.rho))
    v["rho_inf"] = float(np.min(s.rho))
    v["c_sup"] = float(np.max(s.c))
    v["c_inf"] = float(np.min(s.c))
    v["rho_W1"] = winf_norm(grid, s.rho, 1)
    v["c_W1"] = winf_norm(grid, s.c, 1)
    monitor, c2 = blowup_monitor(s)
    v["c_W2"] = c2
    v["monitor"] = monitor
    v["c_C2"] = c2
    v["mass"] = G.integrate(grid, s.rho)
    if s.u is not None:
        v["div_u"] = float(np.max(np.abs(G.divergence(grid, s.u))))
        v["u_W1"] = winf_norm(grid, s.u, 1)
    else:
        v["div_u"] = 0.0
        v["u_W1"] = 0.0
    sgrad = np.einsum("ij,j...->i...", cfg.S, s.f)
    v["div_flux_sup"] = float(np.max(np.abs(G.divergence(grid, cfg.chi(s.c) * sgrad))))
    pos = s.c > spec.eps
    v["consumption_ratio_sup"] = (
        float(np.max(cfg.k(s.c[pos]) * s.rho[pos] / s.c[pos])) if np.any(pos) else math.nan
    )
    v["hess_c_sup"] = float(np.max(hessian_opnorm(grid, s.c)))
    v["tail_rho"] = G.spectral_tail(grid, s.rho)
    v["tail_c"] = G.spectral_tail(grid, s.c)
    for m in spec.energy_orders:
        try:
            parts = energy_parts(s, m, cfg)
        except DiagnosticsError:
            parts = (math.nan,) * 3
        v[f"E{m}"] = float(sum(parts))
        v[f"E{m}_R"], v[f"E{m}_F"], v[f"E{m}_u"] = (float(p) for p in parts)
    if spec.z_order is not None:
        v[f"Z{spec.z_order}"] = _safe(z_functional, s, spec.z_order, cfg)
    if spec.x_order is not None:
        parts, _ = weighted_X_norm(grid, s.c, spec.x_order, spec.gamma, spec.eps)
        for k, p in enumerate(parts):
            v[f"X{k}"] = float(p)
    if spec.y_order is not None:
        v["Y_rho"], v["Y_f"] = y_norms(s, spec.y_order)
    if spec.delta is not None:
        try:
            up, down = ratio_bounds(s, spec.delta, spec.ratio_floor)
        except DiagnosticsError:
            up = down = math.nan
        v["ratio_up"], v["ratio_down"] = up, down
    if spec.x0 is not None:
        C, R = taylor_coeffs(s, spec.x0)
        for i in range(grid.dim):
            v[f"C{i + 1}"] = float(C[i])
            v[f"R{i + 1}"] = float(R[i])
        x0 = tuple(spec.x0)
        v["rho_x0"] = float(abs(s.rho[x0]))
        v["grad_rho_x0"] = float(np.max(np.abs(G.gradient(grid, s.rho)[(slice(None),) + x0])))
        v["grad_c_x0"] = float(np.max(np.abs(s.f[(slice(None),) + x0])))
    return DiagnosticsRecord(v)
