"""Weighted Gagliardo-Nirenberg-Sobolev functionals and their numerical checks.

The implied constants are not known in closed form, so chain checks compare
against an empirical table built by randomized sweeps (see ``build_table``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import grid as G
from .grid import Grid

TABLE_VERSION = 1
HEADROOM = 1.5


class DegenerateInstance(ValueError):
    pass


@dataclass
class GnsReport:
    m: int
    gamma: float
    parts: tuple
    lhs: float
    I_values: dict
    rhs: float
    ratio: float
    eps: float
    holds: Optional[bool] = None
    constant: Optional[float] = None


def grad_power(grid: Grid, g: np.ndarray, ell) -> np.ndarray:
    """``|grad^ell g|`` for an integer order, ``|d^ell g|`` for a multi-index."""
    if isinstance(ell, (int, np.integer)):
        return np.sqrt(G.tensor_norm_sq(grid, g, int(ell)))
    return np.abs(G.derivative(grid, g, ell))


def _order(ell) -> int:
    return int(ell) if isinstance(ell, (int, np.integer)) else int(sum(ell))


def gns_I(grid: Grid, g, ell: int, m: int, gamma: float, eps: float) -> float:
    if not 1 <= ell <= m:
        raise ValueError("need 1 <= ell <= m")
    base = np.clip(grid.check_scalar(g), 0.0, None) + eps
    p = 2.0 * m / ell
    return G.integrate(grid, grad_power(grid, g, ell) ** p / base ** (p - 2.0 + gamma))


def holder_step_check(grid: Grid, g, parts, m: int, gamma: float, eps: float, slack: float = 1e-9) -> GnsReport:
    """``int prod |d^{l_i} g|^2 / g^{2k-2+gamma} <= prod I_{l_i}^{|l_i|/m}``."""
    parts = tuple(parts)
    orders = [_order(ell) for ell in parts]
    if sum(orders) != m or min(orders) < 1:
        raise ValueError(f"tuple orders {orders} do not sum to m={m}")
    base = np.clip(grid.check_scalar(g), 0.0, None) + eps
    k = len(parts)
    integrand = np.ones(grid.shape)
    for ell in parts:
        integrand = integrand * grad_power(grid, g, ell) ** 2
    lhs = G.integrate(grid, integrand / base ** (2 * k - 2 + gamma))
    I_values = {o: gns_I(grid, g, o, m, gamma, eps) for o in sorted(set(orders))}
    rhs = 1.0
    for o in orders:
        rhs *= I_values[o] ** (o / m)
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    holds = lhs <= rhs * (1 + slack) + 1e-300
    return GnsReport(m, gamma, parts, lhs, I_values, rhs, ratio, eps, holds, 1.0)


def gns_chain_check(grid: Grid, g, m: int, gamma: float, eps: float, constant: Optional[float] = None) -> GnsReport:
    """Worst ``I_l / (I_1 + I_m)`` over 1 < l < m."""
    I_values = {ell: gns_I(grid, g, ell, m, gamma, eps) for ell in range(1, m + 1)}
    rhs = I_values[1] + I_values[m]
    inner = [I_values[ell] for ell in range(2, m)]
    lhs = max(inner) if inner else 0.0
    if rhs == 0:
        if lhs > 0:
            raise DegenerateInstance("inequality instance degenerate")
        ratio = 0.0
    else:
        ratio = lhs / rhs
    holds = None if constant is None else ratio <= constant
    return GnsReport(m, gamma, tuple(range(2, m)), lhs, I_values, rhs, ratio, eps, holds, constant)


def m2_chain_check(grid: Grid, c, eps: float = 0.0, slack: float = 1e-9) -> dict:
    """The m = 2 chain ``2X <= mid <= X + Q/4`` with
    X = int |grad c|^4/c^3, mid = int |grad c|^2 lap c / c^2, Q = int (lap c)^2/c.
    """
    base = grid.check_scalar(c) + eps
    g2 = G.tensor_norm_sq(grid, c, 1)
    lap = G.laplacian(grid, c)
    X = G.integrate(grid, g2**2 / base**3)
    mid = G.integrate(grid, g2 * lap / base**2)
    Q = G.integrate(grid, lap**2 / base)
    lhs2, rhs = 2 * X, X + 0.25 * Q
    scale = abs(lhs2) + abs(mid) + abs(rhs)
    tol = slack * max(scale, 1e-300)
    out = {
        "lhs2": lhs2,
        "mid": mid,
        "rhs": rhs,
        "lower_holds": lhs2 <= mid + tol,
        "upper_holds": mid <= rhs + tol,
        "identity_residual": X - (-mid + 3 * X),
    }
    if grid.dim == 1:
        # in one dimension integration by parts gives X = (3/2) mid
        out["ibp_residual_1d"] = X - 1.5 * mid
    out["holds"] = out["lower_holds"] and out["upper_holds"]
    return out


def hardy_weight(grid: Grid, center=None) -> np.ndarray:
    if center is None:
        center = [grid.length / 2] * grid.dim
    r = G.torus_distance(grid, center)
    return r / (1.0 + r)


def hardy_variant_check(grid: Grid, g, center=None, constant: Optional[float] = None) -> dict:
    """``||g|| <= K (||w g|| + ||w grad g||)`` with ``w = |x|/(1+|x|)``."""
    g = grid.check_scalar(g)
    w = hardy_weight(grid, center)
    lhs = math.sqrt(G.integrate(grid, g**2))
    grad_sq = G.tensor_norm_sq(grid, g, 1)
    rhs = math.sqrt(G.integrate(grid, (w * g) ** 2)) + math.sqrt(G.integrate(grid, w**2 * grad_sq))
    ratio = lhs / rhs if rhs > 0 else 0.0
    holds = None if constant is None else lhs <= constant * rhs
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio, "holds": holds}


def linfty_orders(dim: int, k: int) -> range:
    return range(1, dim // 2 + 2 + k)


def linfty_weighted_check(grid: Grid, c, k: int, gamma: float, eps: float, constant: Optional[float] = None) -> dict:
    """Squared pointwise weighted gradient power against the sum of X-type functionals.

    lhs = (sup |grad c|^k / c^{k-1+gamma/2})^2, which scales like c^{2-gamma}
    as every term of the right side does.
    """
    base = np.clip(grid.check_scalar(c), 0.0, None) + eps
    grad = np.sqrt(G.tensor_norm_sq(grid, c, 1))
    lhs = float(np.max(grad**k / base ** (k - 1 + gamma / 2))) ** 2
    grad_sq = grad**2
    rhs = 0.0
    for m in linfty_orders(grid.dim, k):
        rhs += G.integrate(grid, G.tensor_norm_sq(grid, c, m) / base**gamma)
        rhs += G.integrate(grid, grad_sq**m / base ** (2 * m - 2 + gamma))
    ratio = lhs / rhs if rhs > 0 else 0.0
    holds = None if constant is None else ratio <= constant
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio, "holds": holds}


# ------------------------------------------------------------------ corpus


def random_trig_poly(grid: Grid, rng: np.random.Generator, degree: int, floor: float = 0.05) -> np.ndarray:
    """Random real trigonometric polynomial, shifted so its minimum is ``floor`` times its range.

    Coefficients decay like 1/(1+|k|) so higher modes do not dominate.
    """
    degree = max(1, min(degree, grid.n // 4))
    out = np.zeros(grid.shape)
    ks = range(-degree, degree + 1)
    for kvec in np.ndindex(*([2 * degree + 1] * grid.dim)):
        kv = [ks[i] for i in kvec]
        if not any(kv):
            continue
        amp = rng.standard_normal(2) / (1.0 + math.hypot(*kv))
        phase = sum(kv[i] * grid.coords[i] for i in range(grid.dim))
        out += amp[0] * np.cos(phase) + amp[1] * np.sin(phase)
    span = np.ptp(out)
    if span == 0:
        return np.ones(grid.shape)
    return (out - out.min()) / span + floor


def integer_partitions(m: int, largest: Optional[int] = None):
    """Partitions of m into positive parts, non-increasing."""
    if largest is None:
        largest = m
    if m == 0:
        yield ()
        return
    for first in range(min(m, largest), 0, -1):
        for rest in integer_partitions(m - first, first):
            yield (first,) + rest


def bump(grid: Grid, width: float, center=None) -> np.ndarray:
    if center is None:
        center = [grid.length / 2] * grid.dim
    r = G.torus_distance(grid, center)
    return np.exp(-0.5 * (r / width) ** 2)


# ------------------------------------------------------------ constant table


def _key(kind: str, **params) -> str:
    return kind + "." + ".".join(f"{k}{v:g}" if isinstance(v, float) else f"{k}{v}" for k, v in params.items())


GNS_KEYS = [(m, gamma, d) for d in (1, 2) for m in (3, 4, 5) for gamma in (0.5, 1.0, 1.5)]
LINFTY_KEYS = [(k, gamma, d) for d in (1, 2) for k in (1, 2) for gamma in (1.0,)]


def sweep_raw(seed: int, samples: int = 400, n1: int = 128, n2: int = 32) -> dict:
    """Raw maxima of every tabulated ratio over one random corpus."""
    rng = np.random.default_rng(seed)
    grids = {1: G.make_grid(1, n1), 2: G.make_grid(2, n2)}
    # floors are stratified so every corpus reaches the near-degenerate end
    floors = np.geomspace(0.05, 1.0, 8)
    max_degree = {1: 4, 2: 2}
    corpus = {
        d: [
            random_trig_poly(grids[d], rng, int(rng.integers(1, max_degree[d] + 1)), float(floors[i % 8]))
            for i in range(samples)
        ]
        for d in (1, 2)
    }
    out = {}
    for m, gamma, d in GNS_KEYS:
        out[_key("gns", m=m, gamma=gamma, d=d)] = max(
            gns_chain_check(grids[d], g, m, gamma, 0.0).ratio for g in corpus[d]
        )
    for k, gamma, d in LINFTY_KEYS:
        out[_key("linfty", k=k, gamma=gamma, d=d)] = max(
            linfty_weighted_check(grids[d], g, k, gamma, 0.0)["ratio"] for g in corpus[d]
        )
    widths = np.linspace(0.05, 1.0, 20)
    for d in (1, 2):
        gh = G.make_grid(d, 256 if d == 1 else 64)
        out[_key("hardy", d=d)] = max(hardy_variant_check(gh, bump(gh, w))["ratio"] for w in widths)
    return out


def build_table(seed: int = 0, samples: int = 400, headroom: float = HEADROOM) -> dict:
    return {key: headroom * value for key, value in sweep_raw(seed, samples).items()}


def save_table(table: dict, path, seed: int, samples: int) -> None:
    lines = [
        "# empirical constants for weighted GNS checks",
        f"version = {TABLE_VERSION}",
        f"seed = {seed}",
        f"samples = {samples}",
        f"headroom = {HEADROOM:g}",
    ]
    lines += [f"{key} = {table[key]:.17g}" for key in sorted(table)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_table(text: str) -> dict:
    meta, table = {}, {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if "." in key:
            table[key] = float(value)
        else:
            meta[key] = value
    if int(meta.get("version", -1)) != TABLE_VERSION:
        raise ValueError(f"unsupported constant table version {meta.get('version')}")
    return table


def load_table(path=None) -> dict:
    if path is None:
        text = resources.files("ksflab").joinpath("data/constants.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_table(text)


def lookup(table: dict, kind: str, **params) -> float:
    return table[_key(kind, **params)]
