"""Scenario files: YAML documents describing model, grid, stepper, initial data and diagnostics."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .. import grid as G
from ..diagnostics import DiagnosticsSpec, ratio_bounds
from ..models import CoefficientSpec, ConfigError, ModelConfig, State, leray_project, validate_config
from ..timestep import StepperConfig

HYPOTHESES = ("positive", "ratio", "vanishing", "none")
FATAL_PREFIXES = ("negative viscosity", "dim must", "fluid coupling", "eps_floor")
VIOLATING = "hypothesis-violating"


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    raw: dict
    grid: G.Grid
    model: ModelConfig
    stepper: StepperConfig
    diagnostics: DiagnosticsSpec
    initial: State
    hypothesis: str = "none"
    record_interval: float = 0.05
    near_fraction: float = 0.5
    fit_window: int = 20
    tail_limit: float = 1e-6
    seed: int = 0
    tags: list = field(default_factory=list)
    problems: list = field(default_factory=list)
    snapshot: bool = False

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha1(blob.encode()).hexdigest()


# ---------------------------------------------------------------- generators


def _axes_sum(grid: G.Grid, fn, x0):
    x0 = np.broadcast_to(np.asarray(x0 if x0 is not None else 0.0, dtype=float), (grid.dim,))
    return sum(fn(grid.coords[i] - x0[i]) for i in range(grid.dim))


def _cos_well(grid, x0):
    return _axes_sum(grid, lambda y: 1.0 - np.cos(y), x0)


def _random_smooth(grid: G.Grid, rng: np.random.Generator, kmax: int) -> np.ndarray:
    kmax = max(1, min(kmax, grid.n // 8))
    out = np.zeros(grid.shape)
    for kvec in np.ndindex(*([2 * kmax + 1] * grid.dim)):
        kv = [k - kmax for k in kvec]
        if not any(kv):
            continue
        a, b = rng.standard_normal(2) / (1.0 + float(np.dot(kv, kv)))
        phase = sum(kv[i] * grid.coords[i] for i in range(grid.dim))
        out += a * np.cos(phase) + b * np.sin(phase)
    return out


def generate(grid: G.Grid, spec, rng: np.random.Generator, others: dict) -> np.ndarray:
    """Evaluate one scalar initial-data generator."""
    if isinstance(spec, (int, float)):
        return np.full(grid.shape, float(spec))
    spec = dict(spec)
    kind = spec.pop("generator")
    if kind == "constant":
        return np.full(grid.shape, float(spec.get("value", 0.0)))
    if kind == "trig":
        out = np.full(grid.shape, float(spec.get("mean", 0.0)))
        for term in spec.get("terms", []):
            amp, *kv = term[: grid.dim + 1]
            phase = term[grid.dim + 1] if len(term) > grid.dim + 1 else 0.0
            out = out + amp * np.cos(sum(kv[i] * grid.coords[i] for i in range(grid.dim)) + phase)
        return out
    if kind == "quadratic_vanishing":
        # 2 R0 sum_i (1 - cos(x_i - x0_i)): second derivative 2 R0 at x0
        return 2.0 * float(spec["R0"]) * _cos_well(grid, spec.get("x0"))
    if kind == "quadratic_peak":
        return float(spec.get("top", 1.0)) - 2.0 * float(spec["C0"]) * _cos_well(grid, spec.get("x0"))
    if kind == "sin_power":
        # offset + amp * sum_i sin^{2p}((x_i - x0_i)/2): vanishing order 2p at x0
        p = float(spec["p"])
        base = _axes_sum(grid, lambda y: (0.5 * (1.0 - np.cos(y))) ** p, spec.get("x0"))
        return float(spec.get("offset", 0.0)) + float(spec.get("amp", 1.0)) * base
    if kind == "ratio_matched":
        ref = others[spec.get("of", "c")]
        return float(spec.get("A", 1.0)) * np.clip(ref, 0.0, None) ** float(spec.get("delta", 1.0))
    if kind == "random_smooth":
        field_ = _random_smooth(grid, rng, int(spec.get("kmax", grid.n // 8)))
        span = float(np.ptp(field_)) or 1.0
        field_ = (field_ - field_.min()) / span
        return float(spec.get("floor", 0.5)) + float(spec.get("amplitude", 1.0)) * field_
    raise ScenarioError(f"unknown generator {kind!r}")


def generate_velocity(grid: G.Grid, spec, rng) -> Optional[np.ndarray]:
    if spec is None:
        return None
    spec = dict(spec)
    kind = spec.pop("generator", "zero")
    if kind == "zero":
        return np.zeros((grid.dim,) + grid.shape)
    if grid.dim == 1:
        # divergence-free in one dimension means spatially constant
        return np.full((1,) + grid.shape, float(spec.get("value", 0.0)))
    if kind == "stream":
        # u = (-d_y psi, d_x psi) with psi = amp * sin(kx x) sin(ky y)
        amp = float(spec.get("amp", 0.1))
        kx, ky = spec.get("k", [1, 1])
        psi = amp * np.sin(kx * grid.coords[0]) * np.sin(ky * grid.coords[1])
    elif kind == "random_divfree":
        psi = float(spec.get("amp", 0.1)) * _random_smooth(grid, rng, int(spec.get("kmax", 3)))
    else:
        raise ScenarioError(f"unknown velocity generator {kind!r}")
    u = np.stack([-G.derivative(grid, psi, (0, 1)), G.derivative(grid, psi, (1, 0))])
    return leray_project(u, grid)


# ---------------------------------------------------------------- loading


def _matrix(value, dim):
    if value is None:
        return None
    return np.asarray(value, dtype=float).reshape(dim, dim)


def from_dict(raw: dict, seed: Optional[int] = None, n: Optional[int] = None) -> Scenario:
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw["seed"] = int(seed)
    if n is not None:
        raw.setdefault("grid", {})["n"] = int(n)
    name = raw.get("name") or "scenario"
    seed_ = int(raw.get("seed", 0))
    rng = np.random.default_rng(seed_)

    gcfg = raw.get("grid", {})
    grid = G.make_grid(int(raw.get("model", {}).get("dim", 1)), int(gcfg.get("n", 64)), float(gcfg.get("length", 2 * math.pi)))

    mcfg = dict(raw.get("model", {}))
    phi = mcfg.pop("phi", None)
    model = ModelConfig(
        dim=grid.dim,
        D_rho=float(mcfg.get("D_rho", 0.0)),
        D_c=float(mcfg.get("D_c", 0.0)),
        D_u=float(mcfg.get("D_u", 0.0)),
        chi=CoefficientSpec.from_dict(mcfg.get("chi", 1.0)),
        k=CoefficientSpec.from_dict(mcfg.get("k", {"kind": "power", "value": 1.0, "gamma": 1.0})),
        phi=None if phi is None else generate(grid, phi, rng, {}),
        S=_matrix(mcfg.get("S"), grid.dim),
        include_fluid=bool(mcfg.get("include_fluid", False)),
        dealias=bool(mcfg.get("dealias", True)),
        eps_floor=float(mcfg.get("eps_floor", 1e-12)),
    )

    scfg = {k: v for k, v in raw.get("stepper", {}).items()}
    for key in ("cfl_number", "dt_min", "dt_max", "t_end", "abort_threshold"):
        if key in scfg:
            scfg[key] = float(scfg[key])
    stepper = StepperConfig(**scfg)

    dcfg = dict(raw.get("diagnostics", {}))
    if "energy_orders" in dcfg:
        dcfg["energy_orders"] = tuple(int(m) for m in dcfg["energy_orders"])
    if dcfg.get("x0") is not None:
        dcfg["x0"] = tuple(int(i) for i in dcfg["x0"])
    diagnostics = DiagnosticsSpec(**dcfg)

    init = raw.get("initial", {})
    others = {}
    order = sorted(("rho", "c"), key=lambda k: 1 if _refers(init.get(k)) else 0)
    for key in order:
        if key not in init:
            raise ScenarioError(f"initial data for {key} missing")
        others[key] = generate(grid, init[key], rng, others)
    u = generate_velocity(grid, init.get("u"), rng) if model.include_fluid else None
    state = State(grid, 0.0, others["rho"], others["c"], u)

    rec = raw.get("recording", {})
    sc = Scenario(
        name=name,
        raw=raw,
        grid=grid,
        model=model,
        stepper=stepper,
        diagnostics=diagnostics,
        initial=state,
        hypothesis=raw.get("hypothesis", "none"),
        record_interval=float(rec.get("interval", 0.05)),
        near_fraction=float(rec.get("near_fraction", 0.5)),
        fit_window=int(rec.get("fit_window", 20)),
        tail_limit=float(rec.get("tail_limit", 1e-6)),
        seed=seed_,
        tags=list(raw.get("tags", [])),
        snapshot=bool(raw.get("snapshot", False)),
    )
    if sc.hypothesis not in HYPOTHESES:
        raise ScenarioError(f"hypothesis must be one of {HYPOTHESES}")
    check_hypotheses(sc)
    return sc


def _refers(spec) -> bool:
    return isinstance(spec, dict) and spec.get("generator") == "ratio_matched"


def load(path, seed: Optional[int] = None, n: Optional[int] = None) -> Scenario:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: expected a mapping at top level")
    raw.setdefault("name", path.stem)
    return from_dict(raw, seed=seed, n=n)


def check_hypotheses(sc: Scenario) -> list[str]:
    """Record every violated hypothesis on the scenario and tag it.

    Structural errors (negative viscosity, bad dimension) raise instead,
    since such a scenario cannot be run at all.
    """
    problems = []
    try:
        validate_config(sc.model, sc.initial)
    except ConfigError as exc:
        fatal = [e for e in exc.errors if e.startswith(FATAL_PREFIXES)]
        if fatal:
            raise ScenarioError("; ".join(fatal)) from exc
        problems += exc.errors
    s = sc.initial
    if sc.hypothesis == "positive":
        if np.min(s.rho) <= 0:
            problems.append("rho0 not bounded below by a positive constant")
        if np.min(s.c) <= 0:
            problems.append("c0 not bounded below by a positive constant")
    elif sc.hypothesis == "ratio":
        delta = sc.diagnostics.delta if sc.diagnostics.delta is not None else 1.0
        if np.min(s.c) < 0 or np.min(s.rho) < 0:
            problems.append("negative initial data")
        else:
            up, down = ratio_bounds(s, delta, sc.diagnostics.ratio_floor)
            if not (np.isfinite(up) and np.isfinite(down)) or max(up, down) > 1e6:
                problems.append("rho0/c0^delta not bounded above and below")
    elif sc.hypothesis == "vanishing":
        x0 = sc.diagnostics.x0
        if x0 is None:
            problems.append("vanishing scenario needs diagnostics.x0")
        else:
            if abs(s.rho[x0]) > 1e-12:
                problems.append("rho0 does not vanish at x0")
            H = np.array([[G.derivative(sc.grid, s.rho, _pair(sc.grid.dim, i, j))[x0] for j in range(sc.grid.dim)] for i in range(sc.grid.dim)])
            if np.min(np.linalg.eigvalsh(H)) <= 0:
                problems.append("rho0 zero at x0 is not quadratic")
            mask = np.ones(sc.grid.shape, dtype=bool)
            mask[x0] = False
            if np.min(s.rho[mask]) <= 0:
                problems.append("rho0 vanishes away from x0")
        if np.min(s.c) <= 0:
            problems.append("c0 not strictly positive")
    sc.problems = problems
    if problems and VIOLATING not in sc.tags:
        sc.tags.append(VIOLATING)
    return problems


def _pair(dim, i, j):
    idx = [0] * dim
    idx[i] += 1
    idx[j] += 1
    return tuple(idx)


def preset_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "presets"


def preset_paths() -> list[Path]:
    return sorted(preset_dir().glob("*.yaml"))
