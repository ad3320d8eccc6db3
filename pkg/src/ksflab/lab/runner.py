"""Run orchestration: one trajectory per scenario, and order-stable sweeps."""
from __future__ import annotations

import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..diagnostics import DiagnosticsError, compute_record, fit_blowup_rate
from ..models import NonfiniteError, State
from ..timestep import cfl_dt, step
from .scenario import Scenario

NEG_DEGRADED = -1e-10
NEG_ABORT = -1e-6

T_END = "t_end"
BLOWUP = "blow-up threshold"
VIOLATION = "invariant violation"
NONFINITE = "nonfinite"
ERROR = "error"


@dataclass
class RunReport:
    name: str
    config_hash: str
    final_t: float
    termination: str
    columns: list
    records: list
    fit: Optional[tuple] = None
    tags: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    steps: int = 0
    final_state: Optional[State] = None
    message: str = ""

    def series(self, column: str) -> np.ndarray:
        return np.array([r[column] for r in self.records])


def _finite(s: State) -> bool:
    arrays = [s.rho, s.c] + ([] if s.u is None else [s.u])
    return all(np.all(np.isfinite(a)) for a in arrays)


def _fit(sc: Scenario, records, columns) -> Optional[tuple]:
    if sc.diagnostics.x0 is None or "C1" not in columns:
        return None
    good = [r for r in records if r["tail_c"] <= sc.tail_limit and r["tail_rho"] <= sc.tail_limit]
    if len(good) < 3:
        return None
    t = np.array([r["t"] for r in good])
    C = np.array([r["C1"] for r in good])
    # keep the trailing strictly increasing stretch
    start = len(C) - 1
    while start > 0 and C[start - 1] < C[start]:
        start -= 1
    window = min(sc.fit_window, len(C) - start)
    if window < 3:
        return None
    try:
        return fit_blowup_rate(t, C, window)
    except DiagnosticsError:
        return None


def run_scenario(sc: Scenario, keep_state: bool = True) -> RunReport:
    model, stepper, spec = sc.model, sc.stepper, sc.diagnostics
    columns = spec.columns(sc.grid.dim, model.include_fluid)
    s = sc.initial.copy()
    records = [compute_record(s, model, spec)]
    warnings: list[str] = []
    termination, message = T_END, ""
    next_record = sc.record_interval
    near_level = sc.near_fraction * stepper.abort_threshold
    steps = 0
    degraded = clamped = False
    try:
        while s.t < stepper.t_end - 1e-13:
            dt, warned = cfl_dt(s, model, stepper)
            if warned and not clamped:
                warnings.append(f"dt clamped at dt_min near t={s.t:.6g}")
                clamped = True
            monitor = records[-1]["monitor"]
            every_step = monitor >= near_level
            dt = min(dt, stepper.t_end - s.t)
            if not every_step:
                dt = min(dt, next_record - s.t)
            s = step(s, dt, model, stepper)
            steps += 1
            if not _finite(s):
                termination = NONFINITE
                break
            low = min(float(np.min(s.rho)), float(np.min(s.c)))
            if low < NEG_ABORT:
                records.append(compute_record(s, model, spec))
                termination = VIOLATION
                message = f"negative undershoot {low:.3g}"
                break
            if low < NEG_DEGRADED and not degraded:
                warnings.append(f"degraded: undershoot {low:.3g} at t={s.t:.6g}")
                degraded = True
            hit_mark = abs(s.t - next_record) <= 1e-12 * max(1.0, next_record) or s.t >= next_record
            at_end = s.t >= stepper.t_end - 1e-13
            if every_step or hit_mark or at_end:
                rec = compute_record(s, model, spec)
                if not (math.isfinite(rec["monitor"]) and math.isfinite(rec["mass"])):
                    termination = NONFINITE
                    break
                records.append(rec)
                while next_record <= s.t + 1e-12:
                    next_record += sc.record_interval
                if rec["monitor"] >= stepper.abort_threshold:
                    termination = BLOWUP
                    break
    except NonfiniteError as exc:
        termination, message = NONFINITE, str(exc)
    except Exception as exc:  # isolate anything unexpected as a structured outcome
        termination = ERROR
        message = "".join(traceback.format_exception_only(type(exc), exc)).strip()
    if termination == NONFINITE and message == "":
        message = "blow-up reached: nonfinite fields"
    fit = _fit(sc, records, columns)
    return RunReport(
        name=sc.name,
        config_hash=sc.config_hash,
        final_t=float(s.t),
        termination=termination,
        columns=columns,
        records=records,
        fit=fit,
        tags=list(sc.tags),
        warnings=warnings,
        steps=steps,
        final_state=s if keep_state else None,
        message=message,
    )


def _run_raw(args):
    raw, seed, n = args
    from .scenario import from_dict

    try:
        sc = from_dict(raw, seed=seed, n=n)
    except Exception as exc:
        return RunReport(raw.get("name", "scenario"), "", 0.0, ERROR, [], [], message=str(exc))
    return run_scenario(sc, keep_state=False)


def sweep(scenarios: list[Scenario], parallelism: int = 1) -> list[RunReport]:
    """Run every scenario; results keep the input order whatever the scheduling."""
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    if not scenarios:
        return []
    jobs = [(sc.raw, None, None) for sc in scenarios]
    if parallelism == 1:
        return [_run_raw(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_run_raw, jobs))
