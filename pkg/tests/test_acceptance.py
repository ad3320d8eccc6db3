"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also repeated in the terminal summary.
"""
import copy
import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from ksflab import diagnostics as D
from ksflab import grid as G
from ksflab import inequalities as ineq
from ksflab import linear as L
from ksflab.lab.export import csv_text
from ksflab.lab.runner import BLOWUP, T_END, run_scenario, sweep
from ksflab.lab.scenario import VIOLATING, from_dict, load, preset_dir, preset_paths
from ksflab.models import validate_config
from ksflab.ode import (
    BlowupOde,
    CertificateState,
    blowup_time,
    certificate_evolve,
    quadrature_blowup_time,
    trajectory,
)
from ksflab.timestep import integrate_to

_RUNS = {}


def preset_run(name):
    """Run a preset once per session; returns (scenario, report, seconds)."""
    if name not in _RUNS:
        sc = load(preset_dir() / f"{name}.yaml")
        start = time.perf_counter()
        report = run_scenario(sc)
        _RUNS[name] = (sc, report, time.perf_counter() - start)
    return _RUNS[name]


def validated_presets():
    names = []
    for path in preset_paths():
        sc = load(path)
        if VIOLATING not in sc.tags:
            names.append(path.stem)
    return names


def conservation(report) -> dict:
    t = report.series("t")
    mass = report.series("mass")
    csup = report.series("c_sup")
    growth = np.diff(csup) / np.diff(t)
    return {
        "mass_drift": float(np.max(np.abs(mass - mass[0]))),
        "csup_growth": float(max(np.max(growth), 0.0)) if len(t) > 1 else 0.0,
        "min_rho": float(np.min(report.series("rho_inf"))),
        "min_c": float(np.min(report.series("c_inf"))),
        "div_u": float(np.max(report.series("div_u"))),
    }


def conservation_ok(c: dict) -> bool:
    return (
        c["mass_drift"] <= 1e-10
        and c["csup_growth"] <= 1e-8
        and c["min_rho"] >= -1e-8
        and c["min_c"] >= -1e-8
        and c["div_u"] <= 1e-8
    )


def compare_until(t, tracked, ode, init, stop):
    """Max relative error of tracked columns against the ODE, up to the first sample where ``stop`` holds."""
    hit = np.nonzero(stop)[0]
    end = int(hit[0]) + 1 if hit.size else len(t)
    Y = trajectory(ode, init, t[:end])
    err = np.max(np.abs(tracked[:end] - Y) / np.abs(Y))
    return float(err), bool(hit.size), float(t[end - 1])


def test_c01_ode_exactness(criterion):
    start = time.perf_counter()
    res = blowup_time(BlowupOde(), [1.0, 1.0])
    elapsed = time.perf_counter() - start
    oracle, _ = quad(lambda C: 1.0 / (3 * C**2 - 2), 1.0, np.inf, epsabs=1e-14, epsrel=1e-13)
    err = abs(res.T_star - oracle)
    ok = err <= 1e-6 and elapsed < 1.0
    criterion(1, ok, f"T*={res.T_star:.12f} oracle={oracle:.12f} |diff|={err:.2e} time={elapsed:.2f}s")
    assert ok


def test_c02_pde_to_ode_1d(criterion):
    sc, rep, elapsed = preset_run("ks1d_blowup")
    C0 = R0 = 0.2
    x = sc.grid.coords[0]
    assert sc.grid.n == 256
    assert np.allclose(sc.initial.rho, 2 * R0 * (1 - np.cos(x)), atol=1e-15)
    assert np.allclose(sc.initial.c, 1 - 2 * C0 * (1 - np.cos(x)), atol=1e-15)
    t = rep.series("t")
    tracked = np.stack([rep.series("C1"), rep.series("R1")], axis=1)
    err, reached, t_stop = compare_until(t, tracked, BlowupOde(), [C0, R0], tracked[:, 0] >= 5 * C0)
    T_ode = quadrature_blowup_time(BlowupOde(), [C0, R0])
    T_fit = rep.fit[0] if rep.fit else math.nan
    fit_err = abs(T_fit - T_ode) / T_ode
    ok = rep.termination == BLOWUP and reached and err <= 1e-3 and fit_err <= 0.02 and elapsed < 30
    criterion(
        2, ok,
        f"max rel err {err:.2e} until C>=5C0 (t={t_stop:.3f}); T*_fit={T_fit:.5f} T*_ode={T_ode:.5f} "
        f"({100 * fit_err:.2f}%) time={elapsed:.1f}s",
    )
    assert ok


def test_c03_multi_d_consistency(criterion):
    sc, rep, elapsed = preset_run("ks2d_blowup")
    C0 = R0 = 0.1
    assert sc.grid.n == 128
    t = rep.series("t")
    tracked = np.stack([rep.series(k) for k in ("C1", "C2", "R1", "R2")], axis=1)
    ode = BlowupOde("multi_d", d=2)
    err, reached, t_stop = compare_until(t, tracked, ode, [C0, C0, R0, R0], tracked[:, 0] >= 3 * C0)
    ok = reached and err <= 5e-3 and elapsed < 300
    criterion(3, ok, f"max rel err {err:.2e} until C>=3C0 (t={t_stop:.3f}) time={elapsed:.1f}s")
    assert ok


def test_c04_conservation_suite(criterion):
    worst = {"mass_drift": 0.0, "csup_growth": 0.0, "min_rho": math.inf, "min_c": math.inf, "div_u": 0.0}
    failed = []
    names = validated_presets()
    for name in names:
        _, rep, _ = preset_run(name)
        c = conservation(rep)
        if not conservation_ok(c):
            failed.append(name)
        for key in ("mass_drift", "csup_growth", "div_u"):
            worst[key] = max(worst[key], c[key])
        for key in ("min_rho", "min_c"):
            worst[key] = min(worst[key], c[key])
    ok = not failed
    criterion(
        4, ok,
        f"{len(names)} runs; |dmass|<={worst['mass_drift']:.1e} sup-c growth<={worst['csup_growth']:.1e} "
        f"min rho={worst['min_rho']:.1e} min c={worst['min_c']:.1e} div u<={worst['div_u']:.1e}"
        + (f" failed: {failed}" if failed else ""),
    )
    assert ok


def test_c05_linear_dichotomy(criterion):
    start = time.perf_counter()
    amps = L.mode_amplifications("ks_wellposed", np.arange(0, 129), 0.5)
    violation = max(a.energy_violation for a in amps)
    slope, r2 = L.illposedness_slope("ks_illposed_c", np.arange(8, 129, 8), 0.5)
    elapsed = time.perf_counter() - start
    wkb = L.wkb_slope(0.5)
    rel = abs(slope - wkb) / wkb
    ok = violation <= 1e-10 and rel <= 0.1 and r2 >= 0.999 and elapsed < 10
    criterion(
        5, ok,
        f"energy violation {violation:.1e}; slope {slope:.5f} vs WKB {wkb:.5f} ({100 * rel:.2f}%) "
        f"r2={r2:.6f} time={elapsed:.1f}s",
    )
    assert ok


def test_c06_holder_step(criterion):
    grid = G.make_grid(1, 64)
    rng = np.random.default_rng(2024)
    checks = violations = 0
    worst = 0.0
    for _ in range(500):
        degree = int(rng.integers(1, grid.n // 4 + 1))
        g = ineq.random_trig_poly(grid, rng, degree, float(rng.uniform(0.02, 1.0)))
        for m in (3, 4, 5):
            for parts in ineq.integer_partitions(m):
                for gamma in (0.5, 1.0, 1.5):
                    rep = ineq.holder_step_check(grid, g, parts, m, gamma, 0.0, slack=1e-9)
                    checks += 1
                    violations += not rep.holds
                    worst = max(worst, rep.ratio)
    ok = violations == 0
    criterion(6, ok, f"{checks} checks over 500 polynomials, {violations} violations, worst ratio {worst:.6f}")
    assert ok


@pytest.mark.xfail(strict=True, reason="lower relation 2X <= mid is reversed by the 1D integration-by-parts identity")
def test_c07_m2_chain(criterion):
    rng = np.random.default_rng(7)
    g1, g2 = G.make_grid(1, 128), G.make_grid(2, 32)
    corpus = [(g1, ineq.random_trig_poly(g1, rng, int(rng.integers(1, 9)), float(rng.uniform(0.05, 1)))) for _ in range(300)]
    corpus += [(g2, ineq.random_trig_poly(g2, rng, int(rng.integers(1, 4)), float(rng.uniform(0.05, 1)))) for _ in range(100)]
    lower = upper = 0
    ibp = 0.0
    for grid, c in corpus:
        out = ineq.m2_chain_check(grid, c, 0.0, slack=1e-9)
        lower += not out["lower_holds"]
        upper += not out["upper_holds"]
        if grid.dim == 1:
            ibp = max(ibp, abs(out["ibp_residual_1d"]) / out["rhs"])
    ok = lower == 0 and upper == 0
    criterion(
        7, ok,
        f"{len(corpus)} functions: lower relation violated {lower}x, upper {upper}x; "
        f"1D identity X=(3/2)mid residual {ibp:.1e}",
    )
    assert ok


def test_c08_x_membership_threshold(criterion):
    grid = G.make_grid(1, 4096)
    x = grid.coords[0]
    mismatches, details = [], []
    for m, gamma in ((2, 1.0), (3, 1.0), (3, 0.5)):
        threshold = (2 * m - 1) / (2 - gamma)
        for p in (1, 2, 3, 4):
            order = 2 * p
            out = D.x_membership(grid, (1 - np.cos(x)) ** p, m, gamma, (0,))
            if out["converged"] != (order > threshold):
                mismatches.append((m, gamma, order))
            details.append(f"({m},{gamma:g},n={order}):{'conv' if out['converged'] else 'div'}/{out['limit']:.3f}")
    ok = not mismatches
    criterion(8, ok, " ".join(details) + (f" mismatches {mismatches}" if mismatches else ""))
    assert ok


def _refined(raw):
    raw = copy.deepcopy(raw)
    raw["stepper"] = {**raw["stepper"], "dt_max": raw["stepper"]["dt_max"] / 2}
    raw["stepper"]["cfl_number"] = raw["stepper"].get("cfl_number", 0.4) / 2
    return raw


def test_c09_modified_energy(criterion):
    sc, rep, _ = preset_run("ks1d_nonvanishing")
    fine = run_scenario(from_dict(_refined(sc.raw)))
    t = rep.series("t")
    window = t <= 1.0 + 1e-12
    Z = rep.series("Z3")[window]
    Zf = fine.series("Z3")[: len(Z)]
    resolved = max(np.max(rep.series("tail_rho")[window]), np.max(rep.series("tail_c")[window]))
    growth = float(np.max(Z) / Z[0])
    refine = float(np.max(np.abs(Z - Zf) / np.abs(Zf)))
    cancel = 0.0
    for state in (sc.initial, rep.final_state):
        out = D.top_order_cancellation(state, 3, sc.model)
        cancel = max(cancel, abs(out["residual"]) / out["scale"])
    ok = (
        np.all(np.isfinite(Z)) and growth <= 2.0 and refine <= 1e-4 and cancel <= 1e-9
        and resolved <= 1e-6 and np.allclose(fine.series("t")[: len(Z)], t[window])
    )
    criterion(
        9, ok,
        f"cancellation residual {cancel:.1e}*scale; max Z3/Z3(0)={growth:.4f}; dt vs dt/2 rel diff {refine:.1e}; "
        f"spectral tail<={resolved:.1e}",
    )
    assert ok


def test_c10_ratio_propagation(criterion):
    _, rep, _ = preset_run("ratio_vanishing")
    up, down = rep.series("ratio_up"), rep.series("ratio_down")
    gu, gd = float(np.max(up) / up[0]), float(np.max(down) / down[0])
    ok = rep.termination == T_END and gu <= 3.0 and gd <= 3.0
    criterion(10, ok, f"sup(rho/c) grew x{gu:.4f}, sup(c/rho) grew x{gd:.4f} over t<={rep.final_t:g}")
    assert ok


def test_c11_infimum_inequalities(criterion):
    worst, per = 0.0, []
    for name in validated_presets():
        sc, rep, _ = preset_run(name)
        if sc.hypothesis != "positive":
            continue
        rho_inf, c_inf = rep.series("rho_inf"), rep.series("c_inf")
        bound_rho = rep.series("div_flux_sup") / rho_inf
        bound_c = rep.series("consumption_ratio_sup") / c_inf
        viscous = sc.model.D_rho > 0 or sc.model.D_c > 0
        out = D.infimum_rate_check(rep.series("t"), rho_inf, c_inf, bound_rho, bound_c, one_sided=viscous)
        worst = max(worst, out["worst"])
        per.append(f"{name}={out['worst']:.4f}")
    ok = bool(per) and worst <= 1.05
    criterion(11, ok, f"worst ratio {worst:.4f} ({', '.join(per)})")
    assert ok


def test_c12_certificates(criterion):
    sc, rep, _ = preset_run("ks1d_blowup")
    R0, delta = 0.2, 1.0
    x = sc.grid.coords[0]
    # 1 - cos x >= x^2 (1/2 - x^2/24) on |x| <= delta, and >= 1 - cos(delta) beyond
    init = CertificateState(
        c_low=float(np.min(sc.initial.c)),
        delta_low=delta,
        a_low=2 * R0 * (0.5 - delta**2 / 24),
        r_low=2 * R0 * (1 - math.cos(delta)),
    )
    t_stop = 0.8 * rep.fit[0]
    times = np.append(np.arange(0.0, t_stop, 0.01), t_stop)
    states = [sc.initial]
    for t in times[1:]:
        states.append(integrate_to(states[-1], float(t), sc.model, sc.stepper))
    rho_sup = np.array([np.max(s.rho) for s in states])
    gradf = np.array([np.max(D.hessian_opnorm(s.grid, s.c)) for s in states])
    cert = certificate_evolve(times, rho_sup, gradf, init, dim=1)
    dist = G.torus_distance(sc.grid, (0.0,))
    worst = 0.0
    for i, s in enumerate(states):
        near = dist <= cert.delta_low[i]
        worst = max(
            worst,
            float(np.max(cert.c_low[i] - s.c)),
            float(np.max(cert.a_low[i] * dist[near] ** 2 - s.rho[near])),
            float(np.max(cert.r_low[i] - s.rho[~near])) if np.any(~near) else -math.inf,
        )
    ok = worst <= 1e-6
    criterion(
        12, ok,
        f"{len(states)} states to t={t_stop:.3f} (0.8 T*_fit); worst excess {worst:.2e}; "
        f"final a={cert.a_low[-1]:.3g} r={cert.r_low[-1]:.3g} c={cert.c_low[-1]:.3g} delta={cert.delta_low[-1]:.3g}",
    )
    assert ok


def test_c13_rotational_sensitivity(criterion):
    sc, rep, _ = preset_run("rotation2d")
    S = sc.model.S
    assert np.allclose(S, [[1.0, 0.5], [-0.5, 1.0]])
    validate_config(sc.model, sc.initial)
    cancel = 0.0
    for state in (sc.initial, rep.final_state):
        for m in (1, 2):
            for form in ("dynamic", "rotation"):
                out = D.top_order_cancellation(state, m, sc.model, form)
                cancel = max(cancel, abs(out["residual"]) / out["scale"])
    cons = conservation(rep)
    ok = cancel <= 1e-9 and conservation_ok(cons) and rep.termination == T_END
    criterion(
        13, ok,
        f"config valid; cancellation residual {cancel:.1e}*scale; |dmass|={cons['mass_drift']:.1e} "
        f"min rho={cons['min_rho']:.3g}",
    )
    assert ok


def test_c14_determinism(criterion):
    names = ["constants", "ks1d_nonvanishing", "rotation2d", "ratio_vanishing", "ksf2d_cviscous"]
    scenarios = [load(preset_dir() / f"{n}.yaml") for n in names]
    first = [csv_text(r).encode() for r in sweep(scenarios, 1)]
    second = [csv_text(r).encode() for r in sweep(scenarios, 1)]
    parallel = [csv_text(r).encode() for r in sweep(scenarios, 4)]
    ok = first == second == parallel
    criterion(14, ok, f"{len(names)} scenarios byte-identical across repeat and parallelism 1 vs 4: {ok}")
    assert ok
