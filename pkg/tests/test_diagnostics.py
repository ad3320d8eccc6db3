import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from ksflab import diagnostics as D
from ksflab import grid as G
from ksflab.models import CoefficientSpec, ModelConfig, State
from ksflab.ode import BlowupOde, quadrature_blowup_time, trajectory

G1 = G.make_grid(1, 64)
X1 = G1.coords[0]
CFG = ModelConfig()


def const_state(rho=1.0, c=1.0, grid=G1):
    return State(grid, 0.0, np.full(grid.shape, rho), np.full(grid.shape, c))


def smooth_state(n=64):
    g = G.make_grid(1, n)
    x = g.coords[0]
    return State(g, 0.0, 1.5 + np.cos(x) + 0.2 * np.sin(3 * x), 2.0 + 0.5 * np.sin(x))


def fluid_state():
    g = G.make_grid(2, 32)
    x, y = g.coords
    u = np.stack([np.sin(y), np.cos(x)])
    return State(g, 0.0, 1.2 + 0.3 * np.cos(x + y), 1.5 + 0.4 * np.sin(x) * np.cos(y), u)


class TestNorms:
    @pytest.mark.parametrize(
        "f,m,expected",
        [
            (np.sin(X1), 1, math.sqrt(2 * math.pi)),
            (np.sin(X1), 2, math.sqrt(3 * math.pi)),
            (np.full(G1.shape, 3.0), 3, 3.0 * math.sqrt(2 * math.pi)),
        ],
    )
    def test_sobolev(self, f, m, expected):
        assert D.sobolev_norm(G1, f, m) == pytest.approx(expected, rel=1e-13)

    def test_sobolev_negative_order(self):
        with pytest.raises(ValueError):
            D.sobolev_norm(G1, np.sin(X1), -1)

    def test_monitor_constants(self):
        assert D.blowup_monitor(const_state(0.5, 2.0))[0] == pytest.approx(2.5)

    def test_monitor_cosine(self):
        g = G.make_grid(1, 64)
        s = State(g, 0.0, np.zeros(g.shape), 1 + np.cos(g.coords[0]))
        total, c2 = D.blowup_monitor(s)
        assert total == pytest.approx(4.0) and c2 == pytest.approx(4.0)

    def test_hessian_opnorm_2d(self):
        g = G.make_grid(2, 32)
        x, y = g.coords
        c = np.cos(x) + np.cos(y)
        H = G.hessian(g, c)
        mats = np.moveaxis(H, (0, 1), (-2, -1))
        expected = np.max(np.abs(np.linalg.eigvalsh(mats)), axis=-1)
        assert np.max(np.abs(D.hessian_opnorm(g, c) - expected)) < 1e-12


class TestGoodVariables:
    def test_no_velocity(self):
        s = smooth_state()
        gv = D.good_variables(s, (2,), CFG)
        assert np.array_equal(gv.R, G.derivative(s.grid, s.rho, (2,)))

    def test_constants_with_velocity(self):
        g = G.make_grid(2, 16)
        s = State(g, 0.0, np.ones(g.shape), np.ones(g.shape), np.stack([np.sin(g.coords[1]), np.zeros(g.shape)]))
        gv = D.good_variables(s, (1, 0), CFG)
        assert np.max(np.abs(gv.R)) == 0.0

    @pytest.mark.parametrize("alpha", [(1, 0), (1, 1), (0, 3)])
    def test_reconstruction(self, alpha):
        s = fluid_state()
        gv = D.good_variables(s, alpha, CFG)
        P, F = D.reconstruct(s, gv, CFG)
        assert np.max(np.abs(P - G.derivative(s.grid, s.rho, alpha))) < 1e-12
        dF = np.stack([G.derivative(s.grid, s.f[i], alpha) for i in range(2)])
        assert np.max(np.abs(F - dF)) < 1e-12

    def test_singular_coefficient(self):
        s = fluid_state()
        s.c = s.c - s.c.min()
        with pytest.raises(D.DiagnosticsError, match="singular"):
            D.good_variables(s, (1, 0), CFG)


class TestEnergy:
    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_constants_zero(self, m):
        assert D.modified_energy(const_state(0.7, 1.3), m, CFG) == 0.0

    def test_against_quadrature(self):
        # rho = 1.5 + cos x, c = 2 + 0.5 sin x, m = 1: int c rho'^2 + rho c''^2
        g = G.make_grid(1, 64)
        x = g.coords[0]
        s = State(g, 0.0, 1.5 + np.cos(x), 2.0 + 0.5 * np.sin(x))
        expected, _ = quad(
            lambda t: (2 + 0.5 * math.sin(t)) * math.sin(t) ** 2 + (1.5 + math.cos(t)) * 0.25 * math.sin(t) ** 2,
            0, 2 * math.pi, epsabs=1e-14,
        )
        assert D.modified_energy(s, 1, CFG) == pytest.approx(expected, rel=1e-12)

    def test_chi_weight(self):
        s = smooth_state()
        cfg2 = ModelConfig(chi=CoefficientSpec("constant", 2.0))
        r1 = D.energy_parts(s, 1, CFG)[0]
        r2 = D.energy_parts(s, 1, cfg2)[0]
        assert r2 == pytest.approx(0.5 * r1)

    def test_degenerate_weight(self):
        with pytest.raises(D.DiagnosticsError, match="degenerate"):
            D.modified_energy(const_state(0.0, 1.0), 1, CFG)


class TestZ:
    def test_constants(self):
        assert D.z_functional(const_state(), 3, CFG) == pytest.approx(2 * math.pi + 2)

    def test_monotone_in_m(self):
        s = smooth_state()
        values = [D.z_functional(s, m, CFG) for m in range(4)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_infimum_too_small(self):
        with pytest.raises(D.DiagnosticsError, match="infimum"):
            D.z_functional(const_state(1.0, 0.0), 2, CFG)


class TestWeightedX:
    def test_constants(self):
        parts, total = D.weighted_X_norm(G1, np.full(G1.shape, 3.0), 2, 1.0, 1e-12)
        assert parts[0] == pytest.approx(2 * math.pi * 3.0)
        assert parts[1] == 0.0 and parts[2] == 0.0 and total == pytest.approx(parts[0])

    def test_converges_for_high_vanishing_order(self):
        g = G.make_grid(1, 4096)
        prof = (1 - np.cos(g.coords[0])) ** 3
        a = D.weighted_X_norm(g, prof, 2, 1.0, 1e-8)[1]
        b = D.weighted_X_norm(g, prof, 2, 1.0, 1e-9)[1]
        assert b / a == pytest.approx(1.0, abs=1e-3)


class TestMembership:
    def test_aitken_exact_on_geometric(self):
        seq = 1.0 + 0.5 ** np.arange(5)
        assert D.aitken_limit(seq) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("seq", [[2.0], [3.0, 4.0], [5.0, 5.0, 5.0]])
    def test_aitken_degenerate(self, seq):
        assert D.aitken_limit(seq) == seq[-1]

    @pytest.mark.parametrize("p, expected", [(1, False), (3, True)])
    def test_classifies_vanishing_order(self, p, expected):
        g = G.make_grid(1, 1024)
        out = D.x_membership(g, (1 - np.cos(g.coords[0])) ** p, 2, 1.0, (0,))
        assert out["converged"] is expected
        assert len(out["eps"]) == len(out["values"]) == len(out["ratios"]) + 1

    def test_nonvanishing_has_no_window(self):
        with pytest.raises(D.DiagnosticsError):
            D.x_membership(G1, 2 + np.cos(X1), 2, 1.0, (0,))


class TestRatios:
    def test_exact_power(self):
        s = smooth_state()
        s.rho = s.c**0.5
        assert D.ratio_bounds(s, 0.5) == pytest.approx((1.0, 1.0))

    def test_scaled(self):
        s = smooth_state()
        s.rho = 2 * s.c
        up, down = D.ratio_bounds(s, 1.0)
        assert up == pytest.approx(2.0) and down == pytest.approx(0.5)

    def test_vanishing_constructed(self):
        g = G.make_grid(1, 256)
        base = 1 - np.cos(g.coords[0])
        s = State(g, 0.0, 3.0 * base, base**0.5)
        up, down = D.ratio_bounds(s, 2.0, floor=1e-8)
        assert abs(up - 3.0) < 1e-8 and abs(down - 1 / 3) < 1e-8

    def test_empty_set(self):
        with pytest.raises(D.DiagnosticsError):
            D.ratio_bounds(const_state(1.0, 0.0), 1.0)


class TestYNorms:
    def test_constants(self):
        yr, yf = D.y_norms(const_state(2.0, 3.0), 2)
        assert yr == pytest.approx(2.0 * math.sqrt(2 * math.pi * 3.0)) and yf == 0.0

    def test_zero_rho(self):
        s = smooth_state()
        s.rho = np.zeros_like(s.rho)
        assert D.y_norms(s, 3)[1] == 0.0

    def test_against_quadrature(self):
        s = smooth_state()
        yr, _ = D.y_norms(s, 1)
        expected, _ = quad(
            lambda t: (2 + 0.5 * math.sin(t))
            * ((1.5 + math.cos(t) + 0.2 * math.sin(3 * t)) ** 2 + (-math.sin(t) + 0.6 * math.cos(3 * t)) ** 2),
            0, 2 * math.pi, epsabs=1e-14,
        )
        assert yr == pytest.approx(math.sqrt(expected), rel=1e-12)


class TestTaylor:
    def test_quadratic_profile(self):
        g = G.make_grid(1, 64)
        x = g.coords[0]
        s = State(g, 0.0, 2 * 0.3 * (1 - np.cos(x)), 1 - 2 * 0.2 * (1 - np.cos(x)))
        C, R = D.taylor_coeffs(s, (0,))
        assert abs(C[0] - 0.2) < 1e-10 and abs(R[0] - 0.3) < 1e-10

    def test_constants(self):
        C, R = D.taylor_coeffs(const_state(), (5,))
        assert C[0] == 0.0 and R[0] == 0.0

    def test_symmetric_2d(self):
        g = G.make_grid(2, 32)
        x, y = g.coords
        q = 2 - np.cos(x) - np.cos(y)
        C, R = D.taylor_coeffs(State(g, 0.0, q, 1 - 0.1 * q), (0, 0))
        assert abs(C[0] - C[1]) < 1e-10 and abs(R[0] - R[1]) < 1e-10


class TestCancellation:
    @pytest.mark.parametrize("m", [1, 3, 5])
    def test_dynamic_1d(self, m):
        out = D.top_order_cancellation(smooth_state(), m, CFG)
        assert abs(out["residual"]) <= 1e-9 * out["scale"]

    def test_rotation_2d(self):
        g = G.make_grid(2, 32)
        x, y = g.coords
        s = State(g, 0.0, 1.2 + 0.3 * np.cos(x + 2 * y) + 0.2 * np.sin(y), 1.5 + 0.4 * np.sin(x) * np.cos(2 * y) + 0.1 * np.cos(x))
        cfg = ModelConfig(dim=2, S=np.array([[1.0, 0.5], [-0.5, 1.0]]))
        for form in ("dynamic", "rotation"):
            out = D.top_order_cancellation(s, 2, cfg, form)
            assert out["scale"] > 1e-3
            assert abs(out["residual"]) <= 1e-9 * out["scale"]

    def test_unknown_form(self):
        with pytest.raises(ValueError):
            D.top_order_cancellation(smooth_state(), 1, CFG, "other")


class TestFit:
    def test_exact_model(self):
        t = np.linspace(0.0, 0.45, 50)
        T, exponent = D.fit_blowup_rate(t, 1 / (3 * (0.5 - t)), 20)
        assert abs(T - 0.5) < 1e-4 and abs(exponent + 1) < 0.02

    def test_ode_trajectory(self):
        ode = BlowupOde()
        Ts = quadrature_blowup_time(ode, [1.0, 1.0])
        t = np.linspace(0.0, Ts - 0.01, 200)
        C = trajectory(ode, [1.0, 1.0], t)[:, 0]
        assert abs(D.fit_blowup_rate(t, C, 20)[0] - Ts) < 1e-3

    def test_noise(self):
        rng = np.random.default_rng(1)
        t = np.linspace(0.0, 0.45, 50)
        C = 1 / (3 * (0.5 - t)) + 1e-6 * rng.standard_normal(50)
        assert abs(D.fit_blowup_rate(t, C, 20)[0] - 0.5) < 1e-3

    def test_non_monotone(self):
        with pytest.raises(D.DiagnosticsError, match="non-monotone"):
            D.fit_blowup_rate([0, 1, 2, 3], [1, 2, 1.5, 3], 4)


class TestInfimum:
    def test_static(self):
        t = np.linspace(0, 1, 5)
        out = D.infimum_rate_check(t, np.ones(5), np.ones(5), np.ones(5), np.ones(5))
        assert out["worst"] == 0.0

    def test_constants_run(self):
        rho0 = 0.5
        t = np.linspace(0, 1, 201)
        c = np.exp(-rho0 * t)
        out = D.infimum_rate_check(t, np.full_like(t, rho0), c, np.zeros_like(t), rho0 / c)
        assert out["c"] == pytest.approx(1.0, abs=1e-4)
        assert out["rho"] == 0.0


class TestRecord:
    def test_columns_match_record(self):
        spec = D.DiagnosticsSpec(z_order=2, x_order=2, y_order=1, delta=1.0, x0=(0,))
        cols = spec.columns(1, False)
        rec = D.compute_record(smooth_state(), CFG, spec)
        assert len(rec.row(cols)) == len(cols)
        assert set(cols) == set(rec.values)
        assert all(np.isfinite(rec.row(cols)))

    def test_fluid_columns(self):
        s = fluid_state()
        spec = D.DiagnosticsSpec()
        rec = D.compute_record(s, ModelConfig(dim=2, include_fluid=True, phi=np.zeros(s.grid.shape)), spec)
        assert rec["div_u"] < 1e-12
        assert rec["u_W1"] > 0

    @settings(max_examples=10, deadline=None)
    @given(a=st.floats(0.1, 0.9), b=st.floats(0.1, 0.9))
    def test_weight_equivalence_holds_for_certified(self, a, b):
        g = G.make_grid(1, 128)
        x = g.coords[0]
        s = State(g, 0.0, 2 * a * (1 - np.cos(x)), 1 + b * np.cos(x))
        out = D.weight_equivalence_check(s, (0,), a_low=a / 4, r_low=a / 4)
        assert out["lower_violation"] <= 1e-12
        assert out["upper_violation"] <= 1e-12
