"""Right-hand sides, time steppers, trajectories and the smallness gate."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import FLOW_STRIP
from lyapunov_lab.errors import PositivityViolated, Unstable
from lyapunov_lab.flows import (BOUSSINESQ, HEAT, MEAN_CURVATURE, THIN_FILM, EquationKind,
                                HeleShaw, Integrator, StepperConfig, ThinFilmGravity,
                                linear_symbol, rhs, run, smallness_check, step, stiffest_rate,
                                trajectory_states)
from lyapunov_lab.functionals import L2
from lyapunov_lab.spectral import TorusGrid

C_1 = 0.001185113659196298


class TestEquationKind:
    def test_aliases_normalize(self):
        assert EquationKind("heat") == HEAT
        assert EquationKind("thin_film").tag == "ThinFilm"

    @pytest.mark.parametrize("args", [("HeleShaw", 0, 0), ("HeleShaw", -1, 0),
                                      ("ThinFilmGravity", 0, 0), ("Heat", 1, 0),
                                      ("Porous", 0, 0)])
    def test_rejects_bad_parameters(self, args):
        with pytest.raises(ValueError):
            EquationKind(*args)

    def test_degenerate_flags(self):
        assert BOUSSINESQ.degenerate and THIN_FILM.degenerate
        assert not HEAT.degenerate and not HeleShaw(1, 0).degenerate
        assert str(HeleShaw(1, 0.5)) == "HeleShaw(g=1, mu=0.5)"


class TestRhs:
    def test_heat_on_cosine(self, g32):
        (x,) = g32.x
        assert np.max(np.abs(rhs(HEAT, np.cos(x), grid=g32) + np.cos(x))) < 1e-13

    def test_hele_shaw_linearization(self, g64):
        (x,) = g64.x
        eps = 1e-3
        out = rhs(HeleShaw(1, 0), eps * np.cos(x), FLOW_STRIP, grid=g64)
        assert np.max(np.abs(out + eps * np.cos(x))) < 10 * eps ** 2

    def test_hele_shaw_surface_tension_linearization(self, g64):
        (x,) = g64.x
        eps = 1e-3
        out = rhs(HeleShaw(0, 1), eps * np.cos(2 * x), FLOW_STRIP, grid=g64)
        assert np.max(np.abs(out + 8 * eps * np.cos(2 * x))) < 100 * eps ** 2

    def test_boussinesq_explicit(self, g64):
        (x,) = g64.x
        h = 2 + np.cos(x)
        expected = np.sin(x) ** 2 - (2 + np.cos(x)) * np.cos(x)
        assert np.max(np.abs(rhs(BOUSSINESQ, h, grid=g64) - expected)) < 1e-12

    def test_thin_film_explicit(self, g64):
        # h = 2 + cos x: h''' = sin x, so -(h h''')' = sin^2 x - (2 + cos x) cos x
        (x,) = g64.x
        expected = np.sin(x) ** 2 - (2 + np.cos(x)) * np.cos(x)
        assert np.max(np.abs(rhs(THIN_FILM, 2 + np.cos(x), grid=g64) - expected)) < 1e-10

    def test_mean_curvature_1d_explicit(self, g128):
        (x,) = g128.x
        h = 0.3 * np.sin(x)
        hx, hxx = 0.3 * np.cos(x), -0.3 * np.sin(x)
        assert np.max(np.abs(rhs(MEAN_CURVATURE, h, grid=g128) - hxx / (1 + hx ** 2))) < 1e-10

    def test_mean_curvature_2d_small_slope_is_heat(self, g2d):
        x, y = g2d.x
        h = 1e-4 * np.cos(x) * np.cos(y)
        assert np.max(np.abs(rhs(MEAN_CURVATURE, h, grid=g2d) + 2 * h)) < 1e-12

    @pytest.mark.parametrize("eq", [THIN_FILM, BOUSSINESQ, ThinFilmGravity(1, 1)])
    def test_constant_is_stationary(self, g32, eq):
        assert np.max(np.abs(rhs(eq, np.full(32, 2.0), grid=g32))) < 1e-14

    def test_positivity_required(self, g32):
        (x,) = g32.x
        with pytest.raises(PositivityViolated):
            rhs(THIN_FILM, np.cos(x), grid=g32)

    @given(st.integers(0, 10_000))
    @settings(max_examples=15, deadline=None)
    def test_conservative_rhs_has_zero_mean(self, seed):
        g = TorusGrid(1, 32)
        f = g.random_field(np.random.default_rng(seed), kcut=5)
        h = 2 + 0.5 * f / np.max(np.abs(f))
        for eq in (HEAT, BOUSSINESQ, THIN_FILM, MEAN_CURVATURE):
            assert abs(g.integrate(rhs(eq, h, grid=g))) < 1e-11


class TestLinearPart:
    def test_symbols(self, g32):
        k = g32.kabs
        assert np.array_equal(linear_symbol(HEAT, g32, np.zeros(32)), -(k ** 2))
        assert np.allclose(linear_symbol(THIN_FILM, g32, np.full(32, 2.0)), -2 * k ** 4)
        assert np.allclose(linear_symbol(HeleShaw(1, 2), g32, np.zeros(32)), -(k + 2 * k ** 3))

    def test_stiffest_rate_uses_dealiased_band(self, g32):
        assert stiffest_rate(HEAT, g32, np.zeros(32)) == pytest.approx(g32.kmax_dealiased ** 2)
        g = TorusGrid(2, 32)
        assert stiffest_rate(HEAT, g, np.zeros(g.shape)) == pytest.approx(2 * g.kmax_dealiased ** 2)


class TestStepper:
    @pytest.mark.parametrize("kw", [{"dt": 0.0}, {"dt": -1.0}, {"scheme": "Euler"},
                                    {"monitor_stride": 0}, {"t_end": -1.0}])
    def test_config_validation(self, kw):
        args = {"dt": 1e-3, "t_end": 1.0, **kw}
        with pytest.raises(ValueError):
            StepperConfig(**args)

    def test_step_count(self):
        assert StepperConfig(1e-3, 0.5).n_steps == 500

    def test_rk4_heat_step(self, g32):
        (x,) = g32.x
        dt = 1e-3
        integ = Integrator(HEAT, g32, StepperConfig(dt, dt), h0=np.cos(x))
        out = integ.step(integ.state(0.0, np.cos(x)))
        assert out.t == pytest.approx(dt)
        assert np.max(np.abs(out.h - np.exp(-dt) * np.cos(x))) < 1e-14

    def test_etdrk4_is_exact_on_linear_flow(self, g32):
        (x,) = g32.x
        h = np.cos(x) + 0.2 * np.sin(5 * x)
        integ = Integrator(HEAT, g32, StepperConfig(0.1, 0.1, "ETDRK4"), h0=h)
        out = integ.step(integ.state(0.0, h))
        exact = np.exp(-0.1) * np.cos(x) + 0.2 * np.exp(-2.5) * np.sin(5 * x)
        assert np.max(np.abs(out.h - exact)) < 1e-14

    def test_imex1_is_backward_euler_on_linear_flow(self, g32):
        (x,) = g32.x
        integ = Integrator(HEAT, g32, StepperConfig(0.1, 0.1, "IMEX1"), h0=np.cos(x))
        out = integ.step(integ.state(0.0, np.cos(x)))
        assert np.max(np.abs(out.h - np.cos(x) / 1.1)) < 1e-14

    def test_step_function_freezes_at_state(self, g64):
        (x,) = g64.x
        h0 = 2 + 0.2 * np.cos(x)
        integ = Integrator(BOUSSINESQ, g64, StepperConfig(1e-3, 1e-3, "ETDRK4"), h0=h0)
        st0 = integ.state(0.0, h0)
        a = step(BOUSSINESQ, st0, StepperConfig(1e-3, 1e-3, "ETDRK4"), grid=g64)
        assert np.max(np.abs(a.h - integ.step(st0).h)) < 1e-15

    def test_boussinesq_self_convergence(self, g64):
        (x,) = g64.x
        h0 = 2 + 0.5 * np.cos(x)
        a = run(BOUSSINESQ, h0, StepperConfig(1e-4, 1e-2), grid=g64).final.h
        b = run(BOUSSINESQ, h0, StepperConfig(5e-5, 1e-2), grid=g64).final.h
        assert np.max(np.abs(a - b)) < 1e-12

    @pytest.mark.parametrize("scheme", ["IMEX1", "ETDRK4"])
    def test_stiff_schemes_agree_with_rk4(self, g32, scheme):
        (x,) = g32.x
        h0 = 1 + 0.2 * np.cos(x)
        ref = run(THIN_FILM, h0, StepperConfig(2e-5, 2e-2), grid=g32).final.h
        out = run(THIN_FILM, h0, StepperConfig(2e-4, 2e-2, scheme), grid=g32).final.h
        tol = 1e-3 if scheme == "IMEX1" else 1e-8
        assert np.max(np.abs(out - ref)) < tol

    def test_rk4_bound_enforced(self, g32):
        (x,) = g32.x
        with pytest.raises(Unstable):
            Integrator(HEAT, g32, StepperConfig(1e-2, 1.0), h0=np.cos(x))

    def test_stiff_schemes_need_h0(self, g32):
        with pytest.raises(ValueError):
            Integrator(HEAT, g32, StepperConfig(1e-2, 1.0, "ETDRK4"))


class TestRun:
    def test_heat_l2_decay(self, g32):
        (x,) = g32.x
        tr = run(HEAT, np.cos(x), StepperConfig(1e-3, 0.5, monitor_stride=50), monitors=[L2],
                 grid=g32)
        assert tr.error is None and len(tr.t) == 11
        t = np.asarray(tr.t)
        assert np.max(np.abs(tr.series(L2) - np.pi * np.exp(-2 * t))) < 1e-6

    def test_samples_carry_dissipation(self, g32):
        (x,) = g32.x
        tr = run(HEAT, np.cos(x), StepperConfig(1e-3, 0.01, monitor_stride=5), monitors=[L2],
                 grid=g32)
        s = tr.samples(L2)
        assert len(s) == 3
        assert s[0].dissipation == pytest.approx(2 * np.pi, rel=1e-12)

    def test_hele_shaw_slope_maximum_principle(self, g64):
        (x,) = g64.x
        tr = run(HeleShaw(1, 0), 0.05 * np.cos(x) + 0.02 * np.sin(2 * x),
                 StepperConfig(5e-3, 0.2, monitor_stride=4), FLOW_STRIP, grid=g64)
        assert tr.error is None
        assert max(tr.trace.sup_grad) <= tr.trace.sup_grad[0] + 1e-6
        assert tr.trace.summary()["inf_a_min"] > 0

    @pytest.mark.parametrize("eq, scheme, dt", [(BOUSSINESQ, "RK4", 2e-4),
                                                (THIN_FILM, "ETDRK4", 1e-3)])
    def test_mass_conservation(self, g64, eq, scheme, dt):
        (x,) = g64.x
        h0 = 1 + 0.3 * np.cos(x) + 0.1 * np.sin(2 * x)
        tr = run(eq, h0, StepperConfig(dt, 0.1, scheme), grid=g64)
        assert tr.error is None
        assert abs(g64.integrate(tr.final.h) - g64.integrate(h0)) < 1e-9

    def test_initial_positivity_checked(self, g32):
        with pytest.raises(PositivityViolated):
            run(THIN_FILM, np.full(32, 1e-7), StepperConfig(1e-3, 0.1, "ETDRK4"), grid=g32)

    def test_failure_returns_partial_trajectory(self, g64):
        # the minimum of this profile initially decreases under the thin-film flow
        (x,) = g64.x
        h0 = 1 - 0.5 * np.cos(x) + 0.05 * np.cos(3 * x)
        tr = run(THIN_FILM, h0, StepperConfig(1e-3, 0.2, "ETDRK4", positivity_floor=0.549),
                 monitors=[L2], grid=g64)
        assert tr.error.startswith("PositivityViolated")
        assert tr.n_steps < 200 and len(tr.t) >= 1

    def test_trajectory_states(self, g32):
        (x,) = g32.x
        states = trajectory_states(HEAT, np.cos(x), StepperConfig(1e-3, 1.0), n=3, grid=g32)
        assert [s.t for s in states] == pytest.approx([0.0, 1e-3, 2e-3])


class TestSmallness:
    def test_flat_passes(self, g64):
        r = smallness_check(np.zeros(64), grid=g64)
        assert r.passes and r.sup_grad2 == 0.0
        assert r.c_d == pytest.approx(C_1, rel=1e-12)

    def test_small_cosine_passes(self, g64):
        (x,) = g64.x
        r = smallness_check(0.01 * np.cos(x), FLOW_STRIP, grid=g64)
        assert r.passes
        assert r.sup_grad2 == pytest.approx(1e-4, rel=1e-6)

    def test_large_amplitude_fails(self, g64):
        (x,) = g64.x
        A = 1.5 * np.sqrt(C_1)
        r = smallness_check(A * np.cos(x), FLOW_STRIP, grid=g64)
        assert not r.passes and r.sup_grad2 > r.c_d
