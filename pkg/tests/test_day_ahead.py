import numpy as np
import pytest

from gfbess.battery import BatteryLimits
from gfbess.day_ahead import (
    build_problem,
    dispatch_plan,
    load_plan_csv,
    load_sigma_json,
    save_plan_csv,
    save_sigma_json,
    simulate_soe,
    solve_day_ahead,
)
from gfbess.forecasting import N_SLOTS, ProsumptionBounds, WfForecast


def flat_wf(width_hzs=0.0, drift=0.0):
    steps = np.arange(N_SLOTS, dtype=float)
    point = drift * steps
    return WfForecast(w_up=point + width_hzs * steps / N_SLOTS,
                      w_down=point - width_hzs * steps / N_SLOTS,
                      ar_order=0, coefficients=np.zeros(1))


def make_bounds(base=140.0, width=8.0, rng=None):
    if rng is None:
        profile = np.full(N_SLOTS, base)
    else:
        t = np.linspace(0, 2 * np.pi, N_SLOTS)
        profile = base + 25.0 * np.sin(t + rng.uniform(0, 6)) \
            - 60.0 * np.clip(np.sin(t - np.pi / 2), 0, None) * rng.uniform(0.5, 1.0)
    return ProsumptionBounds(l_up=profile + width / 2.0, l_down=profile - width / 2.0)


def default_limits():
    return BatteryLimits()


class TestBuildProblem:
    def test_midpoint_central_forecast(self):
        bounds = ProsumptionBounds(l_up=np.full(N_SLOTS, 150.0),
                                   l_down=np.full(N_SLOTS, 130.0))
        prob = build_problem(bounds, flat_wf(), default_limits(), soe_0=0.5)
        assert np.all(prob.l_hat == 140.0)

    def test_degenerate_bounds_pass_through(self):
        bounds = ProsumptionBounds(l_up=np.full(N_SLOTS, 100.0),
                                   l_down=np.full(N_SLOTS, 100.0))
        prob = build_problem(bounds, flat_wf(), default_limits(), soe_0=0.5)
        assert np.all(prob.l_hat == 100.0)

    def test_soe_outside_limits_rejected(self):
        bounds = make_bounds()
        with pytest.raises(ValueError):
            build_problem(bounds, flat_wf(), default_limits(), soe_0=0.05)


class TestSolve:
    def test_degenerate_problem_power_limited(self):
        # perfect forecast, no frequency energy: droop is limited only by the
        # power headroom, sigma = p_max / delta_f_max for symmetric limits
        bounds = ProsumptionBounds(l_up=np.zeros(N_SLOTS), l_down=np.zeros(N_SLOTS))
        prob = build_problem(bounds, flat_wf(), default_limits(), soe_0=0.5)
        sol = solve_day_ahead(prob)
        assert sol.status == "optimal"
        assert sol.sigma_f == pytest.approx(720.0 / 0.2, rel=1e-6)

    def test_saturating_bounds_leave_no_fcr_budget(self):
        # a few slots of power-saturating width pin sigma to zero without
        # exhausting the stored-energy budget
        lim = default_limits()
        l_up = np.zeros(N_SLOTS)
        l_down = np.zeros(N_SLOTS)
        l_up[100:103] = lim.p_max
        l_down[100:103] = -lim.p_max
        bounds = ProsumptionBounds(l_up=l_up, l_down=l_down)
        prob = build_problem(bounds, flat_wf(), lim, soe_0=0.5)
        sol = solve_day_ahead(prob)
        assert sol.status == "optimal"
        assert sol.sigma_f == pytest.approx(0.0, abs=1e-6)

    def test_epfl_like_day_droop_magnitude(self):
        rng = np.random.default_rng(0)
        bounds = make_bounds(rng=rng)
        wf = flat_wf(width_hzs=1400.0)
        prob = build_problem(bounds, wf, default_limits(), soe_0=0.5)
        sol = solve_day_ahead(prob)
        assert sol.status == "optimal"
        assert 50.0 <= sol.sigma_f <= 1000.0  # order 10^2 kW/Hz

    def test_infeasible_returns_status(self):
        # bound width integrating far beyond the usable stored energy
        bounds = make_bounds(width=200.0)
        prob = build_problem(bounds, flat_wf(), default_limits(), soe_0=0.5)
        sol = solve_day_ahead(prob)
        assert sol.status == "infeasible"
        assert sol.f_offset is None and sol.dispatch_plan is None

    def test_argmin_reading_returns_zero_droop(self):
        bounds = make_bounds(width=4.0)
        prob = build_problem(bounds, flat_wf(), default_limits(), soe_0=0.5,
                             maximize_droop=False)
        sol = solve_day_ahead(prob)
        assert sol.status == "optimal"
        assert sol.sigma_f == pytest.approx(0.0, abs=1e-9)


class TestProperties:
    def admissible_samples(self, prob, sol, rng, count=100):
        lo, hi = prob.bounds.l_down, prob.bounds.l_up
        wlo, whi = prob.wf.w_down, prob.wf.w_up
        samples = [(lo, whi), (hi, wlo), (lo, wlo), (hi, whi)]
        while len(samples) < count:
            u = rng.uniform(0, 1, N_SLOTS)
            v = rng.uniform(0, 1, N_SLOTS)
            samples.append((lo + u * (hi - lo), wlo + v * (whi - wlo)))
        return samples

    def test_robust_feasibility(self):
        rng = np.random.default_rng(1)
        bounds = make_bounds(rng=rng)
        prob = build_problem(bounds, flat_wf(width_hzs=900.0), default_limits(), 0.5)
        sol = solve_day_ahead(prob)
        assert sol.status == "optimal"
        for l_traj, w_traj in self.admissible_samples(prob, sol, rng):
            soe = simulate_soe(prob, sol, l_traj, w_traj)
            assert np.all(soe <= prob.limits.soc_max + 1e-6)
            assert np.all(soe >= prob.limits.soc_min - 1e-6)

    def test_wider_bounds_never_increase_droop(self):
        rng = np.random.default_rng(2)
        base = make_bounds(rng=rng, width=6.0)
        wide = ProsumptionBounds(l_up=base.l_up + 4.0, l_down=base.l_down - 4.0)
        wf = flat_wf(width_hzs=800.0)
        lim = default_limits()
        s_narrow = solve_day_ahead(build_problem(base, wf, lim, 0.5)).sigma_f
        s_wide = solve_day_ahead(build_problem(wide, wf, lim, 0.5)).sigma_f
        assert s_wide <= s_narrow + 1e-6

    def test_lp_homogeneity(self):
        rng = np.random.default_rng(3)
        bounds = make_bounds(rng=rng)
        wf = flat_wf(width_hzs=800.0)
        lim = default_limits()
        sol = solve_day_ahead(build_problem(bounds, wf, lim, 0.5))

        lim2 = BatteryLimits(e_nom=2 * lim.e_nom, p_min=2 * lim.p_min,
                             p_max=2 * lim.p_max)
        bounds2 = ProsumptionBounds(l_up=2 * bounds.l_up, l_down=2 * bounds.l_down)
        sol2 = solve_day_ahead(build_problem(bounds2, wf, lim2, 0.5))
        assert sol2.sigma_f == pytest.approx(2 * sol.sigma_f, rel=1e-6)

    def test_droop_zero_when_dispatch_exactly_tight(self):
        # bound width consuming the entire usable stored energy leaves sigma = 0
        # once any frequency-energy uncertainty is present
        lim = default_limits()
        usable = lim.e_nom * (lim.soc_max - lim.soc_min)  # kWh
        width = (usable / 24.0) * (1.0 - 1e-9)  # kW of width for 24 h
        bounds = make_bounds(width=width)
        prob = build_problem(bounds, flat_wf(width_hzs=600.0), lim, soe_0=0.5)
        sol = solve_day_ahead(prob)
        assert sol.status == "optimal"
        assert sol.sigma_f <= 0.05


class TestDispatchPlan:
    def test_zero_offset(self):
        l_hat = np.linspace(100, 150, N_SLOTS)
        assert np.array_equal(dispatch_plan(np.zeros(N_SLOTS), l_hat), l_hat)

    def test_zero_forecast(self):
        f = np.linspace(-5, 5, N_SLOTS)
        assert np.array_equal(dispatch_plan(f, np.zeros(N_SLOTS)), f)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(4)
        f = rng.normal(0, 5, N_SLOTS)
        l_hat = rng.normal(140, 10, N_SLOTS)
        plan = dispatch_plan(f, l_hat)
        for n in range(N_SLOTS):
            assert plan[n] == f[n] + l_hat[n]

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            dispatch_plan(np.zeros(N_SLOTS - 1), np.zeros(N_SLOTS))


class TestFileInterfaces:
    def test_plan_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        bounds = make_bounds(rng=rng)
        prob = build_problem(bounds, flat_wf(width_hzs=500.0), default_limits(), 0.5)
        sol = solve_day_ahead(prob)
        plan_path = tmp_path / "plan.csv"
        sigma_path = tmp_path / "sigma_f.json"
        save_plan_csv(plan_path, sol)
        save_sigma_json(sigma_path, sol)
        g_hat, f_offset = load_plan_csv(plan_path)
        assert np.allclose(g_hat, sol.dispatch_plan, rtol=1e-9)
        assert np.allclose(f_offset, sol.f_offset, rtol=1e-9, atol=1e-9)
        assert load_sigma_json(sigma_path) == pytest.approx(sol.sigma_f, rel=1e-9)
