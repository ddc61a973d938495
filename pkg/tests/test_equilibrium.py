import numpy as np
import pytest
from hypothesis import given, strategies as st

from duopoly.bass_core import BassParams, MarketState, final_state, integrate
from duopoly.equilibrium import (analyze_perturbation, fig1_deltas, landing_point,
                                 linearization_coeffs, perturbation_constants,
                                 perturbation_evolution, solve_within_brand_equilibrium,
                                 sweep_fig1, sweep_fig2, within_brand_residual)
from duopoly.errors import DegenerateLinearizationError, InvalidParamsError

coef = st.floats(0.0, 1.0)


@st.composite
def bass(draw, min_p=0.0):
    return BassParams(draw(st.floats(min_p, 1.0)), draw(st.floats(min_p, 1.0)),
                      draw(coef), draw(coef), draw(coef), draw(coef))


class TestLinearization:
    def test_at_n1_zero(self):
        p = BassParams(0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
        assert linearization_coeffs(p, 0.0) == (-(0.1 + 0.5), -(0.2 + 0.4))

    def test_at_n1_one(self):
        p = BassParams(0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
        a, b = linearization_coeffs(p, 1.0)
        assert a == pytest.approx(-(0.1 + 0.3)) and b == pytest.approx(-(0.2 + 0.6))

    @given(bass(), st.floats(0.0, 1.0))
    def test_sum_identity(self, p, x):
        a, b = linearization_coeffs(p, x)
        expected = -(p.p1 + p.p2) - (p.q11 + p.q21) * x - (p.q12 + p.q22) * (1 - x)
        assert a + b == pytest.approx(expected, abs=1e-12)

    @given(bass(min_p=1e-6), st.floats(0.0, 1.0))
    def test_sum_negative(self, p, x):
        a, b = linearization_coeffs(p, x)
        assert a + b < 0

    def test_out_of_range(self):
        with pytest.raises(InvalidParamsError):
            linearization_coeffs(BassParams(0.1, 0.1, 0.1, 0.1), 1.5)


class TestPerturbation:
    def test_along_line_is_frozen(self):
        c1, c2 = perturbation_constants(-0.3, -0.5, 1e-3, -1e-3)
        assert c2 == 0.0 and c1 == pytest.approx(1e-3)

    def test_return_to_origin_condition(self):
        a, b = -0.3, -0.5
        dn2 = -1e-3
        c1, _ = perturbation_constants(a, b, a * dn2 / b, dn2)
        assert c1 == pytest.approx(0.0, abs=1e-18)

    @pytest.mark.parametrize("a,b", [(-0.3, -0.5), (-0.7, -0.2), (-0.4, -0.4)])
    def test_equal_components(self, a, b):
        d = 1e-3
        c1, _ = perturbation_constants(a, b, d, d)
        assert c1 == pytest.approx(d * (b - a) / (b + a), rel=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateLinearizationError):
            perturbation_constants(-0.1, 0.0, 1e-3, 1e-3)
        with pytest.raises(DegenerateLinearizationError):
            perturbation_constants(0.1, -0.1, 1e-3, 1e-3)

    @given(st.floats(-2, -0.01), st.floats(-2, -0.01), st.floats(-1e-3, 1e-3), st.floats(-1e-3, 1e-3))
    def test_initial_condition_recovered(self, a, b, d1, d2):
        c1, c2 = perturbation_constants(a, b, d1, d2)
        x1, x2 = perturbation_evolution(a, b, c1, c2, 0.0)
        assert x1 == pytest.approx(d1, abs=1e-15) and x2 == pytest.approx(d2, abs=1e-15)

    def test_asymptote(self):
        c1, c2 = perturbation_constants(-0.3, -0.5, -4e-4, -2e-4)
        x1, x2 = perturbation_evolution(-0.3, -0.5, c1, c2, 200.0)
        assert (x1, x2) == pytest.approx((c1, -c1), abs=1e-18)
        assert x1 + x2 == pytest.approx(0.0, abs=1e-18)

    @pytest.mark.parametrize("seed", range(5))
    def test_linear_solution_tracks_nonlinear_system(self, seed):
        rng = np.random.default_rng(seed)
        p = BassParams(*rng.uniform(0.01, 0.1, 2), *rng.uniform(0.1, 0.8, 2), *rng.uniform(0, 0.5, 2))
        n1s = rng.uniform(0.2, 0.8)
        d1 = rng.uniform(-1e-3, 1e-3)
        d2 = rng.uniform(-1e-3, min(1e-3, -d1))
        pa = analyze_perturbation(p, n1s, d1, d2)
        land = landing_point(p, MarketState(0.0, n1s + d1, 1 - n1s + d2))
        assert land.n1 - n1s == pytest.approx(pa.c1, abs=5e-5)
        assert land.n2 - (1 - n1s) == pytest.approx(-pa.c1, abs=5e-5)
        # mid-course too
        tr = integrate(p, MarketState(0.0, n1s + d1, 1 - n1s + d2), t_end=2.0)
        lin = pa.evolve(tr.t)
        assert np.max(np.abs(tr.n1 - n1s - lin[0])) < 5e-6


class TestWithinBrand:
    def test_symmetric_brands_split_evenly(self):
        assert solve_within_brand_equilibrium(0.03, 0.03, 0.4, 0.4).n1 == pytest.approx(0.5, abs=1e-12)

    def test_imitation_advantage(self):
        # a 250% larger imitation rate gives brand 2 roughly 80% of the market
        assert solve_within_brand_equilibrium(0.03, 0.03, 0.2, 0.7).n2 == pytest.approx(0.8, abs=0.01)

    def test_innovation_advantage_matches_equal_q_closed_form(self):
        # with q11 == q22 the relation collapses to n1/p1 = n2/p2
        eq = solve_within_brand_equilibrium(0.01, 0.035, 0.4, 0.4)
        assert eq.n2 == pytest.approx(0.035 / 0.045, abs=1e-12)

    @given(st.floats(0.005, 0.2), st.floats(0.005, 0.2), st.floats(0.05, 1.0))
    def test_equal_imitation_closed_form(self, p1, p2, q):
        eq = solve_within_brand_equilibrium(p1, p2, q, q)
        assert eq.n1 == pytest.approx(p1 / (p1 + p2), abs=1e-11)

    @given(st.floats(0.005, 0.2), st.floats(0.005, 0.2), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
    def test_root_properties(self, p1, p2, q11, q22):
        eq = solve_within_brand_equilibrium(p1, p2, q11, q22)
        assert 0 < eq.n1 < 1 and eq.n1 + eq.n2 == pytest.approx(1.0, abs=1e-12)
        assert abs(float(within_brand_residual(eq.n1, p1, p2, q11, q22))) < 1e-11
        # unique root: residual crosses zero once and increases on a 1e-3 grid
        grid = within_brand_residual(np.linspace(0, 1, 1001), p1, p2, q11, q22)
        assert grid[0] < 0 < grid[-1] and np.all(np.diff(grid) > 0)

    @pytest.mark.parametrize("c", [(0.02, 0.05, 0.3, 0.6), (0.1, 0.01, 0.8, 0.1), (0.04, 0.04, 0.15, 0.75)])
    def test_agrees_with_integration(self, c):
        eq = solve_within_brand_equilibrium(*c)
        state, saturated = final_state(BassParams(*c))
        assert saturated and eq.n1 == pytest.approx(state.n1, abs=1e-4)

    @pytest.mark.parametrize("bad", [(0, 0.1, 0.1, 0.1), (0.1, 0.1, -0.1, 0.1), (0.1, 0.1, 0.1, 0.0)])
    def test_invalid(self, bad):
        with pytest.raises(InvalidParamsError):
            solve_within_brand_equilibrium(*bad)


class TestSweeps:
    def test_fig1_imitation(self):
        rows = sweep_fig1(BassParams(0.03, 0.03, 0.2, 0.2), fig1_deltas("imitation"), "imitation")
        assert [r.delta for r in rows] == pytest.approx([0.1 * i for i in range(9)])
        assert (rows[0].n1, rows[0].n2) == pytest.approx((0.5, 0.5), abs=1e-12)
        assert np.all(np.diff([r.n2 for r in rows]) > 0)

    def test_fig1_innovation(self):
        rows = sweep_fig1(BassParams(0.01, 0.01, 0.4, 0.4), fig1_deltas("innovation"), "innovation")
        assert len(rows) == 10 and np.all(np.diff([r.n2 for r in rows]) > 0)

    @pytest.mark.parametrize("which,base", [("imitation", BassParams(0.03, 0.03, 0.2, 0.2)),
                                            ("innovation", BassParams(0.01, 0.01, 0.4, 0.4))])
    def test_fig1_rows_match_integration(self, which, base):
        for r in sweep_fig1(base, fig1_deltas(which), which):
            if which == "imitation":
                p = BassParams(base.p1, base.p2, base.q11, base.q11 + r.delta)
            else:
                p = BassParams(base.p1, base.p1 + r.delta, base.q11, base.q22)
            state, _ = final_state(p)
            assert r.n1 == pytest.approx(state.n1, abs=1e-4)

    def test_fig2_cases(self):
        trajs = sweep_fig2(BassParams(0.03, 0.06, 0.38, 0.68), t_end=100)
        assert list(trajs) == ["A", "B", "C", "D"]
        a, c = trajs["A"], trajs["C"]
        assert np.all(a.n2[1:] > a.n1[1:])
        assert abs(c.final.n1 - c.final.n2) < abs(a.final.n1 - a.final.n2)
        assert all(np.array_equal(t.t, a.t) for t in trajs.values())

    def test_fig2_case_list(self):
        trajs = sweep_fig2(BassParams(0.03, 0.06, 0.38, 0.68), [(0.0, 0.0)], t_end=10)
        assert list(trajs) == ["0"]
