"""The centred-quadric system: reduction, conservation, turning points,
quadrature against direct integration, limits, and the periodicity search."""

import numpy as np
import pytest

from conftest import random_case_d
from slevolve import ValidationError, centred
from slevolve.centred import (CentredParams, PeriodicSolution,
                              ReducedState, WVector, beta_limits, betas,
                              betas_ode, classify_case, classify_topology,
                              integrate_w, normalize_lambda, periodic_search,
                              quadrature_solution, reduce_state, rhs_reduced,
                              rhs_w, symmetric_alphas, turning_points,
                              verify_periodic, w_initial)


class TestRhsW:
    def test_m3_unit_start(self):
        dw = rhs_w(np.array([1.0, 1.0, 1.0], complex), 1)
        assert np.allclose(dw, [1.0, -1.0, -1.0])

    def test_m2_mixed(self):
        dw = rhs_w(np.array([1j, 1.0]), 1)
        assert np.allclose(dw, [1.0, 1j])

    def test_wvector_wrapper(self):
        wv = WVector((1.0, 1j, 2.0))
        assert np.allclose(rhs_w(wv, 2), rhs_w(wv.array, 2))

    def test_zero_w_rejected(self):
        with pytest.raises(ValidationError):
            WVector((1.0, 0.0, 1.0))


class TestNormalizeLambda:
    def test_hand_value(self):
        alphas, lam = normalize_lambda([1.0, 1.0, 1.0], 1)
        assert lam == pytest.approx(1.0 / 3.0, abs=1e-14)
        assert np.allclose(alphas, [2 / 3, 4 / 3, 4 / 3], atol=1e-14)

    def test_fixed_point(self):
        base = symmetric_alphas(4, 2)
        alphas, lam = normalize_lambda(base, 2)
        assert lam == pytest.approx(0.0, abs=1e-14)
        assert np.allclose(alphas, base, atol=1e-14)

    def test_residual_random(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            m = int(rng.integers(2, 7))
            a = int(rng.integers(1, m))
            s = rng.uniform(0.3, 3.0, size=m)
            alphas, _ = normalize_lambda(s, a)
            al = np.asarray(alphas)
            assert np.all(al > 0)
            resid = np.sum(1 / al[:a]) - np.sum(1 / al[a:])
            assert abs(resid) <= 1e-12


class TestReduce:
    def test_unit_alphas_quarter_circle(self):
        params = CentredParams(3, 1, (1.0, 1.0, 1.0), 0.0, c=1.0)
        w = np.exp(1j * np.pi / 6) * np.ones(3)
        state, A = reduce_state(w, params)
        assert state.u == pytest.approx(0.0, abs=1e-15)
        assert A == pytest.approx(1.0, abs=1e-12)

    def test_zero_angles_zero_A(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 0.0, c=1.0)
        w = np.sqrt([1.0, 2.0, 2.0]).astype(complex)
        _, A = reduce_state(w, params)
        assert A == 0.0

    def test_inconsistent_moduli_rejected(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 0.0, c=1.0)
        with pytest.raises(ValidationError):
            reduce_state(np.array([1.0, 1.0, 1.0], complex), params)

    def test_conservation_along_trajectory(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 1.0, c=1.0)
        T = betas(params).period_T
        path = integrate_w(w_initial(params), 1, 3 * T)
        grid = np.linspace(0.0, 3 * T, 1500)
        W = path.w(grid)
        al = params.alpha_array
        u = (np.abs(W[:, 0]) ** 2 - al[0])
        theta = np.unwrap(np.angle(W), axis=0).sum(axis=1)
        drift = np.abs(np.sqrt(params.Q(u)) * np.sin(theta) - params.A)
        assert drift.max() <= 1e-8

    def test_pairwise_modulus_laws(self):
        params = CentredParams(4, 2, symmetric_alphas(4, 2), 0.6, c=1.0)
        path = integrate_w(w_initial(params), 2, 5.0)
        W = path.w(np.linspace(0, 5.0, 800))
        mods = np.abs(W) ** 2
        # across the split: sums constant; within a group: differences
        for i in range(2):
            for j in range(2, 4):
                vals = mods[:, i] + mods[:, j]
                assert vals.max() - vals.min() <= 1e-9
        diff = mods[:, 0] - mods[:, 1]
        assert diff.max() - diff.min() <= 1e-9


class TestRhsReduced:
    def test_case_c_rates(self):
        al = (1.0, 2.0, 2.0)
        params = CentredParams(3, 1, al, float(np.sqrt(np.prod(al))), c=1.0)
        thetas = (np.pi / 6, np.pi / 6, np.pi / 6)
        du, dth = rhs_reduced(ReducedState(0.0, thetas), params)
        assert abs(du) <= 1e-14
        want = -params.signs * params.A / params.alpha_array
        assert np.allclose(dth, want, atol=1e-14)

    def test_zero_A_freezes_angles(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 0.0, c=1.0)
        du, dth = rhs_reduced(ReducedState(0.2, (0.0, 0.0, 0.0)), params)
        assert np.allclose(dth, 0.0)
        assert du == pytest.approx(2 * np.sqrt(params.Q(0.2)), rel=1e-14)

    def test_chain_rule_consistency(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 1.0, c=1.0)
        path = integrate_w(w_initial(params), 1, 1.0)
        h = 1e-6
        for t in (0.11, 0.43, 0.77):
            sp, _ = reduce_state(path.w(t + h), params)
            sm, _ = reduce_state(path.w(t - h), params)
            du_fd = (sp.u - sm.u) / (2 * h)
            dth_fd = (np.asarray(sp.thetas) - np.asarray(sm.thetas)) / (2 * h)
            s0, _ = reduce_state(path.w(t), params)
            du, dth = rhs_reduced(s0, params)
            assert du_fd == pytest.approx(du, abs=1e-9 * (1 + abs(du)))
            assert np.allclose(dth_fd, dth, atol=1e-9)

    def test_domain_violation_rejected(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 1.0, c=1.0)
        with pytest.raises(ValidationError):
            rhs_reduced(ReducedState(-1.5, (0.0, 0.0, 0.0)), params)


class TestTurningPoints:
    def test_collapse_at_maximal_A(self):
        al = (1.0, 2.0, 2.0)
        A = (1 - 1e-10) * float(np.sqrt(np.prod(al)))
        g, d = turning_points(CentredParams(3, 1, al, A, c=1.0))
        assert abs(g) < 2e-5 and abs(d) < 2e-5

    def test_roots_against_dense_scan(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 1.0, c=1.0)
        g, d = turning_points(params)
        assert params.Q(g) == pytest.approx(1.0, abs=1e-12)
        assert params.Q(d) == pytest.approx(1.0, abs=1e-12)
        assert -1 < g < 0 < d < 2
        # dense-scan oracle: sign changes of Q - A^2 bracket the same roots
        us = np.linspace(-1 + 1e-9, 2 - 1e-9, 40_001)
        vals = params.Q(us) - 1.0
        sign_changes = np.nonzero(np.diff(np.sign(vals)))[0]
        roots = us[sign_changes]
        assert min(abs(roots - g)) < 1e-4
        assert min(abs(roots - d)) < 1e-4

    def test_symmetric_case(self):
        params = CentredParams(4, 2, (1.0, 1.0, 1.0, 1.0), 0.5, c=1.0)
        g, d = turning_points(params)
        assert g == pytest.approx(-d, abs=1e-12)

    def test_A_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            turning_points(CentredParams(3, 1, (1.0, 2.0, 2.0), 2.5, c=1.0))
        with pytest.raises(ValidationError):
            turning_points(CentredParams(3, 1, (1.0, 2.0, 2.0), 0.0, c=1.0))


class TestQuadratureSolution:
    def test_small_A_angles_frozen(self):
        al = (1.0, 2.0, 2.0)
        arc_small = quadrature_solution(
            CentredParams(3, 1, al, 1e-6, c=1.0), -0.2, 0.3)
        assert np.max(np.abs(arc_small.dthetas)) < 1e-5

    def test_round_trip_against_ode(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 1.0, c=1.0)
        path = integrate_w(w_initial(params), 1, 0.5)
        # theta(0) is in (0, pi/2); follow the rising branch of u
        t1 = 0.3
        s0, _ = reduce_state(path.w(0.0), params)
        s1, _ = reduce_state(path.w(t1), params)
        arc = quadrature_solution(params, s0.u, s1.u)
        dth_ode = np.asarray(s1.thetas) - np.asarray(s0.thetas)
        assert np.allclose(arc.dthetas, dth_ode, atol=1e-8)
        assert arc.dt == pytest.approx(t1, abs=1e-9)

    def test_half_period_time(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 1.0, c=1.0)
        res = betas(params)
        arc = quadrature_solution(params, res.gamma, res.delta)
        T_ode = betas_ode(params).period_T
        assert arc.dt == pytest.approx(T_ode / 2, abs=1e-7)

    def test_outside_interval_rejected(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 1.0, c=1.0)
        with pytest.raises(ValidationError):
            quadrature_solution(params, 0.0, 1.9)

    def test_reversed_arc_negates(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 1.0, c=1.0)
        fwd = quadrature_solution(params, -0.3, 0.6)
        back = quadrature_solution(params, 0.6, -0.3)
        assert np.allclose(fwd.dthetas, -np.asarray(back.dthetas), atol=1e-12)
        assert fwd.dt == pytest.approx(-back.dt, abs=1e-12)


class TestBetas:
    def test_m2_exact(self):
        rng = np.random.default_rng(32)
        for _ in range(20):
            params = random_case_d(rng, 2, a=1)
            res = betas(params)
            assert np.allclose(res.betas, [-np.pi, np.pi], atol=1e-8)

    def test_limits_122(self):
        al = (1.0, 2.0, 2.0)
        A_max = float(np.sqrt(np.prod(al)))
        lim = beta_limits(al, 1)
        assert (lim.k, lim.l) == (1, 2)
        assert np.allclose(lim.small_A, [-np.pi, np.pi / 2, np.pi / 2])
        want = 2 * np.pi / np.sqrt(3)
        assert np.allclose(lim.large_A, [-want, want / 2, want / 2], atol=1e-14)
        # sum of squares of the large-A limit is 2 pi^2 identically
        assert np.sum(np.asarray(lim.large_A) ** 2) == pytest.approx(
            2 * np.pi ** 2, abs=1e-10)
        for frac, target in ((1e-3, lim.small_A), ((1 - 1e-3), lim.large_A)):
            res = betas(CentredParams(3, 1, al, frac * A_max, c=1.0))
            rel = np.abs((np.asarray(res.betas) - target) / np.asarray(target))
            assert rel.max() < 0.02

    def test_sum_and_signs_random(self):
        rng = np.random.default_rng(33)
        for _ in range(8):
            params = random_case_d(rng, int(rng.integers(3, 6)))
            res = betas(params)
            assert abs(sum(res.betas)) <= 1e-10
            b = np.asarray(res.betas)
            assert np.all(b[:params.a] < 0) and np.all(b[params.a:] > 0)

    def test_quadrature_matches_ode(self):
        rng = np.random.default_rng(34)
        for _ in range(4):
            params = random_case_d(rng, int(rng.integers(3, 5)))
            q = betas(params)
            o = betas_ode(params)
            assert np.allclose(q.betas, o.betas, atol=1e-6)
            assert q.period_T == pytest.approx(o.period_T, abs=1e-7)

    def test_higher_dimension_sanity(self):
        rng = np.random.default_rng(36)
        params = random_case_d(rng, 6, a=3)
        q = betas(params)
        o = betas_ode(params)
        assert abs(sum(q.betas)) <= 1e-10
        assert np.allclose(q.betas, o.betas, atol=1e-6)

    def test_scaling_invariance(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 1.0, c=1.0)
        base = betas(params)
        for kappa in (0.5, 2.0):
            scaled = CentredParams(
                3, 1, tuple(kappa ** 2 * a for a in params.alphas),
                kappa ** params.m * params.A, c=1.0)
            res = betas(scaled)
            assert np.allclose(res.betas, base.betas, atol=1e-8)
            want_T = kappa ** (2 - params.m) * base.period_T
            assert res.period_T == pytest.approx(want_T, rel=1e-8)

    def test_case_d_required(self):
        with pytest.raises(ValidationError):
            betas(CentredParams(3, 3, (1.0, 1.0, 1.0), 0.5, c=1.0))

    def test_serialization(self):
        res = betas(CentredParams(3, 1, (1.0, 2.0, 2.0), 1.0, c=1.0))
        d = res.to_dict()
        assert abs(d["sum_betas"]) <= 1e-10
        assert d["period_T"] == res.period_T


class TestBetaLimitsGeneral:
    def test_distinct_second_group(self):
        # group-2 minimum has multiplicity 1: the limit mass sits there
        al = (1.0, 2.0, 4.0, 4.0)
        lim = beta_limits(al, 1)
        assert (lim.k, lim.l) == (1, 1)
        assert np.allclose(lim.small_A, [-np.pi, np.pi, 0.0, 0.0])
        res = betas(CentredParams(4, 1, al, 1e-4 * np.sqrt(np.prod(al)), c=1.0))
        rel = np.abs(np.asarray(res.betas) - np.asarray(lim.small_A))
        assert rel.max() < 0.02

    def test_requires_normalization(self):
        with pytest.raises(ValidationError):
            beta_limits((1.0, 1.5, 2.0), 1)


class TestCaseClassification:
    def test_labels(self):
        al = (1.0, 2.0, 2.0)
        A_max = float(np.sqrt(np.prod(al)))
        assert classify_case(CentredParams(3, 1, al, 0.0, c=1.0)) == "a"
        assert classify_case(CentredParams(3, 3, (1, 1, 1), 0.5, c=1.0)) == "b"
        assert classify_case(CentredParams(3, 1, al, A_max, c=1.0)) == "c"
        assert classify_case(CentredParams(3, 1, al, 0.7 * A_max, c=1.0)) == "d"

    def test_case_c_closed_form_vs_ode(self):
        from slevolve.meshverify import CaseCWPath
        al = (1.0, 2.0, 2.0)
        params = CentredParams(3, 1, al, float(np.sqrt(np.prod(al))), c=1.0)
        closed = CaseCWPath(params)
        path = integrate_w(closed.w(0.0), 1, 10.0)
        grid = np.linspace(0.0, 10.0, 400)
        assert np.abs(path.w(grid) - closed.w(grid)).max() <= 1e-9

    def test_case_b_escape(self):
        # the ellipsoid family leaves every bounded set in finite time
        params = CentredParams(3, 3, (1.0, 1.2, 0.9), 0.0, c=1.0)
        w0 = np.sqrt(np.asarray(params.alphas)).astype(complex)
        from scipy.integrate import solve_ivp

        def rhs(t, y):
            w = y[:3] + 1j * y[3:]
            dw = rhs_w(w, 3)
            return np.concatenate([dw.real, dw.imag])

        def guard(t, y):
            return np.linalg.norm(y) - 1e6

        guard.terminal = True
        guard.direction = 1.0
        y0 = np.concatenate([w0.real, w0.imag])
        sol = solve_ivp(rhs, (0, 100.0), y0, method="DOP853", rtol=1e-10,
                        atol=1e-12, events=guard, dense_output=True)
        assert sol.status == 1  # escaped before t = 100
        t_esc = sol.t_events[0][0]
        # u is monotone near the escape time
        ts = np.linspace(0.8 * t_esc, 0.999 * t_esc, 50)
        W = sol.sol(ts)
        u = W[0] ** 2 + W[3] ** 2  # |w_1|^2 grows without bound
        assert np.all(np.diff(u) > 0)


class TestTopologyLabels:
    def _sol(self, a_vec, b, c):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 1.0, c=c)
        return PeriodicSolution(params, a_vec, b)

    def test_m3_labels(self):
        assert classify_topology(self._sol((-8, 4, 4), 7, 0.0), 0.0) \
            == "two T²-cones, N_− = −N_+"
        assert classify_topology(self._sol((-7, 4, 3), 6, -1.0), -1.0) \
            == "Klein-bottle line bundle, one end T²×(0,∞)"

    def test_general_label(self):
        params = CentredParams(4, 2, symmetric_alphas(4, 2), 0.5, c=1.0)
        sol = PeriodicSolution(params, (-2, -2, 2, 2), 3)
        assert classify_topology(sol, 1.0) == "S^1×R^2×S^1 (possibly /Z₂)"
        assert classify_topology(sol, -1.0) == "R^2×S^1×S^1 (possibly /Z₂)"
        assert classify_topology(sol, 0.0) \
            == "cone on S^1×S^1×S^1 (possibly /Z₂)"

    def test_integer_data_invariants(self):
        with pytest.raises(ValidationError):
            self._sol((-8, 4, 5), 7, 0.0)  # does not sum to zero
        with pytest.raises(ValidationError):
            self._sol((-8, 4, 4), 8, 0.0)  # common factor with b


class TestPeriodicSearch:
    def test_symmetric_family_m3(self):
        sols = periodic_search(symmetric_alphas(3, 1), 1, b_max=8, tol=1e-8)
        keys = {(s.int_angles, s.denom) for s in sols}
        assert ((-8, 4, 4), 7) in keys
        sol = next(s for s in sols if s.denom == 7)
        assert sol.residual <= 1e-8
        assert sol.topology  # label filled by parity
        res = betas(sol.params)
        target = np.pi * np.asarray(sol.int_angles) / sol.denom
        assert np.allclose(res.betas, target, atol=1e-8)

    def test_reverification_by_ode(self):
        sols = periodic_search(symmetric_alphas(3, 1), 1, b_max=8, tol=1e-8)
        sol = next(s for s in sols if s.denom == 7)
        check = verify_periodic(sol)
        assert check["max_defect"] <= 1e-6

    def test_m2_everything_periodic(self):
        sols = periodic_search((1.3, 1.3), 1, b_max=4, tol=1e-8, n_grid=12)
        assert any(s.int_angles == (-1, 1) and s.denom == 1 for s in sols)

    def test_family_scan_list(self):
        fams = [symmetric_alphas(3, 1)]
        sols = periodic_search(fams, 1, b_max=7, tol=1e-8, n_grid=48)
        assert any(s.denom == 7 for s in sols)

    def test_solution_round_trip(self):
        params = CentredParams(3, 1, (1.0, 2.0, 2.0), 1.1, c=0.0)
        sol = PeriodicSolution(params, (-8, 4, 4), 7, topology="x",
                               residual=1e-9)
        d = sol.to_dict()
        back = PeriodicSolution.from_dict(d)
        assert back.int_angles == sol.int_angles
        assert back.denom == sol.denom
        assert back.params.alphas == sol.params.alphas
        assert d["parities"] == [0, 0, 0]


class TestParamsValidation:
    def test_a_m_needs_positive_c(self):
        with pytest.raises(ValidationError):
            CentredParams(3, 3, (1.0, 1.0, 1.0), 0.5, c=0.0)

    def test_unnormalized_case_d_rejected(self):
        with pytest.raises(ValidationError):
            CentredParams(3, 1, (1.0, 1.5, 2.0), 0.5, c=1.0).require_case_d()

    def test_w_initial_matches_params(self):
        rng = np.random.default_rng(35)
        for _ in range(10):
            params = random_case_d(rng, 4)
            w0 = w_initial(params)
            state, A = reduce_state(w0, params)
            assert A == pytest.approx(params.A, rel=1e-12)
            assert state.u == pytest.approx(0.0, abs=1e-12)
