import numpy as np
import pytest
from numpy.testing import assert_allclose

from innodpc import (CostWeights, DimensionError, RankError, Trajectory,
                     arx_hankel_set, arx_nullspace, build_hankel_set,
                     deepc_pinv_predict, deepc_projreg_solve,
                     deepc_split_solve, extract_window, fit_arx,
                     fit_deepc_pinv, fit_gamma_ddpc, fit_inno_pre, fit_iv,
                     fit_kalman_predictor, fit_kf_pre, fit_projreg, fit_spc,
                     fit_split, gamma_ddpc_factorize, gamma_ddpc_solve,
                     inno_pre_predict, iv_deepc_predict, kalman_filter_pass,
                     kalman_multistep_predict, kalman_window_pass,
                     kf_pre_predict, largest_nullspace_angle,
                     ls_residual_hankel, nullspace_basis, orth_projector,
                     pinv, simulate_closed_loop, simulate_open_loop, stream,
                     true_innovation_hankel, true_innovation_nullspace)
from innodpc.hankel import WindowData

from conftest import LF, LP, make_train_signal

COST = CostWeights(Q=[[1.0]], R=[[0.01]])


@pytest.fixture(scope="module")
def fresh_window(sys5):
    """A window from fresh noisy data, with kalman channels attached."""
    traj = simulate_open_loop(sys5, make_train_signal(120, 9001),
                              seed=stream(9002))
    return extract_window(traj, 60, LP, LF), traj


@pytest.fixture(scope="module")
def nf_window(sys5_noisefree, noisefree_traj):
    w = extract_window(noisefree_traj, 150, LP, LF)
    y_true = noisefree_traj.y[150:150 + LF].ravel()
    return w, y_true


class TestSpc:
    def test_noise_free_exact(self, noisefree_hankels, nf_window):
        w, y_true = nf_window
        pred = fit_spc(noisefree_hankels)
        assert_allclose(pred.predict(w), y_true, atol=1e-7)

    def test_consistent_linear_model(self, open_hankels):
        h = open_hankels
        phi = h.regressor
        m = stream(30).normal(size=(h.Yf.shape[0], phi.shape[0]))
        h2 = build_hankel_set(
            Trajectory(u=np.zeros((LP + LF, 1)), y=np.zeros((LP + LF, 1))),
            LP, LF)
        # direct construction: Yf = M Phi exactly
        import dataclasses
        h2 = dataclasses.replace(h, Yf=m @ phi)
        pred = fit_spc(h2)
        assert_allclose(pred.theta, m, atol=1e-8)

    def test_residual_orthogonality(self, open_hankels):
        e_hat, _ = ls_residual_hankel(open_hankels)
        phi = open_hankels.regressor
        assert np.abs(e_hat @ phi.T).max() < 1e-8

    def test_rank_error(self):
        traj = Trajectory(u=np.ones(40), y=np.ones(40))
        with pytest.raises(RankError, match="rank deficient"):
            fit_spc(build_hankel_set(traj, 3, 2))


class TestLsResidual:
    def test_noise_free_degenerate(self, noisefree_hankels):
        e_hat, ns = ls_residual_hankel(noisefree_hankels)
        assert np.abs(e_hat).max() < 1e-6
        # residual is numerically zero relative to the data scale, so with a
        # scale-aware tolerance the null space is everything
        data_scale = np.linalg.norm(noisefree_hankels.Yf)
        wide = nullspace_basis(e_hat, rank_tol=1e-6 * data_scale)
        assert wide.dim == noisefree_hankels.n_cols

    def test_open_loop_angle_decreases(self, sys5, km5):
        means = []
        for n_train in (100, 400):
            angles = []
            for i in range(6):
                traj = simulate_open_loop(
                    sys5, make_train_signal(n_train, 9100 + i),
                    seed=stream(9200 + i, n_train))
                h = build_hankel_set(traj, LP, LF)
                e_hat, _ = ls_residual_hankel(h)
                _, h_true = true_innovation_hankel(sys5, km5, traj, LP, LF)
                angles.append(largest_nullspace_angle(e_hat, h_true.Ef))
            means.append(np.mean(angles))
        assert means[1] < means[0]

    def test_closed_loop_biased(self, sys5, km5):
        """At large N the closed-loop LS estimate stays behind the ARX one."""
        ls_angles, arx_angles = [], []
        for i in range(5):
            traj = simulate_closed_loop(
                sys5, 5.0, make_train_signal(800, 9300 + i),
                seed=stream(9400 + i))
            h = build_hankel_set(traj, LP, LF)
            e_hat, _ = ls_residual_hankel(h)
            _, h_true = true_innovation_hankel(sys5, km5, traj, LP, LF)
            ls_angles.append(largest_nullspace_angle(e_hat, h_true.Ef))
            arx = fit_arx(traj, 10)
            h_aug = arx_hankel_set(traj, arx, LP, LF)
            _, h_true_a = true_innovation_hankel(sys5, km5, traj.slice(10),
                                                 LP, LF)
            arx_angles.append(largest_nullspace_angle(h_aug.Ef, h_true_a.Ef))
        assert np.mean(ls_angles) > np.mean(arx_angles)


class TestTrueNullspace:
    def test_basis_annihilates(self, sys5, km5, open_traj):
        ns = true_innovation_nullspace(sys5, km5, open_traj, LP, LF)
        _, h = true_innovation_hankel(sys5, km5, open_traj, LP, LF)
        prod = h.Ef @ ns.basis.basis
        assert np.abs(prod).max() <= 1e-10 * (1 + np.linalg.norm(h.Ef))

    def test_noise_free_total(self, sys5_noisefree, km5, noisefree_traj):
        ns = true_innovation_nullspace(sys5_noisefree, km5, noisefree_traj,
                                       LP, LF)
        assert ns.basis.dim == noisefree_traj.u.shape[0] - LP - LF + 1

    def test_filter_prediction_realization(self, sys5, km5, open_traj, fresh_window):
        """The minimum-norm g of the stacked constraints reproduces the
        filter prediction and is annihilated by the innovation Hankel."""
        aug, h = true_innovation_hankel(sys5, km5, open_traj, LP, LF)
        stacked = np.vstack([h.Up, h.Yp, h.Yhat_p, h.Uf, h.Ef])
        sp = pinv(stacked)
        w, _ = fresh_window
        yhat_ini, _, ykf = kalman_window_pass(km5, w, "zero")
        b = np.concatenate([w.u_ini, w.y_ini, yhat_ini, w.u_future,
                            np.zeros(LF)])
        g = sp @ b
        assert np.linalg.norm(h.Ef @ g) <= 1e-6 * (1 + np.linalg.norm(h.Ef))
        assert np.linalg.norm(h.Yf @ g - ykf) <= 1e-6 * (1 + np.linalg.norm(ykf))


class TestDeepcPinv:
    def test_equals_spc(self, open_hankels, fresh_window):
        w, _ = fresh_window
        y1 = fit_spc(open_hankels).predict(w)
        y2 = deepc_pinv_predict(open_hankels, w)
        assert np.abs(y1 - y2).max() < 1e-9

    def test_noise_free_exact(self, noisefree_hankels, nf_window):
        w, y_true = nf_window
        assert_allclose(deepc_pinv_predict(noisefree_hankels, w), y_true,
                        atol=1e-7)

    def test_zero_window(self, open_hankels):
        w = WindowData(u_ini=np.zeros(LP), y_ini=np.zeros(LP),
                       u_future=np.zeros(LF))
        assert np.abs(deepc_pinv_predict(open_hankels, w)).max() < 1e-10


class TestProjReg:
    def test_large_lambda_is_spc(self, open_hankels, fresh_window):
        w, _ = fresh_window
        r = np.sin(2 * np.pi * np.arange(LF) / 100)
        sol = deepc_projreg_solve(open_hankels, w, COST, 1e8, r_future=r)
        spc = fit_spc(open_hankels)
        w_at_u = WindowData(u_ini=w.u_ini, y_ini=w.y_ini, u_future=sol.u)
        assert np.abs(sol.yhat - spc.predict(w_at_u)).max() < 1e-4

    def test_lambda_zero_noise_free_unregularized(self, noisefree_hankels,
                                                  nf_window):
        """With no noise the lam=0 optimum equals the exact-predictor
        optimum computed through the least-squares map."""
        w, _ = nf_window
        r = 0.3 * np.ones(LF)
        sol = deepc_projreg_solve(noisefree_hankels, w, COST, 0.0, r_future=r)
        ref = fit_spc(noisefree_hankels).solve_control(w, COST, r)
        assert np.abs(sol.u - ref.u).max() < 1e-6
        assert np.abs(sol.yhat - ref.yhat).max() < 1e-6

    def test_feasible_reference_cost_vanishes(self, sys5_noisefree,
                                              noisefree_traj,
                                              noisefree_hankels):
        """An achievable reference with tiny input weight is tracked."""
        w = extract_window(noisefree_traj, 100, LP, LF)
        r = noisefree_traj.y[100:100 + LF].ravel()
        tiny = CostWeights(Q=[[1.0]], R=[[1e-10]])
        sol = deepc_projreg_solve(noisefree_hankels, w, tiny, 0.0, r_future=r)
        assert np.abs(sol.yhat - r).max() < 1e-5


class TestSplit:
    def test_large_lambda2_is_spc(self, open_hankels, fresh_window):
        w, _ = fresh_window
        r = np.sin(2 * np.pi * np.arange(LF) / 100)
        sol = deepc_split_solve(open_hankels, w, COST, 1.0, 1e8, r_future=r)
        spc = fit_spc(open_hankels)
        w_at_u = WindowData(u_ini=w.u_ini, y_ini=w.y_ini, u_future=sol.u)
        assert np.abs(sol.yhat - spc.predict(w_at_u)).max() < 1e-4

    def test_deviation_in_residual_range(self, open_hankels, fresh_window):
        w, _ = fresh_window
        r = 0.4 * np.ones(LF)
        sol = deepc_split_solve(open_hankels, w, COST, 0.5, 0.5, r_future=r)
        spc = fit_spc(open_hankels)
        w_at_u = WindowData(u_ini=w.u_ini, y_ini=w.y_ini, u_future=sol.u)
        dev = sol.yhat - spc.predict(w_at_u)
        e_hat, _ = ls_residual_hankel(open_hankels)
        basis, _, _ = np.linalg.svd(e_hat, full_matrices=False)
        outside = dev - basis @ (basis.T @ dev)
        assert np.linalg.norm(outside) < 1e-8 * (1 + np.linalg.norm(dev))

    def test_unpenalized_matches_reachable(self, open_hankels, fresh_window):
        w, _ = fresh_window
        r = 0.2 * np.ones(LF)
        tiny = CostWeights(Q=[[1.0]], R=[[1e-10]])
        sol = deepc_split_solve(open_hankels, w, tiny, 0.0, 0.0, r_future=r)
        assert np.abs(sol.yhat - r).max() < 1e-6


class TestGammaDdpc:
    def test_factorization_identities(self, open_hankels):
        h = open_hankels
        b = gamma_ddpc_factorize(h)
        stacked = np.vstack([h.Up, h.Yp, h.Uf, h.Yf])
        n1, n2 = b.L11.shape[0], b.L22.shape[0]
        l_full = np.zeros((stacked.shape[0], h.n_cols))
        l_full[:n1, :n1] = b.L11
        l_full[n1:n1 + n2, :n1] = b.L21
        l_full[n1:n1 + n2, n1:n1 + n2] = b.L22
        l_full[n1 + n2:, :n1] = b.L31
        l_full[n1 + n2:, n1:n1 + n2] = b.L32
        l_full[n1 + n2:, n1 + n2:] = b.L33
        q_full = np.vstack([b.Q1, b.Q2, b.Q3])
        assert np.linalg.norm(l_full @ q_full - stacked) <= \
            1e-10 * (1 + np.linalg.norm(stacked))
        e_hat, _ = ls_residual_hankel(h)
        lhs = b.L33 @ b.L33.T
        rhs = e_hat @ e_hat.T
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)
        _, pi_perp = orth_projector(h.regressor)
        assert np.linalg.norm(pi_perp - b.Q3.T @ b.Q3) <= \
            1e-8 * np.linalg.norm(pi_perp)

    def test_large_beta3_is_spc(self, open_hankels, fresh_window):
        w, _ = fresh_window
        r = np.sin(2 * np.pi * np.arange(LF) / 100)
        blocks = gamma_ddpc_factorize(open_hankels)
        sol = gamma_ddpc_solve(blocks, w, COST, 0.0, 1e8, r_future=r)
        spc = fit_spc(open_hankels)
        w_at_u = WindowData(u_ini=w.u_ini, y_ini=w.y_ini, u_future=sol.u)
        assert np.abs(sol.yhat - spc.predict(w_at_u)).max() < 1e-4

    def test_prediction_decomposition(self, open_hankels, fresh_window):
        w, _ = fresh_window
        r = 0.5 * np.ones(LF)
        blocks = gamma_ddpc_factorize(open_hankels)
        sol = gamma_ddpc_solve(blocks, w, COST, 0.0, 1e-6, r_future=r)
        spc = fit_spc(open_hankels)
        w_at_u = WindowData(u_ini=w.u_ini, y_ini=w.y_ini, u_future=sol.u)
        n1, n2 = blocks.L11.shape[0], blocks.L22.shape[0]
        gamma3 = sol.gamma[n1 + n2:]
        assert np.abs((sol.yhat - spc.predict(w_at_u))
                      - blocks.L33 @ gamma3).max() < 1e-8

    def test_zero_problem(self, open_hankels):
        w = WindowData(u_ini=np.zeros(LP), y_ini=np.zeros(LP),
                       u_future=np.empty(0))
        blocks = gamma_ddpc_factorize(open_hankels)
        sol = gamma_ddpc_solve(blocks, w, COST, 1.0, 1.0)
        assert np.abs(sol.u).max() < 1e-10
        assert np.abs(sol.yhat).max() < 1e-10
        assert np.abs(sol.gamma).max() < 1e-10

    def test_affine_map_matches_spc(self, open_hankels, fresh_window):
        w, _ = fresh_window
        pred = fit_gamma_ddpc(open_hankels)
        spc = fit_spc(open_hankels)
        assert np.abs(pred.predict(w) - spc.predict(w)).max() < 1e-8


class TestIv:
    def test_open_loop_equals_spc(self, open_hankels, fresh_window):
        w, _ = fresh_window
        y_iv, ns = iv_deepc_predict(open_hankels, open_hankels.regressor, w)
        y_spc = fit_spc(open_hankels).predict(w)
        assert np.abs(y_iv - y_spc).max() < 1e-8
        assert ns.method == "IV"

    def test_rank_condition_failure(self, open_hankels):
        z_short = np.vstack([open_hankels.Up, open_hankels.Yp])
        with pytest.raises(RankError, match="rank condition"):
            fit_iv(open_hankels, z_short)

    def test_constraint_annihilation_decays(self, sys5, km5):
        """g = Z' h is increasingly invisible to the true innovations."""
        resid = []
        for n_train in (100, 800):
            traj = simulate_open_loop(sys5, make_train_signal(n_train, 9500),
                                      seed=stream(9501, n_train))
            h = build_hankel_set(traj, LP, LF)
            _, h_true = true_innovation_hankel(sys5, km5, traj, LP, LF)
            pred = fit_iv(h, h.regressor)
            w = extract_window(traj, LP + 5, LP, LF)
            b = np.concatenate([w.u_ini, w.y_ini, w.u_future])
            g = h.regressor.T @ (pred.t_iv_pinv @ b)
            resid.append(np.linalg.norm(h_true.Ef @ g)
                         / (1 + np.linalg.norm(g)))
        assert resid[1] < resid[0]


class TestArx:
    def test_exact_low_order_model(self):
        """Data from a noise-free ARX(2) recursion is fitted exactly."""
        rng = stream(31)
        u = rng.normal(size=300)
        y = np.zeros(300)
        for t in range(2, 300):
            y[t] = 1.2 * y[t - 1] - 0.5 * y[t - 2] + 0.3 * u[t] + 0.1 * u[t - 2]
        traj = Trajectory(u=u, y=y)
        arx = fit_arx(traj, 2)
        assert np.abs(arx.residuals).max() < 1e-8
        assert_allclose(arx.coeff_y[0], [[1.2]], atol=1e-8)
        assert_allclose(arx.coeff_u[0], [[0.3]], atol=1e-8)

    def test_residual_variance_approaches_innovation(self, sys5, km5):
        var_e = float((sys5.C @ km5.P @ sys5.C.T + sys5.sigma_v)[0, 0])
        rng = stream(32)
        traj = simulate_open_loop(sys5, rng.normal(size=20_000), seed=rng)
        arx = fit_arx(traj, 20)
        assert abs(arx.residuals.var() - var_e) < 0.1 * var_e

    def test_lag0_flag_nested(self, open_traj):
        a1 = fit_arx(open_traj, 6, include_lag0=True)
        a0 = fit_arx(open_traj, 6, include_lag0=False)
        v1, v0 = a1.residuals.var(), a0.residuals.var()
        # the plant has no feedthrough, so the extra lag-0 term barely helps
        assert v0 <= 1.5 * v1

    def test_too_short(self):
        with pytest.raises(DimensionError):
            fit_arx(Trajectory(u=np.ones(10), y=np.ones(10)), 8)


class TestArxNullspace:
    def test_alignment_oracle(self, open_traj):
        """Column j of Ef must cover residual-stream times Lp+j .."""
        arx = fit_arx(open_traj, 10)
        ep, ef, ns = arx_nullspace(arx, open_traj, LP, LF)
        resid = arx.residuals_over(open_traj.u, open_traj.y)
        for j in (0, 7):
            assert np.array_equal(ef[:, j], resid[LP + j:LP + j + LF].ravel())
            assert np.array_equal(ep[:, j], resid[j:j + LP].ravel())
        assert ns.basis.dim == ef.shape[1] - np.linalg.matrix_rank(ef)

    def test_noise_free_degenerate(self, noisefree_traj):
        arx = fit_arx(noisefree_traj, 10)
        _, ef, ns = arx_nullspace(arx, noisefree_traj, LP, LF)
        assert np.abs(ef).max() < 1e-6
        data_scale = np.linalg.norm(noisefree_traj.y)
        wide = nullspace_basis(ef, rank_tol=1e-6 * data_scale)
        assert wide.dim == ef.shape[1]


@pytest.fixture(scope="module")
def true_inno_setup(sys5, km5, open_traj):
    """Hankels carrying the true innovations, plus a matched fresh window."""
    aug, h = true_innovation_hankel(sys5, km5, open_traj, LP, LF)
    fresh = simulate_open_loop(sys5, stream(33).normal(size=150),
                               seed=stream(34))
    fresh_aug = kalman_filter_pass(km5, fresh, xhat0=fresh.x[0])
    return h, fresh_aug


class TestInnoPre:
    def test_true_innovations_match_kalman(self, km5, true_inno_setup):
        h, fresh_aug = true_inno_setup
        t = 70
        w = extract_window(fresh_aug, t, LP, LF)
        got = inno_pre_predict(h, w)
        # reference: filter pass state at the window start, matched init
        xh = np.zeros(2)
        sys = km5.sys
        for k in range(t - LP):
            e = fresh_aug.y[k] - (sys.C @ xh + sys.D @ fresh_aug.u[k])
            xh = sys.A @ xh + sys.B @ fresh_aug.u[k] + km5.K @ e
        ykf = kalman_multistep_predict(km5, w, xhat_start=xh)
        assert np.abs(got - ykf).max() < 1e-6

    def test_reduce_routes_agree(self, true_inno_setup):
        h, fresh_aug = true_inno_setup
        w = extract_window(fresh_aug, 50, LP, LF)
        y1 = inno_pre_predict(h, w, reduce=True)
        y2 = inno_pre_predict(h, w, reduce=False)
        assert np.abs(y1 - y2).max() < 1e-8

    def test_noise_free_exact(self, sys5_noisefree, km5, noisefree_traj):
        aug = kalman_filter_pass(km5, noisefree_traj,
                                 xhat0=noisefree_traj.x[0])
        h = build_hankel_set(aug, LP, LF)
        w = extract_window(aug, 120, LP, LF)
        y_true = aug.y[120:120 + LF].ravel()
        assert np.abs(inno_pre_predict(h, w) - y_true).max() < 1e-6

    def test_missing_e_ini(self, true_inno_setup):
        h, fresh_aug = true_inno_setup
        w = extract_window(fresh_aug, 50, LP, LF)
        w = WindowData(u_ini=w.u_ini, y_ini=w.y_ini, u_future=w.u_future)
        with pytest.raises(DimensionError, match="e_ini"):
            inno_pre_predict(h, w)


class TestKfPre:
    def test_equals_inno_pre(self, true_inno_setup):
        h, fresh_aug = true_inno_setup
        w = extract_window(fresh_aug, 80, LP, LF)
        y1 = inno_pre_predict(h, w)
        y2 = kf_pre_predict(h, w)
        assert np.abs(y1 - y2).max() < 1e-8

    def test_true_blocks_match_kalman(self, km5, true_inno_setup):
        h, fresh_aug = true_inno_setup
        t = 90
        w = extract_window(fresh_aug, t, LP, LF)
        got = kf_pre_predict(h, w)
        sys = km5.sys
        xh = np.zeros(2)
        for k in range(t - LP):
            e = fresh_aug.y[k] - (sys.C @ xh + sys.D @ fresh_aug.u[k])
            xh = sys.A @ xh + sys.B @ fresh_aug.u[k] + km5.K @ e
        ykf = kalman_multistep_predict(km5, w, xhat_start=xh)
        assert np.abs(got - ykf).max() < 1e-6


class TestArxPredictors:
    """The predictors fitted from estimated (ARX) innovations."""

    def test_window_pipeline(self, sys5, closed_traj):
        arx = fit_arx(closed_traj, 10)
        h = arx_hankel_set(closed_traj, arx, LP, LF)
        inno = fit_inno_pre(h, arx)
        kfp = fit_kf_pre(h, arx)
        u_hist, y_hist = closed_traj.u[-40:], closed_traj.y[-40:]
        w1 = inno.make_window(u_hist, y_hist)
        w2 = kfp.make_window(u_hist, y_hist)
        assert_allclose(w2.yhat_ini, w1.y_ini - w1.e_ini, atol=1e-14)
        assert inno.required_history() == LP + 10

    def test_noise_free_exactness(self, sys5_noisefree, noisefree_traj):
        arx = fit_arx(noisefree_traj, 10)
        h = arx_hankel_set(noisefree_traj, arx, LP, LF)
        aug_subset = noisefree_traj.slice(10)
        t = 100
        w = extract_window(aug_subset, t, LP, LF)
        e_ini = arx.residual_window(aug_subset.u[:t], aug_subset.y[:t], LP)
        w = WindowData(u_ini=w.u_ini, y_ini=w.y_ini, u_future=w.u_future,
                       e_ini=e_ini.ravel(),
                       yhat_ini=w.y_ini - e_ini.ravel())
        y_true = aug_subset.y[t:t + LF].ravel()
        assert np.abs(fit_inno_pre(h, arx).predict(w) - y_true).max() < 1e-6
        assert np.abs(fit_kf_pre(h, arx).predict(w) - y_true).max() < 1e-6


class TestKalmanPredictorAdapter:
    @pytest.mark.parametrize("init", ["zero", "reconstruct"])
    def test_matches_recursion(self, km5, fresh_window, init):
        w, _ = fresh_window
        pred = fit_kalman_predictor(km5, LP, LF, init=init)
        assert_allclose(pred.predict(w),
                        kalman_multistep_predict(km5, w, xhat_start=init),
                        atol=1e-9)


class TestNullspaceSoundness:
    def test_each_estimate_annihilates_its_hankel(self, sys5, km5, open_traj):
        h = build_hankel_set(open_traj, LP, LF)
        e_hat, ns_ls = ls_residual_hankel(h)
        assert np.abs(e_hat @ ns_ls.basis.basis).max() <= \
            1e-8 * (1 + np.linalg.norm(e_hat))
        arx = fit_arx(open_traj, 10)
        _, ef, ns_arx = arx_nullspace(arx, open_traj, LP, LF)
        assert np.abs(ef @ ns_arx.basis.basis).max() <= \
            1e-8 * (1 + np.linalg.norm(ef))
