import numpy as np
import pytest
from numpy.testing import assert_allclose

from innodpc import (DimensionError, Trajectory, build_hankel_set,
                     extract_window, persistency_order, pinv, stream)
from innodpc.hankel import block_hankel

from conftest import LF, LP


def scalar_traj(vals):
    v = np.asarray(vals, dtype=float)
    return Trajectory(u=v, y=v)


class TestBuildHankelSet:
    def test_scalar_example(self):
        h = build_hankel_set(scalar_traj([1, 2, 3, 4, 5]), Lp=2, Lf=1)
        assert_allclose(h.Up, [[1, 2, 3], [2, 3, 4]])
        assert_allclose(h.Uf, [[3, 4, 5]])
        assert h.n_cols == 3

    def test_minimal(self):
        h = build_hankel_set(scalar_traj([7, 8]), Lp=1, Lf=1)
        assert_allclose(h.Up, [[7]])
        assert_allclose(h.Uf, [[8]])

    def test_two_channel_block_structure(self):
        # index-arithmetic oracle: block (i, j) of Up is u[i + j]
        u = np.arange(8.0).reshape(4, 2)
        traj = Trajectory(u=u, y=np.zeros((4, 1)))
        h = build_hankel_set(traj, Lp=2, Lf=1)
        for i in range(2):
            for j in range(h.n_cols):
                assert_allclose(h.Up[2 * i:2 * i + 2, j], u[i + j])
                assert_allclose(h.Uf[:, j].reshape(-1, 2)[0], u[2 + j])

    def test_too_short_names_lengths(self):
        with pytest.raises(DimensionError, match="3 < required Lp \\+ Lf = 4"):
            build_hankel_set(scalar_traj([1, 2, 3]), Lp=2, Lf=2)

    def test_optional_channels(self, sys5, km5, open_traj):
        from innodpc import kalman_filter_pass
        aug = kalman_filter_pass(km5, open_traj)
        h = build_hankel_set(aug, LP, LF)
        assert h.Ef is not None and h.Yhat_f is not None
        assert_allclose(h.Ef, h.Yf - h.Yhat_f, atol=1e-14)


class TestPersistency:
    def test_constant_fails(self):
        assert persistency_order([1.0, 1.0, 1.0, 1.0], 2) is False

    def test_periodic_pulse(self):
        sig = [1.0, 0.0, 0.0] * 4
        assert persistency_order(sig, 2) is True

    def test_white_noise(self):
        sig = stream(3).normal(size=50)
        assert persistency_order(sig, 10) is True

    def test_square_wave_order_limit(self):
        # a pure period-50 square wave spans exactly 25 dimensions
        t = np.arange(500)
        sq = np.where(((2 * t) // 50) % 2 == 0, 2.0, -2.0)
        assert persistency_order(sq, 25) is True
        assert persistency_order(sq, 26) is False


class TestExtractWindow:
    def test_scalar_example(self):
        w = extract_window(scalar_traj([1, 2, 3, 4]), t=2, Lp=2, Lf=1)
        assert_allclose(w.u_ini, [1, 2])
        assert_allclose(w.u_future, [3])

    def test_boundary(self):
        w = extract_window(scalar_traj([1, 2, 3, 4]), t=2, Lp=2, Lf=2)
        assert_allclose(w.u_ini, [1, 2])
        assert_allclose(w.u_future, [3, 4])

    def test_out_of_range(self):
        with pytest.raises(DimensionError):
            extract_window(scalar_traj([1, 2, 3]), t=1, Lp=2, Lf=1)
        with pytest.raises(DimensionError):
            extract_window(scalar_traj([1, 2, 3]), t=3, Lp=2, Lf=1)

    def test_column_consistency(self, open_traj):
        """Hankel column j must equal the window at t = j + Lp, bitwise."""
        h = build_hankel_set(open_traj, LP, LF)
        for j in (0, 5, h.n_cols - 1):
            w = extract_window(open_traj, j + LP, LP, LF)
            assert np.array_equal(h.Up[:, j], w.u_ini)
            assert np.array_equal(h.Yp[:, j], w.y_ini)
            assert np.array_equal(h.Uf[:, j], w.u_future)
            assert np.array_equal(h.Yf[:, j],
                                  open_traj.y[j + LP:j + LP + LF].ravel())


class TestTrajectorySpan:
    def test_noise_free_span(self, sys5_noisefree, noisefree_traj,
                             noisefree_hankels):
        """Fresh noise-free windows lie in the Hankel column span and the
        minimum-norm combination reproduces the true future output."""
        from innodpc import simulate_open_loop
        h = noisefree_hankels
        stacked = np.vstack([h.Up, h.Yp, h.Uf])
        sp = pinv(stacked)
        fresh = simulate_open_loop(sys5_noisefree,
                                   stream(55).normal(size=80), seed=stream(56))
        for t in (LP, 30, 60):
            w = extract_window(fresh, t, LP, LF)
            b = np.concatenate([w.u_ini, w.y_ini, w.u_future])
            g = sp @ b
            assert np.linalg.norm(stacked @ g - b) <= 1e-7
            y_true = fresh.y[t:t + LF].ravel()
            assert np.linalg.norm(h.Yf @ g - y_true) <= 1e-7


class TestBlockHankel:
    def test_depth_validation(self):
        with pytest.raises(DimensionError):
            block_hankel(np.ones((5, 1)), depth=0)
        with pytest.raises(DimensionError):
            block_hankel(np.ones((3, 1)), depth=2, start=0, n_cols=5)
