import numpy as np
import pytest
from numpy.testing import assert_allclose

from innodpc import (DimensionError, DomainError, SignalSpec, SystemModel,
                     Trajectory, generate_signal, innovation_form,
                     kalman_filter_pass, simulate_closed_loop,
                     simulate_innovation, simulate_open_loop, stream,
                     trajectory_from_csv, trajectory_to_csv)
from innodpc.simulate import _cov_factor


def scalar_system(a, b, c, d, sw=0.0, sv=0.0):
    return SystemModel(A=[[a]], B=[[b]], C=[[c]], D=[[d]],
                       sigma_w=[[sw]], sigma_v=[[sv]])


class TestOpenLoop:
    def test_zero_everything(self):
        sys = scalar_system(0.5, 1.0, 1.0, 0.0)
        traj = simulate_open_loop(sys, np.zeros(5), seed=1)
        assert_allclose(traj.y, np.zeros((5, 1)))

    def test_hand_recursion(self):
        sys = scalar_system(0.5, 1.0, 1.0, 0.0)
        traj = simulate_open_loop(sys, [1.0, 0.0, 0.0], seed=1)
        assert_allclose(traj.y.ravel(), [0.0, 1.0, 0.5], atol=1e-15)

    def test_determinism(self, sys5):
        u = np.ones(40)
        t1 = simulate_open_loop(sys5, u, seed=99)
        t2 = simulate_open_loop(sys5, u, seed=99)
        assert np.array_equal(t1.y, t2.y)
        assert np.array_equal(t1.x, t2.x)

    def test_dimension_check(self, sys5):
        with pytest.raises(DimensionError):
            simulate_open_loop(sys5, np.ones((5, 2)), seed=0)


class TestClosedLoop:
    def test_zero_reference(self):
        sys = scalar_system(0.5, 1.0, 1.0, 0.0)
        traj = simulate_closed_loop(sys, 5.0, np.zeros(10), seed=3)
        assert_allclose(traj.u, np.zeros((10, 1)))
        assert_allclose(traj.y, np.zeros((10, 1)))

    def test_recursion_oracle(self, sys5_noisefree):
        """Step reference, zero noise: match an offline recursion exactly."""
        r = np.ones(30)
        traj = simulate_closed_loop(sys5_noisefree, 5.0, r, seed=4)
        s = sys5_noisefree
        x = np.zeros(2)
        for t in range(30):
            y = s.C @ x
            u = 5.0 * (r[t] - y[0])
            assert abs(traj.u[t, 0] - u) <= 1e-12
            assert abs(traj.y[t, 0] - y[0]) <= 1e-12
            x = s.A @ x + (s.B * u).ravel()

    def test_input_innovation_correlation(self, sys5, km5):
        """Closed-loop inputs are correlated with lagged innovations.

        A zero reference keeps the loop purely noise-driven, so the
        correlation is not drowned by exogenous reference variance.
        """
        traj = simulate_closed_loop(sys5, 5.0, np.zeros(10_000), seed=6)
        aug = kalman_filter_pass(km5, traj, xhat0=traj.x[0])
        u = traj.u[1:, 0]
        e = aug.e[:-1, 0]
        corr = np.corrcoef(u, e)[0, 1]
        assert abs(corr) > 3.0 / np.sqrt(len(u))

    def test_open_loop_uncorrelated(self, sys5, km5):
        u = stream(7).normal(size=10_000)
        traj = simulate_open_loop(sys5, u, seed=8)
        aug = kalman_filter_pass(km5, traj, xhat0=traj.x[0])
        corr = np.corrcoef(traj.u[1:, 0], aug.e[:-1, 0])[0, 1]
        assert abs(corr) < 3.0 / np.sqrt(len(u) - 1)

    def test_needs_siso(self):
        sys = SystemModel(A=np.eye(2) * 0.5, B=np.eye(2), C=np.eye(2),
                          D=np.zeros((2, 2)), sigma_w=np.zeros((2, 2)),
                          sigma_v=np.zeros((2, 2)))
        with pytest.raises(DimensionError):
            simulate_closed_loop(sys, 5.0, np.zeros(5), seed=0)


class TestGenerateSignal:
    def test_square_wave_phase(self):
        sig = generate_signal(SignalSpec("square_wave", 6, period=4,
                                         amplitude=2.0), 0)
        assert_allclose(sig, [2, 2, -2, -2, 2, 2])

    def test_sinusoid_quarter(self):
        sig = generate_signal(SignalSpec("sinusoid", 26, period=100), 0)
        assert_allclose(sig[25], 1.0, atol=1e-12)

    def test_white_noise_variance(self):
        sig = generate_signal(SignalSpec("white_noise", 100_000,
                                         noise_variance=0.01), 11)
        assert abs(sig.var() - 0.01) < 0.05 * 0.01

    def test_invalid_kind(self):
        with pytest.raises(DomainError):
            SignalSpec("triangle", 10)


class TestInnovationForm:
    def test_matrix_passthrough(self, sys5, km5):
        model = innovation_form(sys5, km5.K)
        assert model.A is sys5.A and model.B is sys5.B
        assert_allclose(model.K, km5.K)

    def test_zero_innovations_match_noise_free(self, sys5_noisefree, sys5, km5):
        u = stream(12).normal(size=40)
        model = innovation_form(sys5, km5.K)
        inno = simulate_innovation(model, u, np.zeros(40))
        plain = simulate_open_loop(sys5_noisefree, u, seed=13)
        assert_allclose(inno.y, plain.y, atol=1e-12)

    def test_filter_dynamics_stable(self, sys5, km5):
        rho = max(abs(np.linalg.eigvals(sys5.A - km5.K @ sys5.C)))
        assert rho < 1.0


class TestGaussianSampler:
    def test_moments(self):
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        f = _cov_factor(cov)
        draws = stream(14).standard_normal((100_000, 2)) @ f.T
        assert_allclose(draws.mean(axis=0), [0, 0], atol=0.02)
        assert_allclose(np.cov(draws.T), cov, atol=0.05)

    def test_semidefinite_fallback(self):
        cov = np.array([[1.0, 1.0], [1.0, 1.0]])  # rank 1, Cholesky fails
        f = _cov_factor(cov)
        assert_allclose(f @ f.T, cov, atol=1e-12)


class TestTrajectoryCsv:
    def test_roundtrip(self, tmp_path, sys5):
        traj = simulate_open_loop(sys5, stream(15).normal(size=12), seed=16)
        path = tmp_path / "traj.csv"
        trajectory_to_csv(traj, path)
        back = trajectory_from_csv(path)
        assert np.array_equal(back.u, traj.u)
        assert np.array_equal(back.y, traj.y)
        assert np.array_equal(back.x, traj.x)

    def test_header(self, tmp_path):
        traj = Trajectory(u=np.ones(3), y=np.zeros(3))
        path = tmp_path / "t.csv"
        trajectory_to_csv(traj, path)
        assert path.read_text().splitlines()[0] == "t,u_0,y_0"


class TestTrajectorySlicing:
    def test_slice_channels(self, sys5, km5, open_traj):
        aug = kalman_filter_pass(km5, open_traj)
        part = aug.slice(10, 50)
        assert len(part) == 40
        assert np.array_equal(part.e, aug.e[10:50])
        assert np.array_equal(part.x, aug.x[10:50])

    def test_mismatched_channel_length(self):
        with pytest.raises(DimensionError):
            Trajectory(u=np.ones(3), y=np.zeros(4))
