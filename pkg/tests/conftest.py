"""Shared fixtures: the benchmark system and standard training datasets."""
import numpy as np
import pytest

from innodpc import (SignalSpec, SystemModel, build_hankel_set,
                     generate_signal, paper_system, simulate_closed_loop,
                     simulate_open_loop, solve_dare, stream)

LP, LF = 10, 15


@pytest.fixture(scope="session")
def sys5():
    return paper_system()


@pytest.fixture(scope="session")
def sys5_noisefree():
    s = paper_system()
    return SystemModel(A=s.A, B=s.B, C=s.C, D=s.D,
                       sigma_w=np.zeros((2, 2)), sigma_v=np.zeros((1, 1)))


@pytest.fixture(scope="session")
def km5(sys5):
    return solve_dare(sys5)


def make_train_signal(length, seed):
    spec = SignalSpec(kind="square_wave", length=length, period=50,
                      amplitude=2.0, noise_variance=0.01)
    return generate_signal(spec, stream(seed))


@pytest.fixture(scope="session")
def open_traj(sys5):
    """Open-loop square-wave training data, N = 200."""
    rng = stream(101)
    sig = make_train_signal(200, 7101)
    return simulate_open_loop(sys5, sig, seed=rng)


@pytest.fixture(scope="session")
def closed_traj(sys5):
    """Closed-loop training data under the benchmark feedback, N = 200."""
    rng = stream(102)
    sig = make_train_signal(200, 7102)
    return simulate_closed_loop(sys5, 5.0, sig, seed=rng)


@pytest.fixture(scope="session")
def open_hankels(open_traj):
    return build_hankel_set(open_traj, LP, LF)


@pytest.fixture(scope="session")
def noisefree_traj(sys5_noisefree):
    """Noise-free trajectory with a white-noise (persistently exciting) input."""
    u = stream(103).normal(0.0, 1.0, 300)
    return simulate_open_loop(sys5_noisefree, u, seed=stream(104))


@pytest.fixture(scope="session")
def noisefree_hankels(noisefree_traj):
    return build_hankel_set(noisefree_traj, LP, LF)
