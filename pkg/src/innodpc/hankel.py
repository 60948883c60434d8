"""Past/future block Hankel matrices and window extraction.

Indexing convention: a trajectory of total length T yields
``n_cols = T - Lp - Lf + 1`` columns.  Column j of a past matrix stacks
samples j .. j+Lp-1 (oldest first, channels interleaved within each time
step); column j of a future matrix stacks samples Lp+j .. Lp+Lf-1+j.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .linalg import default_rank_tol


def block_hankel(signal: np.ndarray, depth: int, start: int = 0,
                 n_cols: int | None = None) -> np.ndarray:
    """Block Hankel matrix of a time-major signal.

    Parameters
    ----------
    signal : (T, d) array, one row per time step.
    depth : number of block rows.
    start : time index of the first sample in column 0.
    n_cols : number of columns; defaults to the maximum T - start - depth + 1.
    """
    sig = np.asarray(signal, dtype=np.float64)
    if sig.ndim == 1:
        sig = sig[:, None]
    T, d = sig.shape
    if depth < 1:
        raise DimensionError(f"depth must be >= 1, got {depth}")
    if n_cols is None:
        n_cols = T - start - depth + 1
    if n_cols < 1 or start + depth + n_cols - 1 > T:
        raise DimensionError(
            f"signal of length {T} too short for depth {depth}, start {start}, "
            f"{n_cols} columns (needs {start + depth + n_cols - 1})")
    H = np.empty((d * depth, n_cols))
    for i in range(depth):
        H[i * d:(i + 1) * d, :] = sig[start + i:start + i + n_cols, :].T
    return H


@dataclass(frozen=True)
class HankelSet:
    """Stacked past/future block Hankel matrices of one trajectory.

    ``Ep/Ef`` and ``Yhat_p/Yhat_f`` are present only when the source
    trajectory carries innovation / one-step-prediction channels.
    """

    Lp: int
    Lf: int
    n_u: int
    n_y: int
    n_cols: int
    Up: np.ndarray
    Yp: np.ndarray
    Uf: np.ndarray
    Yf: np.ndarray
    Ep: np.ndarray | None = None
    Ef: np.ndarray | None = None
    Yhat_p: np.ndarray | None = None
    Yhat_f: np.ndarray | None = None

    @property
    def regressor(self) -> np.ndarray:
        """The stacked regressor col(Up, Yp, Uf)."""
        return np.vstack([self.Up, self.Yp, self.Uf])

    @property
    def past_rows(self) -> int:
        return (self.n_u + self.n_y) * self.Lp


@dataclass(frozen=True)
class WindowData:
    """Stacked initial window and future input, oldest sample first."""

    u_ini: np.ndarray
    y_ini: np.ndarray
    u_future: np.ndarray
    e_ini: np.ndarray | None = None
    yhat_ini: np.ndarray | None = None


def build_hankel_set(traj, Lp: int, Lf: int) -> HankelSet:
    """Build the past/future Hankel matrices of a trajectory.

    Optional innovation (``e``) and one-step-prediction (``yhat``) channels
    are propagated into Ep/Ef and Yhat_p/Yhat_f when present.
    """
    if Lp < 1 or Lf < 1:
        raise DimensionError(f"Lp and Lf must be >= 1, got Lp={Lp}, Lf={Lf}")
    T = len(traj)
    if T < Lp + Lf:
        raise DimensionError(
            f"trajectory length {T} < required Lp + Lf = {Lp + Lf}")
    n_cols = T - Lp - Lf + 1
    kw = {}
    if traj.e is not None:
        kw["Ep"] = block_hankel(traj.e, Lp, 0, n_cols)
        kw["Ef"] = block_hankel(traj.e, Lf, Lp, n_cols)
    if traj.yhat is not None:
        kw["Yhat_p"] = block_hankel(traj.yhat, Lp, 0, n_cols)
        kw["Yhat_f"] = block_hankel(traj.yhat, Lf, Lp, n_cols)
    return HankelSet(
        Lp=Lp, Lf=Lf, n_u=traj.n_u, n_y=traj.n_y, n_cols=n_cols,
        Up=block_hankel(traj.u, Lp, 0, n_cols),
        Yp=block_hankel(traj.y, Lp, 0, n_cols),
        Uf=block_hankel(traj.u, Lf, Lp, n_cols),
        Yf=block_hankel(traj.y, Lf, Lp, n_cols),
        **kw)


def persistency_order(signal, L: int) -> bool:
    """True iff the order-L block Hankel matrix of ``signal`` has full
    numerical row rank."""
    sig = np.asarray(signal, dtype=np.float64)
    if sig.ndim == 1:
        sig = sig[:, None]
    T, d = sig.shape
    if T < L:
        raise DimensionError(f"signal length {T} < order {L}")
    H = block_hankel(sig, L)
    s = np.linalg.svd(H, compute_uv=False)
    tol = default_rank_tol(H.shape, s[0]) if s.size else 0.0
    return int(np.sum(s > tol)) == d * L


def extract_window(traj, t: int, Lp: int, Lf: int) -> WindowData:
    """Stacked window around time t: past samples t-Lp .. t-1, future
    inputs t .. t+Lf-1.  Optional channels are copied when present."""
    T = len(traj)
    if t < Lp or t + Lf > T:
        raise DimensionError(
            f"window at t={t} out of range for Lp={Lp}, Lf={Lf}, length {T}")
    kw = {}
    if traj.e is not None:
        kw["e_ini"] = np.asarray(traj.e[t - Lp:t]).ravel()
    if traj.yhat is not None:
        kw["yhat_ini"] = np.asarray(traj.yhat[t - Lp:t]).ravel()
    return WindowData(
        u_ini=np.asarray(traj.u[t - Lp:t]).ravel(),
        y_ini=np.asarray(traj.y[t - Lp:t]).ravel(),
        u_future=np.asarray(traj.u[t:t + Lf]).ravel(),
        **kw)
