"""Steady-state Kalman filter: Riccati fixed point, filtering, prediction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericalError
from .hankel import WindowData
from .simulate import SystemModel, Trajectory


@dataclass(frozen=True)
class KalmanModel:
    """Steady-state Kalman filter for a SystemModel."""

    sys: SystemModel
    K: np.ndarray
    P: np.ndarray
    A_cl: np.ndarray  # A - K C


@dataclass(frozen=True)
class PredictorSystem:
    """The filter rewritten as an LTI system with inputs (u, y), output yhat."""

    A_cl: np.ndarray
    B_aug: np.ndarray  # [B - K D, K]
    C: np.ndarray
    D_aug: np.ndarray  # [D, 0]

    def run(self, u, y, xhat0=None) -> np.ndarray:
        """Drive the predictor system with recorded (u, y); returns yhat."""
        u = np.asarray(u, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if u.ndim == 1:
            u = u[:, None]
        if y.ndim == 1:
            y = y[:, None]
        n = self.A_cl.shape[0]
        xh = np.zeros(n) if xhat0 is None else np.asarray(xhat0, float).ravel()
        out = np.empty((u.shape[0], self.C.shape[0]))
        for t in range(u.shape[0]):
            z = np.concatenate([u[t], y[t]])
            out[t] = self.C @ xh + self.D_aug @ z
            xh = self.A_cl @ xh + self.B_aug @ z
        return out


def _riccati_map(P, A, C, Sw, Sv):
    S = C @ P @ C.T + Sv
    G = np.linalg.solve(S, C @ P @ A.T)
    return A @ P @ A.T - A @ P @ C.T @ G + Sw


def solve_dare(sys: SystemModel, tol: float = 1e-12,
               max_iter: int = 100_000) -> KalmanModel:
    """Steady-state error covariance and gain by fixed-point iteration.

    Iterates ``P <- A P A' - A P C'(C P C' + sigma_v)^-1 C P A' + sigma_w``
    from ``P = sigma_w`` until the iterate change is below ``tol``; the gain
    is ``K = A P C'(C P C' + sigma_v)^-1`` with the innovation covariance
    inverted through its Cholesky factor.
    """
    A, C = sys.A, sys.C
    Sw, Sv = sys.sigma_w, sys.sigma_v
    P = Sw.copy()
    delta = np.inf
    for _ in range(max_iter):
        try:
            Pn = _riccati_map(P, A, C, Sw, Sv)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "innovation covariance is singular during the Riccati "
                "iteration") from exc
        Pn = 0.5 * (Pn + Pn.T)
        delta = np.linalg.norm(Pn - P)
        P = Pn
        if delta <= tol:
            break
    else:
        raise NumericalError(
            f"Riccati iteration did not converge in {max_iter} steps "
            f"(last change {delta:.3e})")
    S = C @ P @ C.T + Sv
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("innovation covariance is singular") from exc
    Sinv = scipy.linalg.cho_solve((L, True), np.eye(S.shape[0]))
    K = A @ P @ C.T @ Sinv
    A_cl = A - K @ C
    resid = np.linalg.norm(P - _riccati_map(P, A, C, Sw, Sv))
    if resid > 1e-9 * (1.0 + np.linalg.norm(P)):
        raise NumericalError(f"Riccati residual too large: {resid:.3e}")
    rho = max(abs(np.linalg.eigvals(A_cl)))
    if rho >= 1.0:
        raise NumericalError(f"filter dynamics unstable: rho(A - KC) = {rho:.6f}")
    return KalmanModel(sys=sys, K=K, P=P, A_cl=A_cl)


def predictor_system(km: KalmanModel) -> PredictorSystem:
    """Assemble the (u, y) -> yhat predictor system of the filter."""
    sys = km.sys
    return PredictorSystem(
        A_cl=km.A_cl,
        B_aug=np.hstack([sys.B - km.K @ sys.D, km.K]),
        C=sys.C,
        D_aug=np.hstack([sys.D, np.zeros((sys.n_y, sys.n_y))]),
    )


def kalman_filter_pass(km: KalmanModel, traj: Trajectory,
                       xhat0=None) -> Trajectory:
    """One-step predictions and innovations over a recorded trajectory.

    ``yhat_t = C xhat_t + D u_t``, ``e_t = y_t - yhat_t``,
    ``xhat_{t+1} = A xhat_t + B u_t + K e_t``.
    """
    sys = km.sys
    if traj.n_u != sys.n_u or traj.n_y != sys.n_y:
        raise DimensionError("trajectory channel counts do not match the system")
    xh = np.zeros(sys.n) if xhat0 is None else np.asarray(xhat0, float).ravel()
    T = len(traj)
    yhat = np.empty((T, sys.n_y))
    e = np.empty((T, sys.n_y))
    for t in range(T):
        yhat[t] = sys.C @ xh + sys.D @ traj.u[t]
        e[t] = traj.y[t] - yhat[t]
        xh = sys.A @ xh + sys.B @ traj.u[t] + km.K @ e[t]
    return traj.with_channels(e=e, yhat=yhat)


def reconstruct_state(sys: SystemModel, u_ini: np.ndarray,
                      y_ini: np.ndarray) -> np.ndarray:
    """Least-squares state estimate at the start of a window.

    Fits the noise-free model response over the window: minimizes
    ``sum_k |y_k - C A^k x0 - (forced response)_k|^2`` over x0.
    """
    Lp = y_ini.size // sys.n_y
    obs, toep = _observability_maps(sys, Lp)
    rhs = y_ini - toep @ u_ini
    x0, *_ = np.linalg.lstsq(obs, rhs, rcond=None)
    return x0


def _observability_maps(sys: SystemModel, L: int):
    """(obs, toep) with y_stack = obs @ x0 + toep @ u_stack, noise-free."""
    n, nu, ny = sys.n, sys.n_u, sys.n_y
    obs = np.zeros((ny * L, n))
    toep = np.zeros((ny * L, nu * L))
    Ak = np.eye(n)
    for k in range(L):
        obs[k * ny:(k + 1) * ny] = sys.C @ Ak
        toep[k * ny:(k + 1) * ny, k * nu:(k + 1) * nu] = sys.D
        Ak = sys.A @ Ak
    for k in range(1, L):
        for j in range(k):
            toep[k * ny:(k + 1) * ny, j * nu:(j + 1) * nu] = (
                sys.C @ np.linalg.matrix_power(sys.A, k - 1 - j) @ sys.B)
    return obs, toep


def kalman_window_pass(km: KalmanModel, window: WindowData,
                       xhat_start="zero"):
    """Filter over the initial window, then predict over the future horizon.

    ``xhat_start`` selects the filter state at the window start: the zero
    vector (``"zero"``), a least-squares reconstruction from the window
    (``"reconstruct"``), or an explicit state vector.

    Returns ``(yhat_ini, e_ini, yhat_future)`` as stacked vectors; the
    future prediction propagates with zero innovations.
    """
    sys = km.sys
    nu, ny = sys.n_u, sys.n_y
    Lp = window.u_ini.size // nu
    Lf = window.u_future.size // nu
    if window.y_ini.size != ny * Lp:
        raise DimensionError(
            f"y_ini has {window.y_ini.size} entries, expected {ny * Lp}")
    if isinstance(xhat_start, str):
        if xhat_start == "zero":
            xh = np.zeros(sys.n)
        elif xhat_start == "reconstruct":
            xh = reconstruct_state(sys, window.u_ini, window.y_ini)
        else:
            raise DimensionError(f"unknown xhat_start {xhat_start!r}")
    else:
        xh = np.asarray(xhat_start, dtype=np.float64).ravel()
        if xh.shape != (sys.n,):
            raise DimensionError(f"xhat_start must have length {sys.n}")
    u_ini = window.u_ini.reshape(Lp, nu)
    y_ini = window.y_ini.reshape(Lp, ny)
    u_fut = window.u_future.reshape(Lf, nu)
    yhat_ini = np.empty((Lp, ny))
    e_ini = np.empty((Lp, ny))
    for k in range(Lp):
        yhat_ini[k] = sys.C @ xh + sys.D @ u_ini[k]
        e_ini[k] = y_ini[k] - yhat_ini[k]
        xh = sys.A @ xh + sys.B @ u_ini[k] + km.K @ e_ini[k]
    yhat_fut = np.empty((Lf, ny))
    for k in range(Lf):
        yhat_fut[k] = sys.C @ xh + sys.D @ u_fut[k]
        xh = sys.A @ xh + sys.B @ u_fut[k]
    return yhat_ini.ravel(), e_ini.ravel(), yhat_fut.ravel()


def kalman_multistep_predict(km: KalmanModel, window: WindowData,
                             xhat_start="zero") -> np.ndarray:
    """Stacked Lf-step prediction of the steady-state filter for a window."""
    return kalman_window_pass(km, window, xhat_start)[2]
