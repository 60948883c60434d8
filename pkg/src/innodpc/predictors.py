"""Data-driven multi-step predictors and innovation null-space estimators.

Every predictor exposes the same surface: ``predict(window)`` maps an
initial window plus future input to the predicted future output,
``affine_map(window)`` returns ``(offset, gain)`` with
``yhat = offset + gain @ u_future``, and ``solve_control`` minimizes the
finite-horizon tracking cost through the predictor's structure.

Underdetermined solves take the minimum-norm (pseudoinverse) solution
throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, NumericalError, RankError
from .hankel import HankelSet, WindowData, build_hankel_set
from .kalman import KalmanModel, kalman_filter_pass, _observability_maps
from .linalg import (SubspaceBasis, numerical_rank, nullspace_basis,
                     orth_projector, pinv, row_space_basis)
from .simulate import SystemModel, Trajectory


@dataclass(frozen=True)
class NullspaceEstimate:
    """An estimated innovation null space with its method tag."""

    method: str  # LS | IV | ARX | TRUE
    basis: SubspaceBasis


@dataclass
class StepSolution:
    """Optimizer of one finite-horizon control solve."""

    u: np.ndarray
    yhat: np.ndarray
    g: np.ndarray | None = None
    gamma: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def _expand_cost(cost, Lf: int):
    Q = np.atleast_2d(np.asarray(cost.Q, dtype=np.float64))
    R = np.atleast_2d(np.asarray(cost.R, dtype=np.float64))
    return np.kron(np.eye(Lf), Q), np.kron(np.eye(Lf), R)


# ---------------------------------------------------------------------------
# ARX identification
# ---------------------------------------------------------------------------

@dataclass
class ArxModel:
    """One-step-ahead ARX model fitted by ordinary least squares.

    Prediction: ``yhat_t = sum_{i=1..rho} coeff_y[i-1] y_{t-i}
    + sum_{i=0..rho} coeff_u[i] u_{t-i}`` (the lag-0 input term is zero when
    fitted with ``include_lag0=False``).
    """

    rho: int
    include_lag0: bool
    coeff_y: list[np.ndarray]
    coeff_u: list[np.ndarray]
    residuals: np.ndarray  # over the training data, residuals[k] = e_{rho+k}
    n_u: int
    n_y: int

    def predict_one_step(self, u, y, t: int) -> np.ndarray:
        out = np.zeros(self.n_y)
        for i in range(1, self.rho + 1):
            out += self.coeff_y[i - 1] @ y[t - i]
        for i in range(0, self.rho + 1):
            out += self.coeff_u[i] @ u[t - i]
        return out

    def residuals_over(self, u, y) -> np.ndarray:
        """Residual sequence e_t = y_t - yhat_t for t = rho .. len-1."""
        u = np.asarray(u, dtype=np.float64).reshape(len(u), -1)
        y = np.asarray(y, dtype=np.float64).reshape(len(y), -1)
        T = y.shape[0]
        out = np.empty((T - self.rho, self.n_y))
        for t in range(self.rho, T):
            out[t - self.rho] = y[t] - self.predict_one_step(u, y, t)
        return out

    def residual_window(self, u_hist, y_hist, count: int) -> np.ndarray:
        """Residuals at the last ``count`` steps of a history."""
        u_hist = np.asarray(u_hist, dtype=np.float64).reshape(len(u_hist), -1)
        y_hist = np.asarray(y_hist, dtype=np.float64).reshape(len(y_hist), -1)
        T = y_hist.shape[0]
        if T < count + self.rho:
            raise DimensionError(
                f"history of length {T} too short for {count} residuals with "
                f"rho={self.rho} (needs {count + self.rho})")
        out = np.empty((count, self.n_y))
        for k, t in enumerate(range(T - count, T)):
            out[k] = y_hist[t] - self.predict_one_step(u_hist, y_hist, t)
        return out


def fit_arx(traj: Trajectory, rho: int, include_lag0: bool = True) -> ArxModel:
    """Fit a one-step-ahead ARX model of order ``rho`` by least squares."""
    n_u, n_y = traj.n_u, traj.n_y
    lag0 = 0 if include_lag0 else 1
    n_par = n_y * rho + n_u * (rho + 1 - lag0)
    T = len(traj)
    if T <= (n_y + n_u) * (rho + 1) + rho:
        raise DimensionError(
            f"trajectory length {T} too short for ARX order {rho} "
            f"(needs > {(n_y + n_u) * (rho + 1) + rho})")
    rows = np.empty((T - rho, n_par))
    targ = np.empty((T - rho, n_y))
    for t in range(rho, T):
        parts = [traj.y[t - i] for i in range(1, rho + 1)]
        parts += [traj.u[t - i] for i in range(lag0, rho + 1)]
        rows[t - rho] = np.concatenate(parts)
        targ[t - rho] = traj.y[t]
    # on noise-free data the output lags are linearly dependent on the input
    # lags plus a state, so only the input block must be exciting; the
    # minimum-norm solution handles the remaining degeneracy
    u_block = rows[:, n_y * rho:]
    r_u = numerical_rank(u_block)
    if r_u < u_block.shape[1]:
        raise RankError(
            f"ARX input-lag block is rank deficient ({r_u} < "
            f"{u_block.shape[1]}); the training input is not exciting enough "
            f"for order {rho}")
    coef, *_ = np.linalg.lstsq(rows, targ, rcond=None)
    resid = targ - rows @ coef
    coeff_y = [coef[i * n_y:(i + 1) * n_y].T for i in range(rho)]
    coeff_u = []
    base = rho * n_y
    if include_lag0:
        for i in range(rho + 1):
            coeff_u.append(coef[base + i * n_u: base + (i + 1) * n_u].T)
    else:
        coeff_u.append(np.zeros((n_y, n_u)))
        for i in range(rho):
            coeff_u.append(coef[base + i * n_u: base + (i + 1) * n_u].T)
    return ArxModel(rho=rho, include_lag0=include_lag0, coeff_y=coeff_y,
                    coeff_u=coeff_u, residuals=resid, n_u=n_u, n_y=n_y)


def arx_augment(traj: Trajectory, arx: ArxModel) -> Trajectory:
    """Trajectory restricted to t >= rho with ARX residual and one-step
    prediction channels attached."""
    resid = arx.residuals_over(traj.u, traj.y)
    out = traj.slice(arx.rho)
    return out.with_channels(e=resid, yhat=out.y - resid)


def arx_hankel_set(traj: Trajectory, arx: ArxModel, Lp: int, Lf: int) -> HankelSet:
    """Hankel set of the residual-augmented trajectory (stream starts at rho)."""
    return build_hankel_set(arx_augment(traj, arx), Lp, Lf)


def arx_nullspace(arx: ArxModel, traj: Trajectory, Lp: int, Lf: int):
    """Residual Hankels aligned with the u/y Hankels plus the null-space
    estimate of the future residual Hankel.

    Returns ``(Ep, Ef, estimate)``.
    """
    h = arx_hankel_set(traj, arx, Lp, Lf)
    return h.Ep, h.Ef, NullspaceEstimate("ARX", nullspace_basis(h.Ef))


# ---------------------------------------------------------------------------
# Null-space estimators from raw Hankels
# ---------------------------------------------------------------------------

def _check_regressor_rank(h: HankelSet):
    """Persistency check on the input side of the regressor.

    On noise-free data the output rows of col(Up, Yp, Uf) are linearly
    dependent on the inputs and the initial state, so full row rank of the
    whole regressor is the wrong requirement; the operative condition is
    full row rank of the stacked input Hankel.
    """
    u_stack = np.vstack([h.Up, h.Uf])
    r = numerical_rank(u_stack)
    if r < u_stack.shape[0]:
        raise RankError(
            f"input Hankel col(Up, Uf) is rank deficient: rank {r} < "
            f"{u_stack.shape[0]} rows; the input is not persistently "
            f"exciting of order {h.Lp + h.Lf}")
    return h.regressor


def ls_residual_hankel(h: HankelSet):
    """Least-squares residual approximation of the innovation Hankel.

    ``E_hat = Yf (I - Pi)`` with ``Pi`` the projector onto the row space of
    the regressor; returns ``(E_hat, estimate)`` where the estimate spans
    ``null(E_hat)``.
    """
    phi = _check_regressor_rank(h)
    _, pi_perp = orth_projector(phi)
    e_hat = h.Yf @ pi_perp
    return e_hat, NullspaceEstimate("LS", nullspace_basis(e_hat))


def true_innovation_hankel(sys: SystemModel, km: KalmanModel, traj: Trajectory,
                           Lp: int, Lf: int):
    """Ground-truth innovation Hankel from a filter pass with the true gain.

    The filter starts at the recorded true initial state when the trajectory
    carries states, so the innovations are steady-state from the first step.
    Returns ``(augmented trajectory, HankelSet)``.
    """
    xhat0 = traj.x[0] if traj.x is not None else None
    aug = kalman_filter_pass(km, traj, xhat0=xhat0)
    return aug, build_hankel_set(aug, Lp, Lf)


def true_innovation_nullspace(sys: SystemModel, km: KalmanModel,
                              traj: Trajectory, Lp: int, Lf: int) -> NullspaceEstimate:
    """Reference null space of the true innovation Hankel."""
    _, h = true_innovation_hankel(sys, km, traj, Lp, Lf)
    return NullspaceEstimate("TRUE", nullspace_basis(h.Ef))


# ---------------------------------------------------------------------------
# Predictor classes
# ---------------------------------------------------------------------------

class Predictor:
    """Common surface shared by all fitted predictors."""

    kind: str = "?"

    def __init__(self, Lp: int, Lf: int, n_u: int, n_y: int):
        self.Lp, self.Lf, self.n_u, self.n_y = Lp, Lf, n_u, n_y

    # past-vector assembly -------------------------------------------------
    def _past(self, window: WindowData) -> np.ndarray:
        self._check_window(window)
        return np.concatenate([window.u_ini, window.y_ini])

    def _check_window(self, window: WindowData):
        if window.u_ini.size != self.n_u * self.Lp:
            raise DimensionError(
                f"u_ini has {window.u_ini.size} entries, expected {self.n_u * self.Lp}")
        if window.y_ini.size != self.n_y * self.Lp:
            raise DimensionError(
                f"y_ini has {window.y_ini.size} entries, expected {self.n_y * self.Lp}")

    def required_history(self) -> int:
        return self.Lp

    def make_window(self, u_hist, y_hist) -> WindowData:
        """Window from realized history arrays (most recent samples last)."""
        u_hist = np.asarray(u_hist, dtype=np.float64).reshape(len(u_hist), -1)
        y_hist = np.asarray(y_hist, dtype=np.float64).reshape(len(y_hist), -1)
        if len(u_hist) < self.required_history():
            raise DimensionError(
                f"history of length {len(u_hist)} < required "
                f"{self.required_history()} samples")
        return WindowData(u_ini=u_hist[-self.Lp:].ravel(),
                          y_ini=y_hist[-self.Lp:].ravel(),
                          u_future=np.empty(0))

    # prediction -----------------------------------------------------------
    def affine_map(self, window: WindowData):
        raise NotImplementedError

    def predict(self, window: WindowData) -> np.ndarray:
        offset, gain = self.affine_map(window)
        if window.u_future is None or window.u_future.size != self.n_u * self.Lf:
            raise DimensionError(
                f"u_future must have {self.n_u * self.Lf} entries")
        return offset + gain @ window.u_future

    # control --------------------------------------------------------------
    def solve_control(self, window: WindowData, cost, r_future) -> StepSolution:
        """Minimize the tracking cost over the future input."""
        Qbar, Rbar = _expand_cost(cost, self.Lf)
        r = np.asarray(r_future, dtype=np.float64).ravel()
        if r.size != self.n_y * self.Lf:
            raise DimensionError(
                f"reference has {r.size} entries, expected {self.n_y * self.Lf}")
        offset, gain = self.affine_map(window)
        H = gain.T @ Qbar @ gain + Rbar
        rhs = gain.T @ Qbar @ (r - offset)
        try:
            u = np.linalg.solve(H, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"singular Hessian in {self.kind} control solve "
                f"(cond ~ {np.linalg.cond(H):.2e})") from exc
        return StepSolution(u=u, yhat=offset + gain @ u)


class _AffinePredictor(Predictor):
    """Predictor fully described by fitted (past_map, input_map) matrices."""

    def __init__(self, Lp, Lf, n_u, n_y, past_map, input_map):
        super().__init__(Lp, Lf, n_u, n_y)
        self.past_map = np.asarray(past_map, dtype=np.float64)
        self.input_map = np.asarray(input_map, dtype=np.float64)

    def affine_map(self, window: WindowData):
        return self.past_map @ self._past(window), self.input_map


class SpcPredictor(_AffinePredictor):
    """Subspace predictive control: one least-squares map from the regressor
    to the future outputs."""

    kind = "SPC"

    def __init__(self, h: HankelSet, theta: np.ndarray):
        past = h.past_rows
        super().__init__(h.Lp, h.Lf, h.n_u, h.n_y,
                         theta[:, :past], theta[:, past:])
        self.theta = theta


def fit_spc(h: HankelSet) -> SpcPredictor:
    """Fit the SPC predictor ``theta = Yf pinv(col(Up, Yp, Uf))``."""
    phi = _check_regressor_rank(h)
    return SpcPredictor(h, h.Yf @ pinv(phi))


class DeepcPinvPredictor(Predictor):
    """Minimum-norm trajectory-combination predictor: pick g by pseudoinverse
    of the stacked Hankel constraints, then read off ``Yf g``."""

    kind = "DeePC-pinv"

    def __init__(self, h: HankelSet):
        super().__init__(h.Lp, h.Lf, h.n_u, h.n_y)
        phi = _check_regressor_rank(h)
        self.Yf = h.Yf
        self.phi_pinv = pinv(phi)

    def affine_map(self, window: WindowData):
        past = self._past(window)
        m = self.Yf @ self.phi_pinv
        return m[:, :past.size] @ past, m[:, past.size:]

    def predict(self, window: WindowData) -> np.ndarray:
        self._check_window(window)
        b = np.concatenate([window.u_ini, window.y_ini, window.u_future])
        g = self.phi_pinv @ b
        return self.Yf @ g


def fit_deepc_pinv(h: HankelSet) -> DeepcPinvPredictor:
    return DeepcPinvPredictor(h)


def deepc_pinv_predict(h: HankelSet, window: WindowData) -> np.ndarray:
    """One-shot minimum-norm prediction for a window."""
    return DeepcPinvPredictor(h).predict(window)


class IvPredictor(Predictor):
    """Instrumental-variable predictor: restrict g to range(Z')."""

    kind = "IV-DeePC"

    def __init__(self, h: HankelSet, Z: np.ndarray):
        super().__init__(h.Lp, h.Lf, h.n_u, h.n_y)
        Z = np.asarray(Z, dtype=np.float64)
        phi = h.regressor
        if Z.shape[1] != h.n_cols:
            raise DimensionError(
                f"instrument has {Z.shape[1]} columns, Hankels have {h.n_cols}")
        t_iv = phi @ Z.T
        if numerical_rank(t_iv) < numerical_rank(phi):
            raise RankError(
                f"instrument rank condition fails: rank(Phi Z') = "
                f"{numerical_rank(t_iv)} < rank(Phi) = {numerical_rank(phi)}")
        self.YfZt = h.Yf @ Z.T
        self.t_iv_pinv = pinv(t_iv)
        self.nullspace = NullspaceEstimate("IV", row_space_basis(Z))

    def affine_map(self, window: WindowData):
        past = self._past(window)
        m = self.YfZt @ self.t_iv_pinv
        return m[:, :past.size] @ past, m[:, past.size:]

    def predict(self, window: WindowData) -> np.ndarray:
        self._check_window(window)
        b = np.concatenate([window.u_ini, window.y_ini, window.u_future])
        hcoef = self.t_iv_pinv @ b
        return self.YfZt @ hcoef


def fit_iv(h: HankelSet, Z) -> IvPredictor:
    return IvPredictor(h, Z)


def iv_deepc_predict(h: HankelSet, Z, window: WindowData):
    """IV prediction plus the subspace the scheme constrains g to."""
    pred = IvPredictor(h, Z)
    return pred.predict(window), pred.nullspace


def _require_blocks(h: HankelSet, names: tuple[str, ...], kind: str):
    for name in names:
        if getattr(h, name) is None:
            raise DimensionError(
                f"{kind} needs the {name} Hankel block; build the Hankel set "
                f"from a trajectory with the corresponding channel")


class InnoPrePredictor(Predictor):
    """Predictor that pins g to the estimated innovation null space.

    With ``reduce=True`` the feasible g are parametrized as ``g = Ef_perp h``
    and the reduced stacked system is solved by pseudoinverse; otherwise the
    full stacked system with ``Ef g = 0`` appended is solved directly.  Both
    routes agree on persistently exciting data.
    """

    kind = "InnoPre"

    def __init__(self, h: HankelSet, arx: ArxModel | None = None,
                 reduce: bool = True):
        super().__init__(h.Lp, h.Lf, h.n_u, h.n_y)
        _require_blocks(h, ("Ep", "Ef"), self.kind)
        self.arx = arx
        self.reduce = reduce
        if reduce:
            perp = nullspace_basis(h.Ef)
            if perp.dim == 0:
                raise RankError(
                    "estimated innovation null space is empty; reduce the ARX "
                    "order or use more training data")
            stacked = np.vstack([h.Up @ perp.basis, h.Yp @ perp.basis,
                                 h.Ep @ perp.basis, h.Uf @ perp.basis])
            m = (h.Yf @ perp.basis) @ pinv(stacked)
        else:
            stacked = np.vstack([h.Up, h.Yp, h.Ep, h.Uf, h.Ef])
            m = h.Yf @ pinv(stacked)
            m = m[:, :stacked.shape[0] - h.Ef.shape[0]]  # zero-RHS block drops
        past_w = (h.n_u + 2 * h.n_y) * h.Lp
        self.past_map = m[:, :past_w]
        self.input_map = m[:, past_w:]

    def _past(self, window: WindowData) -> np.ndarray:
        self._check_window(window)
        if window.e_ini is None:
            raise DimensionError(
                "window lacks e_ini; compute residuals over the past window "
                "with the same ARX model used for the Hankels")
        if window.e_ini.size != self.n_y * self.Lp:
            raise DimensionError(
                f"e_ini has {window.e_ini.size} entries, expected "
                f"{self.n_y * self.Lp}")
        return np.concatenate([window.u_ini, window.y_ini, window.e_ini])

    def affine_map(self, window: WindowData):
        return self.past_map @ self._past(window), self.input_map

    def required_history(self) -> int:
        return self.Lp + (self.arx.rho if self.arx is not None else 0)

    def make_window(self, u_hist, y_hist) -> WindowData:
        if self.arx is None:
            raise DimensionError(
                f"{self.kind} needs its ARX model to build windows online")
        base = super().make_window(u_hist, y_hist)
        e_ini = self.arx.residual_window(u_hist, y_hist, self.Lp).ravel()
        return WindowData(u_ini=base.u_ini, y_ini=base.y_ini,
                          u_future=base.u_future, e_ini=e_ini)


def fit_inno_pre(h: HankelSet, arx: ArxModel | None = None,
                 reduce: bool = True) -> InnoPrePredictor:
    return InnoPrePredictor(h, arx, reduce)


def inno_pre_predict(h: HankelSet, window: WindowData,
                     reduce: bool = True) -> np.ndarray:
    return InnoPrePredictor(h, reduce=reduce).predict(window)


class KfPrePredictor(Predictor):
    """Predictor built from the one-step-prediction Hankels: solves the
    stacked system with ``(Yf - Yhat_f) g = 0`` appended and reads ``Yf g``."""

    kind = "KFPre"

    def __init__(self, h: HankelSet, arx: ArxModel | None = None):
        super().__init__(h.Lp, h.Lf, h.n_u, h.n_y)
        _require_blocks(h, ("Yhat_p", "Yhat_f"), self.kind)
        self.arx = arx
        stacked = np.vstack([h.Up, h.Yp, h.Yhat_p, h.Uf, h.Yf - h.Yhat_f])
        m = h.Yf @ pinv(stacked)
        m = m[:, :stacked.shape[0] - h.Yf.shape[0]]
        past_w = (h.n_u + 2 * h.n_y) * h.Lp
        self.past_map = m[:, :past_w]
        self.input_map = m[:, past_w:]

    def _past(self, window: WindowData) -> np.ndarray:
        self._check_window(window)
        if window.yhat_ini is None:
            raise DimensionError(
                "window lacks yhat_ini; compute one-step predictions over the "
                "past window with the same ARX model used for the Hankels")
        if window.yhat_ini.size != self.n_y * self.Lp:
            raise DimensionError(
                f"yhat_ini has {window.yhat_ini.size} entries, expected "
                f"{self.n_y * self.Lp}")
        return np.concatenate([window.u_ini, window.y_ini, window.yhat_ini])

    def affine_map(self, window: WindowData):
        return self.past_map @ self._past(window), self.input_map

    def required_history(self) -> int:
        return self.Lp + (self.arx.rho if self.arx is not None else 0)

    def make_window(self, u_hist, y_hist) -> WindowData:
        if self.arx is None:
            raise DimensionError(
                f"{self.kind} needs its ARX model to build windows online")
        base = super().make_window(u_hist, y_hist)
        e_ini = self.arx.residual_window(u_hist, y_hist, self.Lp).ravel()
        return WindowData(u_ini=base.u_ini, y_ini=base.y_ini,
                          u_future=base.u_future,
                          yhat_ini=base.y_ini - e_ini)


def fit_kf_pre(h: HankelSet, arx: ArxModel | None = None) -> KfPrePredictor:
    return KfPrePredictor(h, arx)


def kf_pre_predict(h: HankelSet, window: WindowData) -> np.ndarray:
    return KfPrePredictor(h).predict(window)


class KalmanPredictor(_AffinePredictor):
    """Steady-state Kalman multi-step prediction as an affine window map.

    ``init`` selects the filter state at the window start: ``"zero"`` or a
    least-squares ``"reconstruct"`` from the window itself.
    """

    kind = "SSKF"

    def __init__(self, km: KalmanModel, Lp: int, Lf: int,
                 init: str = "reconstruct"):
        sys = km.sys
        n, nu, ny = sys.n, sys.n_u, sys.n_y
        # filter recursion over the window as linear maps of (u_ini, y_ini)
        Fu = np.zeros((n, nu * Lp))
        Fy = np.zeros((n, ny * Lp))
        acl_pow = np.eye(n)
        for k in range(Lp - 1, -1, -1):
            Fu[:, k * nu:(k + 1) * nu] = acl_pow @ (sys.B - km.K @ sys.D)
            Fy[:, k * ny:(k + 1) * ny] = acl_pow @ km.K
            acl_pow = km.A_cl @ acl_pow
        if init == "zero":
            Ru = np.zeros((n, nu * Lp))
            Ry = np.zeros((n, ny * Lp))
        elif init == "reconstruct":
            obs, toep = _observability_maps(sys, Lp)
            obs_pinv = pinv(obs)
            Ry = obs_pinv
            Ru = -obs_pinv @ toep
        else:
            raise DomainError(f"unknown init mode {init!r}")
        # acl_pow is now A_cl^Lp
        map_u = acl_pow @ Ru + Fu
        map_y = acl_pow @ Ry + Fy
        gam, toep_f = _observability_maps(sys, Lf)
        super().__init__(Lp, Lf, nu, ny,
                         np.hstack([gam @ map_u, gam @ map_y]), toep_f)
        self.km = km
        self.init = init


def fit_kalman_predictor(km: KalmanModel, Lp: int, Lf: int,
                         init: str = "reconstruct") -> KalmanPredictor:
    return KalmanPredictor(km, Lp, Lf, init)


# ---------------------------------------------------------------------------
# Regularized control-time schemes
# ---------------------------------------------------------------------------

class ProjRegPredictor(Predictor):
    """DeePC with the orthogonal-projection regularizer
    ``lam * ||(I - Pi) g||^2`` added to the tracking cost."""

    kind = "DeePC-projreg"

    def __init__(self, h: HankelSet, lam: float = 1.0):
        super().__init__(h.Lp, h.Lf, h.n_u, h.n_y)
        if lam < 0:
            raise DomainError("lam must be >= 0")
        self.lam = float(lam)
        self.h = h
        self.phi = _check_regressor_rank(h)
        _, self.pi_perp = orth_projector(self.phi)
        self.theta = h.Yf @ pinv(self.phi)

    def affine_map(self, window: WindowData):
        # at fixed input the regularizer drives (I - Pi) g to zero, so the
        # pure prediction map coincides with the least-squares predictor
        past = self._past(window)
        pw = past.size
        return self.theta[:, :pw] @ past, self.theta[:, pw:]

    def solve_control(self, window: WindowData, cost, r_future) -> StepSolution:
        Qbar, Rbar = _expand_cost(cost, self.Lf)
        r = np.asarray(r_future, dtype=np.float64).ravel()
        past = self._past(window)
        h = self.h
        n_cols = h.n_cols
        Hm = 2.0 * (h.Yf.T @ Qbar @ h.Yf + h.Uf.T @ Rbar @ h.Uf
                    + self.lam * self.pi_perp)
        c = -2.0 * (h.Yf.T @ Qbar @ r)
        a_eq = np.vstack([h.Up, h.Yp])
        kkt = np.block([[Hm, a_eq.T],
                        [a_eq, np.zeros((a_eq.shape[0], a_eq.shape[0]))]])
        rhs = np.concatenate([-c, past])
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        g = sol[:n_cols]
        resid = np.linalg.norm(a_eq @ g - past)
        if resid > 1e-6 * (1.0 + np.linalg.norm(past)):
            raise NumericalError(
                f"projection-regularized KKT system inconsistent at lam="
                f"{self.lam:g} (constraint residual {resid:.2e}, "
                f"cond ~ {np.linalg.cond(kkt):.2e})")
        u = h.Uf @ g
        return StepSolution(u=u, yhat=h.Yf @ g, g=g,
                            diagnostics={"lam": self.lam})


def fit_projreg(h: HankelSet, lam: float = 1.0) -> ProjRegPredictor:
    return ProjRegPredictor(h, lam)


def deepc_projreg_solve(h: HankelSet, window: WindowData, cost, lam: float,
                        r_future=None) -> StepSolution:
    """One projection-regularized control solve; returns (u*, yhat*, g*).

    ``r_future`` defaults to the zero reference.
    """
    pred = ProjRegPredictor(h, lam)
    r = np.zeros(h.n_y * h.Lf) if r_future is None else r_future
    return pred.solve_control(window, cost, r)


class SplitPredictor(Predictor):
    """Split-decision scheme: g decomposes into the least-squares prediction
    part plus a residual-space part g', with weighted penalties on both."""

    kind = "DeePC-split"

    def __init__(self, h: HankelSet, lam1: float = 1.0, lam2: float = 1.0):
        super().__init__(h.Lp, h.Lf, h.n_u, h.n_y)
        if lam1 < 0 or lam2 < 0:
            raise DomainError("lam1 and lam2 must be >= 0")
        self.lam1, self.lam2 = float(lam1), float(lam2)
        self.h = h
        self.phi = _check_regressor_rank(h)
        self.phi_pinv = pinv(self.phi)
        self.theta = h.Yf @ self.phi_pinv
        _, pi_perp = orth_projector(self.phi)
        self.E = h.Yf @ pi_perp
        self.W = pinv(self.E @ self.E.T)

    def affine_map(self, window: WindowData):
        past = self._past(window)
        pw = past.size
        return self.theta[:, :pw] @ past, self.theta[:, pw:]

    def solve_control(self, window: WindowData, cost, r_future) -> StepSolution:
        Qbar, Rbar = _expand_cost(cost, self.Lf)
        r = np.asarray(r_future, dtype=np.float64).ravel()
        past = self._past(window)
        pw = past.size
        n_in = self.n_u * self.Lf
        n_cols = self.h.n_cols
        theta_u = self.theta[:, pw:]
        y0 = self.theta[:, :pw] @ past
        gls_u = self.phi_pinv[:, pw:]
        gls_0 = self.phi_pinv[:, :pw] @ past
        nz = n_in + n_cols
        Hm = np.zeros((nz, nz))
        c = np.zeros(nz)
        jac = np.hstack([theta_u, self.E])  # d yhat / d (u, g')
        Hm += 2.0 * jac.T @ Qbar @ jac
        c += 2.0 * jac.T @ Qbar @ (y0 - r)
        Hm[:n_in, :n_in] += 2.0 * Rbar
        Hm[:n_in, :n_in] += 2.0 * self.lam1 * (gls_u.T @ gls_u)
        c[:n_in] += 2.0 * self.lam1 * (gls_u.T @ gls_0)
        Hm[n_in:, n_in:] += 2.0 * self.lam2 * (self.E.T @ self.W @ self.E)
        sol, *_ = np.linalg.lstsq(Hm, -c, rcond=None)
        u, gp = sol[:n_in], sol[n_in:]
        return StepSolution(u=u, yhat=y0 + theta_u @ u + self.E @ gp, g=gp,
                            diagnostics={"lam1": self.lam1, "lam2": self.lam2})


def fit_split(h: HankelSet, lam1: float = 1.0, lam2: float = 1.0) -> SplitPredictor:
    return SplitPredictor(h, lam1, lam2)


def deepc_split_solve(h: HankelSet, window: WindowData, cost, lam1: float,
                      lam2: float, r_future=None) -> StepSolution:
    pred = SplitPredictor(h, lam1, lam2)
    r = np.zeros(h.n_y * h.Lf) if r_future is None else r_future
    return pred.solve_control(window, cost, r)


@dataclass(frozen=True)
class GammaBlocks:
    """Blocks of the complete LQ factorization of col(Up, Yp, Uf, Yf).

    ``Q3`` holds all trailing rows of the square orthogonal factor, so
    ``Q3' Q3`` is the projector onto the orthogonal complement of the
    regressor row space; ``L33`` is conformably lower-trapezoidal.
    """

    Lp: int
    Lf: int
    n_u: int
    n_y: int
    n_cols: int
    L11: np.ndarray
    L21: np.ndarray
    L22: np.ndarray
    L31: np.ndarray
    L32: np.ndarray
    L33: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    Q3: np.ndarray


def gamma_ddpc_factorize(h: HankelSet) -> GammaBlocks:
    """Complete LQ factorization of the stacked Hankel matrix, partitioned
    into past / future-input / future-output row blocks."""
    from .linalg import lq_decompose

    stacked = np.vstack([h.Up, h.Yp, h.Uf, h.Yf])
    rows, cols = stacked.shape
    if rows > cols:
        raise DimensionError(
            f"stacked Hankel matrix must be fat, got {rows}x{cols}")
    L, Q = lq_decompose(stacked, complete=True)
    n1 = (h.n_u + h.n_y) * h.Lp
    n2 = h.n_u * h.Lf
    # rank checks tied to excitation: the input-side diagonal entries of L11
    # and all of L22 must be nonzero.  On noise-free data the output rows of
    # the past block are dependent (their diagonal entries vanish), which is
    # legitimate and handled by minimum-norm solves downstream.
    scale = abs(np.diagonal(L)).max()
    tol = max(L.shape) * np.finfo(float).eps * scale
    d = np.abs(np.diagonal(L))
    if np.any(d[:h.n_u * h.Lp] <= tol):
        raise RankError(
            "L11 input rows are singular: past input not persistently exciting")
    if np.any(d[n1:n1 + n2] <= tol):
        raise RankError(
            "L22 block is singular: future input rows depend on the past data")
    return GammaBlocks(
        Lp=h.Lp, Lf=h.Lf, n_u=h.n_u, n_y=h.n_y, n_cols=cols,
        L11=L[:n1, :n1], L21=L[n1:n1 + n2, :n1], L22=L[n1:n1 + n2, n1:n1 + n2],
        L31=L[n1 + n2:rows, :n1], L32=L[n1 + n2:rows, n1:n1 + n2],
        L33=L[n1 + n2:rows, n1 + n2:],
        Q1=Q[:n1], Q2=Q[n1:n1 + n2], Q3=Q[n1 + n2:])


class GammaDdpcPredictor(Predictor):
    """Control through the rotated coordinates gamma = Q g of the LQ
    factorization, with quadratic penalties on gamma_2 and gamma_3."""

    kind = "GammaDDPC"

    def __init__(self, blocks: GammaBlocks, beta2: float = 1.0,
                 beta3: float = 1.0):
        super().__init__(blocks.Lp, blocks.Lf, blocks.n_u, blocks.n_y)
        if beta2 < 0 or beta3 < 0:
            raise DomainError("beta2 and beta3 must be >= 0")
        self.beta2, self.beta3 = float(beta2), float(beta3)
        self.b = blocks

    @classmethod
    def from_hankel(cls, h: HankelSet, beta2: float = 1.0, beta3: float = 1.0):
        return cls(gamma_ddpc_factorize(h), beta2, beta3)

    def _gamma1(self, window: WindowData) -> np.ndarray:
        # minimum-norm solve: L11 is triangular but may carry zero diagonal
        # entries on its output rows for noise-free data
        past = self._past(window)
        g1, *_ = np.linalg.lstsq(self.b.L11, past, rcond=None)
        return g1

    def affine_map(self, window: WindowData):
        # fixed input pins gamma_2 through L22 and zeros gamma_3
        b = self.b
        g1 = self._gamma1(window)
        l22_inv = pinv(b.L22)
        gain = b.L32 @ l22_inv
        offset = b.L31 @ g1 - gain @ (b.L21 @ g1)
        return offset, gain

    def solve_control(self, window: WindowData, cost, r_future) -> StepSolution:
        Qbar, Rbar = _expand_cost(cost, self.Lf)
        r = np.asarray(r_future, dtype=np.float64).ravel()
        b = self.b
        g1 = self._gamma1(window)
        n2 = b.L22.shape[1]
        n3 = b.L33.shape[1]
        u0 = b.L21 @ g1
        y0 = b.L31 @ g1
        ju = np.hstack([b.L22, np.zeros((b.L22.shape[0], n3))])
        jy = np.hstack([b.L32, b.L33])
        Hm = 2.0 * (jy.T @ Qbar @ jy + ju.T @ Rbar @ ju)
        Hm[:n2, :n2] += 2.0 * self.beta2 * np.eye(n2)
        Hm[n2:, n2:] += 2.0 * self.beta3 * np.eye(n3)
        c = 2.0 * (jy.T @ Qbar @ (y0 - r) + ju.T @ Rbar @ u0)
        sol, *_ = np.linalg.lstsq(Hm, -c, rcond=None)
        g2, g3 = sol[:n2], sol[n2:]
        gamma = np.concatenate([g1, g2, g3])
        return StepSolution(
            u=u0 + b.L22 @ g2, yhat=y0 + b.L32 @ g2 + b.L33 @ g3, gamma=gamma,
            diagnostics={"beta2": self.beta2, "beta3": self.beta3})


def fit_gamma_ddpc(h: HankelSet, beta2: float = 1.0,
                   beta3: float = 1.0) -> GammaDdpcPredictor:
    return GammaDdpcPredictor.from_hankel(h, beta2, beta3)


def gamma_ddpc_solve(blocks: GammaBlocks, window: WindowData, cost,
                     beta2: float, beta3: float, r_future=None) -> StepSolution:
    pred = GammaDdpcPredictor(blocks, beta2, beta3)
    r = np.zeros(blocks.n_y * blocks.Lf) if r_future is None else r_future
    return pred.solve_control(window, cost, r)
