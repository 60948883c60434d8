"""Receding-horizon predictive control against a simulated plant."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError, NumericalError
from .simulate import SystemModel, Trajectory, _cov_factor, stream


@dataclass(frozen=True)
class CostWeights:
    """Per-step quadratic weights; expanded block-diagonally over the horizon."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("Q", "R"):
            m = np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64))
            if m.shape[0] != m.shape[1] or not np.allclose(m, m.T, atol=1e-12):
                raise DomainError(f"{name} must be symmetric square")
            if np.linalg.eigvalsh(m).min() <= 0:
                raise DomainError(f"{name} must be positive definite")
            object.__setattr__(self, name, m)


@dataclass
class ClosedLoopResult:
    """Realized closed-loop signals and accumulated tracking cost."""

    u: np.ndarray          # (N, n_u) applied inputs
    y: np.ndarray          # (N, n_y) realized outputs
    r: np.ndarray          # (N, n_y) reference
    yhat_first: np.ndarray  # (N, n_y) first block of each step's prediction
    step_cost: np.ndarray  # (N,)
    j_total: float
    diagnostics: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        path = Path(path)
        n_u, n_y = self.u.shape[1], self.y.shape[1]
        header = (["t"] + [f"u_{i}" for i in range(n_u)]
                  + [f"y_{i}" for i in range(n_y)]
                  + [f"r_{i}" for i in range(n_y)]
                  + [f"yhat_{i}" for i in range(n_y)] + ["step_cost"])
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t in range(len(self.step_cost)):
                row = ([t] + [repr(float(v)) for v in self.u[t]]
                       + [repr(float(v)) for v in self.y[t]]
                       + [repr(float(v)) for v in self.r[t]]
                       + [repr(float(v)) for v in self.yhat_first[t]]
                       + [repr(float(self.step_cost[t]))])
                w.writerow(row)


def solve_step(pred, window, cost: CostWeights, r_future):
    """Minimize the finite-horizon cost through the predictor for one step."""
    return pred.solve_control(window, cost, r_future)


def _reference_matrix(r, n_y: int) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    if r.shape[1] != n_y:
        raise DimensionError(f"reference has {r.shape[1]} channels, expected {n_y}")
    return r


def run_receding_horizon(sys: SystemModel, pred, cost: CostWeights, r,
                         warmup: Trajectory, seed=0) -> ClosedLoopResult:
    """Receding-horizon run over ``len(r)`` steps.

    The controller's history starts from the warm-up tail and the plant
    continues from the warm-up's final state (``meta["x_final"]``); only the
    first input block of each solve is applied, and the reference is
    extended past the end by holding its last value.
    """
    r = _reference_matrix(r, sys.n_y)
    n_test = r.shape[0]
    Lf = pred.Lf
    need = pred.required_history()
    if len(warmup) < need:
        raise DimensionError(
            f"warm-up supplies {len(warmup)} samples, predictor needs {need}")
    if "x_final" not in warmup.meta:
        raise DimensionError(
            "warm-up trajectory lacks meta['x_final'] for plant continuation")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    Fw, Fv = _cov_factor(sys.sigma_w), _cov_factor(sys.sigma_v)
    u_hist = [row.copy() for row in warmup.u]
    y_hist = [row.copy() for row in warmup.y]
    xc = np.asarray(warmup.meta["x_final"], dtype=np.float64).copy()
    u_out = np.empty((n_test, sys.n_u))
    y_out = np.empty((n_test, sys.n_y))
    yhat_out = np.empty((n_test, sys.n_y))
    step_cost = np.empty(n_test)
    j_total = 0.0
    for t in range(n_test):
        idx = np.minimum(np.arange(t, t + Lf), n_test - 1)
        r_fut = r[idx].ravel()
        window = pred.make_window(np.asarray(u_hist), np.asarray(y_hist))
        try:
            sol = pred.solve_control(window, cost, r_fut)
        except NumericalError as exc:
            raise NumericalError(f"step {t}: {exc}") from exc
        ut = sol.u[:sys.n_u]
        v = Fv @ rng.standard_normal(sys.n_y)
        yt = sys.C @ xc + sys.D @ ut + v
        w = Fw @ rng.standard_normal(sys.n)
        xc = sys.A @ xc + sys.B @ ut + w
        u_hist.append(ut)
        y_hist.append(yt)
        u_out[t] = ut
        y_out[t] = yt
        yhat_out[t] = sol.yhat[:sys.n_y]
        err = yt - r[t]
        step_cost[t] = float(err @ cost.Q @ err + ut @ cost.R @ ut)
        j_total += step_cost[t]
    return ClosedLoopResult(u=u_out, y=y_out, r=r, yhat_first=yhat_out,
                            step_cost=step_cost, j_total=j_total,
                            diagnostics={"predictor": pred.kind})


def evaluate_cost(result: ClosedLoopResult, cost: CostWeights, r) -> float:
    """Recompute the realized cost from the stored signals."""
    r = _reference_matrix(r, result.y.shape[1])
    total = 0.0
    for t in range(result.y.shape[0]):
        err = result.y[t] - r[t]
        total += float(err @ cost.Q @ err + result.u[t] @ cost.R @ result.u[t])
    return total
