"""Stochastic LTI simulation in state-space and innovation forms.

Random draws come from named Philox streams so that independent runs
(different trials, different roles within a trial) are reproducible and
order-independent.  Per step the measurement noise is drawn before the
process noise.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError

# roles for derived random streams
TRAIN, WARMUP, TEST, REFERENCE = 1, 2, 3, 4


def stream(*key: int) -> np.random.Generator:
    """Counter-based random stream keyed by a tuple of integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def _check_cov(cov: np.ndarray, dim: int, name: str) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (dim, dim):
        raise DimensionError(f"{name} must be {dim}x{dim}, got {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise DomainError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(cov)
    if eig.min(initial=0.0) < -1e-12 * max(1.0, abs(eig).max(initial=0.0)):
        raise DomainError(f"{name} is not positive semidefinite")
    return cov


def _cov_factor(cov: np.ndarray) -> np.ndarray:
    """Factor F with F F' = cov; Cholesky with a symmetric-eigen fallback
    for semidefinite covariances."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        w = np.clip(w, 0.0, None)
        return v * np.sqrt(w)[None, :]


@dataclass(frozen=True)
class SystemModel:
    """State-space model with Gaussian process and measurement noise."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    sigma_w: np.ndarray
    sigma_v: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=np.float64).reshape(n, -1)
        C = np.asarray(self.C, dtype=np.float64).reshape(-1, n)
        ny, nu = C.shape[0], B.shape[1]
        D = np.asarray(self.D, dtype=np.float64).reshape(ny, nu)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "sigma_w", _check_cov(self.sigma_w, n, "sigma_w"))
        object.__setattr__(self, "sigma_v", _check_cov(self.sigma_v, ny, "sigma_v"))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]


def paper_system() -> SystemModel:
    """The two-state SISO benchmark system used throughout the experiments."""
    return SystemModel(
        A=np.array([[0.7326, -0.0861], [0.1722, 0.9909]]),
        B=np.array([[0.0609], [0.0064]]),
        C=np.array([[0.0, 1.4142]]),
        D=np.array([[0.0]]),
        sigma_w=(5e-3) ** 2 * np.eye(2),
        sigma_v=np.array([[(2e-3) ** 2]]),
    )


@dataclass
class Trajectory:
    """Time-indexed input/output record of one run.

    ``x`` (states), ``e`` (innovations) and ``yhat`` (one-step predictions)
    are optional channels; all present channels share the same length.
    """

    u: np.ndarray
    y: np.ndarray
    x: np.ndarray | None = None
    e: np.ndarray | None = None
    yhat: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.u.ndim == 1:
            self.u = self.u[:, None]
        T = self.u.shape[0]
        for name in ("y", "x", "e", "yhat"):
            ch = getattr(self, name)
            if ch is None:
                continue
            ch = np.asarray(ch, dtype=np.float64)
            if ch.ndim == 1:
                ch = ch[:, None]
            if ch.shape[0] != T:
                raise DimensionError(
                    f"channel {name} has length {ch.shape[0]}, expected {T}")
            if not np.all(np.isfinite(ch)):
                raise DomainError(f"channel {name} contains non-finite entries")
            setattr(self, name, ch)
        if not np.all(np.isfinite(self.u)):
            raise DomainError("channel u contains non-finite entries")

    def __len__(self) -> int:
        return self.u.shape[0]

    @property
    def n_u(self) -> int:
        return self.u.shape[1]

    @property
    def n_y(self) -> int:
        return self.y.shape[1]

    def slice(self, start: int, stop: int | None = None) -> "Trajectory":
        """Sub-trajectory over [start, stop); optional channels follow."""
        stop = len(self) if stop is None else stop
        meta = dict(self.meta)
        if stop != len(self):
            meta.pop("x_final", None)
        return Trajectory(
            u=self.u[start:stop], y=self.y[start:stop],
            x=None if self.x is None else self.x[start:stop],
            e=None if self.e is None else self.e[start:stop],
            yhat=None if self.yhat is None else self.yhat[start:stop],
            meta=meta)

    def with_channels(self, e=None, yhat=None) -> "Trajectory":
        return Trajectory(u=self.u, y=self.y, x=self.x,
                          e=self.e if e is None else e,
                          yhat=self.yhat if yhat is None else yhat,
                          meta=dict(self.meta))


@dataclass(frozen=True)
class SignalSpec:
    """Scalar excitation/reference signal description."""

    kind: str  # square_wave | sinusoid | white_noise | constant
    length: int
    period: int = 1
    amplitude: float = 1.0
    noise_variance: float = 0.0

    def __post_init__(self):
        if self.kind not in ("square_wave", "sinusoid", "white_noise", "constant"):
            raise DomainError(f"unknown signal kind {self.kind!r}")
        if self.kind in ("square_wave", "sinusoid") and self.period < 1:
            raise DomainError(f"period must be >= 1 for {self.kind}")
        if self.noise_variance < 0:
            raise DomainError("noise_variance must be >= 0")
        if self.length < 1:
            raise DomainError("length must be >= 1")


def generate_signal(spec: SignalSpec, seed) -> np.ndarray:
    """Realize a SignalSpec as a scalar sequence.

    The square wave starts at +amplitude and switches every period/2 steps;
    Gaussian noise of the requested variance is added sample-wise.
    """
    t = np.arange(spec.length)
    if spec.kind == "square_wave":
        base = np.where(((2 * t) // spec.period) % 2 == 0,
                        spec.amplitude, -spec.amplitude).astype(np.float64)
    elif spec.kind == "sinusoid":
        base = spec.amplitude * np.sin(2 * np.pi * t / spec.period)
    elif spec.kind == "constant":
        base = np.full(spec.length, spec.amplitude)
    else:
        base = np.zeros(spec.length)
    if spec.noise_variance > 0:
        rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
        base = base + rng.normal(0.0, np.sqrt(spec.noise_variance), spec.length)
    return base


def simulate_open_loop(sys: SystemModel, u, x0=None, seed=0) -> Trajectory:
    """Simulate ``x+ = Ax + Bu + w, y = Cx + Du + v`` with seeded noise."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[1] != sys.n_u:
        raise DimensionError(f"input has {u.shape[1]} channels, expected {sys.n_u}")
    if u.shape[0] == 0:
        raise DimensionError("input sequence is empty")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    x0 = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=np.float64).ravel()
    if x0.shape != (sys.n,):
        raise DimensionError(f"x0 must have length {sys.n}")
    Fw, Fv = _cov_factor(sys.sigma_w), _cov_factor(sys.sigma_v)
    T = u.shape[0]
    x = np.empty((T, sys.n))
    y = np.empty((T, sys.n_y))
    xc = x0.copy()
    for t in range(T):
        v = Fv @ rng.standard_normal(sys.n_y)
        x[t] = xc
        y[t] = sys.C @ xc + sys.D @ u[t] + v
        w = Fw @ rng.standard_normal(sys.n)
        xc = sys.A @ xc + sys.B @ u[t] + w
    return Trajectory(u=u, y=y, x=x,
                      meta={"seed": seed, "loop": "open", "x_final": xc})


def simulate_closed_loop(sys: SystemModel, feedback_gain: float, r, x0=None,
                         seed=0) -> Trajectory:
    """Simulate the SISO feedback law ``u_t = gain * (r_t - y_t)``.

    The measurement is realized first; with a direct feedthrough D the
    scalar algebraic loop ``(1 + gain*D) y = Cx + gain*D*r + v`` is solved
    exactly.
    """
    if sys.n_u != 1 or sys.n_y != 1:
        raise DimensionError(
            f"scalar feedback law needs a SISO system, got n_u={sys.n_u}, "
            f"n_y={sys.n_y}")
    r = np.asarray(r, dtype=np.float64).ravel()
    if r.size == 0:
        raise DimensionError("reference sequence is empty")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    x0 = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=np.float64).ravel()
    gain = float(feedback_gain)
    d = float(sys.D[0, 0])
    if abs(1.0 + gain * d) < 1e-12:
        raise DomainError("algebraic loop 1 + gain*D is singular")
    Fw, Fv = _cov_factor(sys.sigma_w), _cov_factor(sys.sigma_v)
    T = r.size
    x = np.empty((T, sys.n))
    y = np.empty((T, 1))
    u = np.empty((T, 1))
    xc = x0.copy()
    for t in range(T):
        v = Fv @ rng.standard_normal(1)
        x[t] = xc
        yt = (sys.C @ xc + gain * d * r[t] + v) / (1.0 + gain * d)
        u[t] = gain * (r[t] - yt)
        y[t] = yt
        w = Fw @ rng.standard_normal(sys.n)
        xc = sys.A @ xc + sys.B @ u[t] + w
    return Trajectory(u=u, y=y, x=x,
                      meta={"seed": seed, "loop": "closed", "gain": gain,
                            "x_final": xc})


@dataclass(frozen=True)
class InnovationModel:
    """Innovation-form representation (A, B, C, D, K)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    K: np.ndarray


def innovation_form(sys: SystemModel, K) -> InnovationModel:
    """Innovation form of ``sys`` with gain K: ``x+ = Ax + Bu + Ke``,
    ``y = Cx + Du + e``."""
    K = np.asarray(K, dtype=np.float64).reshape(sys.n, sys.n_y)
    return InnovationModel(A=sys.A, B=sys.B, C=sys.C, D=sys.D, K=K)


def simulate_innovation(model: InnovationModel, u, e, x0=None) -> Trajectory:
    """Deterministically run the innovation form on given innovations."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    e = np.asarray(e, dtype=np.float64)
    if e.ndim == 1:
        e = e[:, None]
    if e.shape[0] != u.shape[0]:
        raise DimensionError("u and e must have equal length")
    n = model.A.shape[0]
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).ravel()
    T = u.shape[0]
    x = np.empty((T, n))
    y = np.empty((T, model.C.shape[0]))
    yhat = np.empty_like(y)
    xc = x0.copy()
    for t in range(T):
        x[t] = xc
        yhat[t] = model.C @ xc + model.D @ u[t]
        y[t] = yhat[t] + e[t]
        xc = model.A @ xc + model.B @ u[t] + model.K @ e[t]
    return Trajectory(u=u, y=y, x=x, e=e, yhat=yhat,
                      meta={"loop": "innovation", "x_final": xc})


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write one row per time step: t, u_0.., y_0.., [x_0..], [e_0..]."""
    path = Path(path)
    header = ["t"]
    header += [f"u_{i}" for i in range(traj.n_u)]
    header += [f"y_{i}" for i in range(traj.n_y)]
    if traj.x is not None:
        header += [f"x_{i}" for i in range(traj.x.shape[1])]
    if traj.e is not None:
        header += [f"e_{i}" for i in range(traj.e.shape[1])]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(len(traj)):
            row = [t]
            row += [repr(float(v)) for v in traj.u[t]]
            row += [repr(float(v)) for v in traj.y[t]]
            if traj.x is not None:
                row += [repr(float(v)) for v in traj.x[t]]
            if traj.e is not None:
                row += [repr(float(v)) for v in traj.e[t]]
            w.writerow(row)


def trajectory_from_csv(path) -> Trajectory:
    """Inverse of :func:`trajectory_to_csv`."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    cols = {name: idx for idx, name in enumerate(header)}

    def group(prefix):
        idx = [cols[k] for k in header if k.startswith(prefix + "_")]
        if not idx:
            return None
        return np.array([[float(row[i]) for i in idx] for row in data])

    return Trajectory(u=group("u"), y=group("y"), x=group("x"), e=group("e"))
