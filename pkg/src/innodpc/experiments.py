"""Declarative experiment runner: sweep configs, Monte Carlo trials, CSV output.

Per-trial randomness is drawn from streams keyed by
``(master_seed, trial, sweep_index, mode_index, role)`` so results are
independent of execution order and worker count.  Within a trial all
controllers and sweep points share the same test-noise stream, which removes
common variance from method comparisons.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .control import CostWeights, run_receding_horizon
from .errors import ConfigError
from .hankel import build_hankel_set
from .kalman import solve_dare
from .linalg import (largest_angle_to_nullspace, largest_nullspace_angle,
                     row_space_basis)
from .predictors import (arx_hankel_set, fit_arx, fit_inno_pre,
                         fit_kalman_predictor, fit_kf_pre,
                         true_innovation_hankel)
from .simulate import (REFERENCE, TEST, TRAIN, WARMUP, SignalSpec,
                       SystemModel, generate_signal, paper_system,
                       simulate_closed_loop, simulate_open_loop, stream)

KNOWN_CONTROLLERS = ("InnoPre", "KFPre", "SSKF")
KNOWN_ESTIMATORS = ("LS", "IV", "ARX")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class SignalConfig:
    kind: str
    period: int = 1
    amplitude: float = 1.0
    noise_variance: float = 0.0

    def spec(self, length: int) -> SignalSpec:
        return SignalSpec(kind=self.kind, length=length, period=self.period,
                          amplitude=self.amplitude,
                          noise_variance=self.noise_variance)


@dataclass
class TrainingConfig:
    loop_mode: str
    n_train: int
    signal: SignalConfig
    feedback_gain: float = 5.0


@dataclass
class TestConfig:
    n_test: int
    reference: SignalConfig
    warmup_len: int = 60


@dataclass
class SweepConfig:
    variable: str  # rho | N_train
    grid: list


@dataclass
class MethodConfig:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class MonteCarloConfig:
    n_mc: int
    master_seed: int = 0


@dataclass
class ExperimentConfig:
    name: str
    system: object  # "paper-sec5" or a dict of matrices
    horizons: dict  # {"Lp": int, "Lf": int}
    cost: dict      # {"Q": scalar or matrix, "R": scalar or matrix}
    training: TrainingConfig
    test: TestConfig
    sweep: SweepConfig
    methods: list[MethodConfig]
    monte_carlo: MonteCarloConfig

    # -- accessors ---------------------------------------------------------
    def system_model(self) -> SystemModel:
        if self.system == "paper-sec5":
            return paper_system()
        s = self.system
        return SystemModel(A=np.array(s["A"]), B=np.array(s["B"]),
                           C=np.array(s["C"]), D=np.array(s["D"]),
                           sigma_w=np.array(s["sigma_w"]),
                           sigma_v=np.array(s["sigma_v"]))

    def cost_weights(self) -> CostWeights:
        return CostWeights(Q=np.atleast_2d(self.cost["Q"]),
                           R=np.atleast_2d(self.cost["R"]))

    @property
    def Lp(self) -> int:
        return int(self.horizons["Lp"])

    @property
    def Lf(self) -> int:
        return int(self.horizons["Lf"])

    def method_params(self, kind: str) -> dict:
        for m in self.methods:
            if m.kind == kind:
                return m.params
        return {}

    def loop_modes(self) -> list[str]:
        mode = self.training.loop_mode
        return ["open", "closed"] if mode == "both" else [mode]

    # -- (de)serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return cls(
                name=d["name"],
                system=d["system"],
                horizons=dict(d["horizons"]),
                cost=dict(d["cost"]),
                training=TrainingConfig(
                    loop_mode=d["training"]["loop_mode"],
                    n_train=int(d["training"]["n_train"]),
                    feedback_gain=float(d["training"].get("feedback_gain", 5.0)),
                    signal=SignalConfig(**d["training"]["signal"])),
                test=TestConfig(
                    n_test=int(d["test"]["n_test"]),
                    warmup_len=int(d["test"].get("warmup_len", 60)),
                    reference=SignalConfig(**d["test"]["reference"])),
                sweep=SweepConfig(variable=d["sweep"]["variable"],
                                  grid=list(d["sweep"]["grid"])),
                methods=[MethodConfig(kind=m["kind"],
                                      params=dict(m.get("params", {})))
                         for m in d["methods"]],
                monte_carlo=MonteCarloConfig(
                    n_mc=int(d["monte_carlo"]["n_mc"]),
                    master_seed=int(d["monte_carlo"].get("master_seed", 0))))
        except KeyError as exc:
            raise ConfigError(f"missing config field: {exc.args[0]}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc


def validate_config(cfg: ExperimentConfig) -> None:
    """Raise ConfigError naming the offending field on any violation."""
    if cfg.sweep.variable not in ("rho", "N_train"):
        raise ConfigError(
            f"sweep.variable must be 'rho' or 'N_train', got {cfg.sweep.variable!r}")
    if not cfg.sweep.grid:
        raise ConfigError("sweep.grid must be nonempty")
    if any(int(v) < 1 for v in cfg.sweep.grid):
        raise ConfigError("sweep.grid entries must be >= 1")
    if cfg.monte_carlo.n_mc < 1:
        raise ConfigError(f"monte_carlo.n_mc must be >= 1, got {cfg.monte_carlo.n_mc}")
    for key in ("Lp", "Lf"):
        if key not in cfg.horizons or int(cfg.horizons[key]) < 1:
            raise ConfigError(f"horizons.{key} must be an integer >= 1")
    if cfg.training.loop_mode not in ("open", "closed", "both"):
        raise ConfigError(
            f"training.loop_mode must be open/closed/both, got "
            f"{cfg.training.loop_mode!r}")
    if cfg.training.n_train < cfg.Lp + cfg.Lf:
        raise ConfigError(
            f"training.n_train = {cfg.training.n_train} shorter than "
            f"Lp + Lf = {cfg.Lp + cfg.Lf}")
    if cfg.test.n_test < 1:
        raise ConfigError("test.n_test must be >= 1")
    known = KNOWN_CONTROLLERS + KNOWN_ESTIMATORS
    for m in cfg.methods:
        if m.kind not in known:
            raise ConfigError(f"unknown method kind {m.kind!r} "
                              f"(known: {', '.join(known)})")
    if cfg.sweep.variable == "rho":
        missing = [k for k in ("InnoPre", "KFPre", "SSKF")
                   if k not in [m.kind for m in cfg.methods]]
        if missing:
            raise ConfigError(
                f"rho sweep requires methods {missing} to be configured")
    try:
        cfg.system_model()
        cfg.cost_weights()
    except Exception as exc:
        raise ConfigError(f"invalid system or cost block: {exc}") from exc


def config_from_mapping(raw: dict, profile: str | None = None) -> ExperimentConfig:
    """Expand a raw config mapping (with optional preset reference) and
    validate it.  ``profile`` overrides the mapping's own profile field."""
    raw = dict(raw)
    if "preset" in raw:
        chosen = profile or raw.pop("profile", "full")
        raw.pop("profile", None)
        cfg = preset(raw.pop("preset"), profile=chosen)
        base = cfg.to_dict()
        base.update(raw)
        cfg = ExperimentConfig.from_dict(base)
    else:
        cfg = ExperimentConfig.from_dict(raw)
    validate_config(cfg)
    return cfg


def load_config(path, profile: str | None = None) -> ExperimentConfig:
    """Parse and validate a JSON config file; presets expand first."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}") from exc
    return config_from_mapping(raw, profile=profile)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

_SEC5 = dict(
    system="paper-sec5",
    horizons={"Lp": 10, "Lf": 15},
    cost={"Q": 1.0, "R": 0.01},
    training=dict(loop_mode="closed", n_train=200, feedback_gain=5.0,
                  signal=dict(kind="square_wave", period=50, amplitude=2.0,
                              noise_variance=0.01)),
    test=dict(n_test=100, warmup_len=60,
              reference=dict(kind="sinusoid", period=100, amplitude=1.0,
                             noise_variance=0.0)),
)


def preset(name: str, profile: str = "full") -> ExperimentConfig:
    """Named experiment presets at 'full' or 'smoke' scale."""
    if profile not in ("full", "smoke"):
        raise ConfigError(f"unknown profile {profile!r} (full or smoke)")
    smoke = profile == "smoke"
    if name in ("paper-sec5-fig1", "fig1"):
        d = json.loads(json.dumps(_SEC5))
        d["name"] = "paper-sec5-fig1"
        d["sweep"] = {"variable": "rho",
                      "grid": [2, 10, 18, 26] if smoke else list(range(2, 31, 2))}
        d["methods"] = [{"kind": "InnoPre"}, {"kind": "KFPre"},
                        {"kind": "SSKF"}, {"kind": "ARX"}]
        d["monte_carlo"] = {"n_mc": 20 if smoke else 300, "master_seed": 2024}
        return ExperimentConfig.from_dict(d)
    if name in ("paper-sec5-fig2", "fig2"):
        d = json.loads(json.dumps(_SEC5))
        d["name"] = "paper-sec5-fig2"
        d["training"]["loop_mode"] = "both"
        d["sweep"] = {"variable": "N_train",
                      "grid": [100, 200, 400] if smoke else [100, 200, 400, 800]}
        d["methods"] = [{"kind": "LS"}, {"kind": "IV"},
                        {"kind": "ARX", "params": {"rho": 10}}]
        d["monte_carlo"] = {"n_mc": 20 if smoke else 300, "master_seed": 2024}
        return ExperimentConfig.from_dict(d)
    raise ConfigError(f"unknown preset {name!r}")


# ---------------------------------------------------------------------------
# trial results
# ---------------------------------------------------------------------------

@dataclass
class TrialResult:
    trial: int
    sweep: float
    loop_mode: str
    method: str
    j_total: float | None = None
    angle: float | None = None
    ok: bool = True
    note: str = ""


RESULT_COLUMNS = ("trial", "sweep", "loop_mode", "method", "j_total",
                  "angle", "ok", "note")


def results_to_csv(results: list[TrialResult], path) -> None:
    """One TrialResult per row; floats in full repr precision."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in results:
            w.writerow([r.trial, repr(float(r.sweep)), r.loop_mode, r.method,
                        "" if r.j_total is None else repr(float(r.j_total)),
                        "" if r.angle is None else repr(float(r.angle)),
                        int(r.ok), r.note])


def results_from_csv(path) -> list[TrialResult]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(TrialResult(
            trial=int(row["trial"]), sweep=float(row["sweep"]),
            loop_mode=row["loop_mode"], method=row["method"],
            j_total=float(row["j_total"]) if row["j_total"] else None,
            angle=float(row["angle"]) if row["angle"] else None,
            ok=bool(int(row["ok"])), note=row["note"]))
    return out


def summarize(results: list[TrialResult]) -> list[dict]:
    """Aggregate ok-rows per (loop_mode, sweep, method): mean and standard
    error of each present metric, plus trial and failure counts."""
    groups: dict = {}
    failures: dict = {}
    for r in results:
        key = (r.loop_mode, r.sweep, r.method)
        if not r.ok:
            failures[key] = failures.get(key, 0) + 1
            continue
        groups.setdefault(key, []).append(r)

    def stats(vals):
        vals = [v for v in vals if v is not None]
        if not vals:
            return None, None
        arr = np.array(vals)
        se = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
        return float(arr.mean()), se

    rows = []
    for key in sorted(set(groups) | set(failures)):
        members = groups.get(key, [])
        mean_j, se_j = stats([r.j_total for r in members])
        mean_a, se_a = stats([r.angle for r in members])
        rows.append({"loop_mode": key[0], "sweep": key[1], "method": key[2],
                     "n": len(members), "failed": failures.get(key, 0),
                     "mean_j": mean_j, "se_j": se_j,
                     "mean_angle": mean_a, "se_angle": se_a})
    return rows


SUMMARY_COLUMNS = ("loop_mode", "sweep", "method", "n", "failed",
                   "mean_j", "se_j", "mean_angle", "se_angle")


def summary_to_csv(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r["loop_mode"], repr(float(r["sweep"])), r["method"],
                        r["n"], r["failed"]]
                       + ["" if r[k] is None else repr(float(r[k]))
                          for k in ("mean_j", "se_j", "mean_angle", "se_angle")])


# ---------------------------------------------------------------------------
# figure pipelines
# ---------------------------------------------------------------------------

def _train_trajectory(cfg: ExperimentConfig, sys, mode: str, n_train: int,
                      rng) -> object:
    sig = generate_signal(cfg.training.signal.spec(n_train), rng)
    if mode == "open":
        return simulate_open_loop(sys, sig, seed=rng)
    return simulate_closed_loop(sys, cfg.training.feedback_gain, sig, seed=rng)


def _warmup_trajectory(cfg: ExperimentConfig, sys, r0: float, rng):
    """Settle the plant near the start of the test reference with the
    training feedback structure, so the transient does not dominate the
    realized cost."""
    ref = np.full(cfg.test.warmup_len, r0)
    return simulate_closed_loop(sys, cfg.training.feedback_gain, ref, seed=rng)


def fig1_trial(cfg: ExperimentConfig, trial: int) -> list[TrialResult]:
    """One Monte Carlo trial of the control-cost-vs-ARX-order experiment."""
    ms = cfg.monte_carlo.master_seed
    sys = cfg.system_model()
    km = solve_dare(sys)
    cost = cfg.cost_weights()
    Lp, Lf = cfg.Lp, cfg.Lf
    mode = cfg.training.loop_mode
    out: list[TrialResult] = []
    try:
        traj = _train_trajectory(cfg, sys, mode, cfg.training.n_train,
                                 stream(ms, trial, 0, 0, TRAIN))
        r_test = generate_signal(cfg.test.reference.spec(cfg.test.n_test),
                                 stream(ms, trial, 0, 0, REFERENCE))
        warm = _warmup_trajectory(cfg, sys, float(r_test[0]),
                                  stream(ms, trial, 0, 0, WARMUP))
        j_sskf = None
        if "SSKF" in [m.kind for m in cfg.methods]:
            sskf = fit_kalman_predictor(km, Lp, Lf, init="reconstruct")
            res = run_receding_horizon(sys, sskf, cost, r_test, warm,
                                       seed=stream(ms, trial, 0, 0, TEST))
            j_sskf = res.j_total
    except Exception as exc:  # trial-level failure: record every row
        return [TrialResult(trial, int(rho), mode, m.kind, ok=False,
                            note=f"{type(exc).__name__}: {exc}")
                for rho in cfg.sweep.grid for m in cfg.methods]
    for rho in cfg.sweep.grid:
        rho = int(rho)
        try:
            arx = fit_arx(traj, rho)
            h_aug = arx_hankel_set(traj, arx, Lp, Lf)
            rows = []
            if "InnoPre" in [m.kind for m in cfg.methods]:
                pred = fit_inno_pre(h_aug, arx)
                res = run_receding_horizon(sys, pred, cost, r_test, warm,
                                           seed=stream(ms, trial, 0, 0, TEST))
                rows.append(TrialResult(trial, rho, mode, "InnoPre",
                                        j_total=res.j_total))
            if "KFPre" in [m.kind for m in cfg.methods]:
                pred = fit_kf_pre(h_aug, arx)
                res = run_receding_horizon(sys, pred, cost, r_test, warm,
                                           seed=stream(ms, trial, 0, 0, TEST))
                rows.append(TrialResult(trial, rho, mode, "KFPre",
                                        j_total=res.j_total))
            _, h_true = true_innovation_hankel(sys, km, traj.slice(rho), Lp, Lf)
            rows.append(TrialResult(trial, rho, mode, "ARX",
                                    angle=largest_nullspace_angle(
                                        h_aug.Ef, h_true.Ef)))
            if j_sskf is not None:
                rows.append(TrialResult(trial, rho, mode, "SSKF",
                                        j_total=j_sskf))
            out.extend(rows)
        except Exception as exc:  # record-and-exclude failure policy
            for m in cfg.methods:
                out.append(TrialResult(trial, rho, mode, m.kind, ok=False,
                                       note=f"{type(exc).__name__}: {exc}"))
    return out


def fig2_trial(cfg: ExperimentConfig, trial: int) -> list[TrialResult]:
    """One Monte Carlo trial of the null-space-angle-vs-data-length
    experiment, over all configured loop modes."""
    ms = cfg.monte_carlo.master_seed
    sys = cfg.system_model()
    km = solve_dare(sys)
    Lp, Lf = cfg.Lp, cfg.Lf
    rho = int(cfg.method_params("ARX").get("rho", Lp))
    kinds = [m.kind for m in cfg.methods]
    out: list[TrialResult] = []
    for mode_idx, mode in enumerate(cfg.loop_modes()):
        for sweep_idx, n_train in enumerate(cfg.sweep.grid):
            n_train = int(n_train)
            try:
                rng = stream(ms, trial, sweep_idx, mode_idx, TRAIN)
                traj = _train_trajectory(cfg, sys, mode, n_train, rng)
                h = build_hankel_set(traj, Lp, Lf)
                _, h_true = true_innovation_hankel(sys, km, traj, Lp, Lf)
                if "LS" in kinds:
                    # the subspace the residual-regularized family drives g
                    # into: the row space of the regressor
                    sub = row_space_basis(h.regressor)
                    out.append(TrialResult(
                        trial, n_train, mode, "LS",
                        angle=largest_angle_to_nullspace(sub, h_true.Ef)))
                if "IV" in kinds:
                    Z = (h.regressor if mode == "open"
                         else np.vstack([h.Up, h.Yp]))
                    out.append(TrialResult(
                        trial, n_train, mode, "IV",
                        angle=largest_angle_to_nullspace(
                            row_space_basis(Z), h_true.Ef)))
                if "ARX" in kinds:
                    arx = fit_arx(traj, rho)
                    h_aug = arx_hankel_set(traj, arx, Lp, Lf)
                    _, h_true_a = true_innovation_hankel(
                        sys, km, traj.slice(rho), Lp, Lf)
                    out.append(TrialResult(
                        trial, n_train, mode, "ARX",
                        angle=largest_nullspace_angle(h_aug.Ef, h_true_a.Ef)))
            except Exception as exc:
                for kind in kinds:
                    out.append(TrialResult(trial, n_train, mode, kind,
                                           ok=False,
                                           note=f"{type(exc).__name__}: {exc}"))
    return out


def _run_trials(cfg: ExperimentConfig, trial_fn, jobs: int) -> list[TrialResult]:
    trials = range(cfg.monte_carlo.n_mc)
    if jobs <= 1:
        batches = [trial_fn(cfg, i) for i in trials]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {i: pool.submit(trial_fn, cfg, i) for i in trials}
            batches = [futures[i].result() for i in trials]
    return [r for batch in batches for r in batch]


def run_fig1(cfg: ExperimentConfig, jobs: int = 1) -> list[TrialResult]:
    """Control cost and ARX-estimate angle across the ARX-order grid."""
    validate_config(cfg)
    if cfg.sweep.variable != "rho":
        raise ConfigError("run_fig1 needs sweep.variable == 'rho'")
    return _run_trials(cfg, fig1_trial, jobs)


def run_fig2(cfg: ExperimentConfig, jobs: int = 1) -> list[TrialResult]:
    """Null-space estimation angle across the training-length grid."""
    validate_config(cfg)
    if cfg.sweep.variable != "N_train":
        raise ConfigError("run_fig2 needs sweep.variable == 'N_train'")
    return _run_trials(cfg, fig2_trial, jobs)


def run_config(cfg: ExperimentConfig, out_dir, jobs: int = 1,
               plot: bool = True) -> Path:
    """Run the experiment a config describes and write the artifact set:
    results.csv, summary.csv, config.echo and (optionally) plot.svg."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.sweep.variable == "rho":
        results = run_fig1(cfg, jobs=jobs)
    else:
        results = run_fig2(cfg, jobs=jobs)
    results_to_csv(results, out / "results.csv")
    rows = summarize(results)
    summary_to_csv(rows, out / "summary.csv")
    (out / "config.echo").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    if plot:
        from .plotting import render_summary
        render_summary(rows, cfg.sweep.variable, out / "plot.svg")
    return out
