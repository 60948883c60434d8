"""Data-driven predictive control with innovation null-space estimation.

Hankel-matrix predictors fitted from noisy LTI trajectories, estimation of
the subspace of decision vectors invisible to future innovations (by
least-squares residuals, instrumental variables, or high-order ARX
residuals), a steady-state Kalman baseline, and a receding-horizon control
loop with a Monte Carlo experiment runner.
"""
from .control import ClosedLoopResult, CostWeights, evaluate_cost, run_receding_horizon, solve_step
from .errors import (ConfigError, DimensionError, DomainError, InnodpcError,
                     NumericalError, RankError)
from .hankel import (HankelSet, WindowData, block_hankel, build_hankel_set,
                     extract_window, persistency_order)
from .kalman import (KalmanModel, PredictorSystem, kalman_filter_pass,
                     kalman_multistep_predict, kalman_window_pass,
                     predictor_system, reconstruct_state, solve_dare)
from .linalg import (SubspaceBasis, largest_angle_to_nullspace,
                     largest_nullspace_angle, lq_decompose, nullspace_basis,
                     orth_projector, pinv, principal_angles, row_space_basis,
                     svd)
from .predictors import (ArxModel, GammaBlocks, NullspaceEstimate, Predictor,
                         StepSolution, arx_hankel_set, arx_nullspace,
                         deepc_pinv_predict, deepc_projreg_solve,
                         deepc_split_solve, fit_arx, fit_deepc_pinv,
                         fit_gamma_ddpc, fit_inno_pre, fit_iv,
                         fit_kalman_predictor, fit_kf_pre, fit_projreg,
                         fit_spc, fit_split, gamma_ddpc_factorize,
                         gamma_ddpc_solve, inno_pre_predict, iv_deepc_predict,
                         kf_pre_predict, ls_residual_hankel,
                         true_innovation_hankel, true_innovation_nullspace)
from .serialize import load_predictor, save_predictor
from .simulate import (InnovationModel, SignalSpec, SystemModel, Trajectory,
                       generate_signal, innovation_form, paper_system,
                       simulate_closed_loop, simulate_innovation,
                       simulate_open_loop, stream, trajectory_from_csv,
                       trajectory_to_csv)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
