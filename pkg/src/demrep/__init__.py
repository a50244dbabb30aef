"""Democratic (minimum max-norm) signal representations over redundant frames."""

__version__ = "0.1.0"

from .frames import (FrameBounds, FrameOperator, UPCertificate, build_dense,
                     build_dft_tone_frame, build_equiangular_parseval,
                     build_gaussian, build_subsampled_dft, coherence,
                     frame_bounds, load_frame, save_frame, up_check_exhaustive,
                     welch_bound)
from .prox import (ProxResult, norm_inf_tilde, project_affine, project_l1_ball,
                   project_l2_ball, prox_inf, prox_inf_tilde)
from .solvers import (GapReport, SolverConfig, SolverResult, certify,
                      dual_objective, solve_cram, solve_cramp,
                      solve_least_squares)
from .metrics import (TrialRecord, bound_lower_democracy, bound_papr_fullspark,
                      bound_papr_up, bound_power_increase,
                      bound_upper_democracy, count_extreme, empirical_ku,
                      oversample, papr, papr_db, papr_oversampled,
                      papr_oversampled_db, power_increase)
from .experiments import (CcdfTable, ExperimentConfig, ExperimentError,
                          OfdmResult, PhaseDiagramResult, ccdf, load_config,
                          qam_map, run_experiment_to_files, run_ofdm_papr,
                          run_phase_diagram)

__all__ = [
    "FrameBounds", "FrameOperator", "UPCertificate", "build_dense",
    "build_dft_tone_frame", "build_equiangular_parseval", "build_gaussian",
    "build_subsampled_dft", "coherence", "frame_bounds", "load_frame",
    "save_frame", "up_check_exhaustive", "welch_bound",
    "ProxResult", "norm_inf_tilde", "project_affine", "project_l1_ball",
    "project_l2_ball", "prox_inf", "prox_inf_tilde",
    "GapReport", "SolverConfig", "SolverResult", "certify", "dual_objective",
    "solve_cram", "solve_cramp", "solve_least_squares",
    "TrialRecord", "bound_lower_democracy", "bound_papr_fullspark",
    "bound_papr_up", "bound_power_increase", "bound_upper_democracy",
    "count_extreme", "empirical_ku", "oversample", "papr", "papr_db",
    "papr_oversampled", "papr_oversampled_db", "power_increase",
    "CcdfTable", "ExperimentConfig", "ExperimentError", "OfdmResult",
    "PhaseDiagramResult", "ccdf", "load_config", "qam_map",
    "run_experiment_to_files", "run_ofdm_papr", "run_phase_diagram",
]
