"""Secrecy-rate optimization for a full-duplex ISAC base station.

Library layout:

  scene       scenario configuration and channel synthesis
  metrics     SINRs, secrecy rates, beampattern masks, Monte Carlo oracle
  surrogate   expansion points and the concave minorant pieces
  subproblem  one convex subproblem: build, solve, audit
  ijtb        the alternating optimizer and baseline designs
  harness     experiment specs, trial execution, CSV emission, audits
"""

from .scene import (ChannelSet, ScenarioConfig, db_to_linear, linear_to_db,
                    make_channel_set, steering_vector)
from .metrics import (DegenerateBeampatternError, DesignPoint, McSinrEstimate,
                      SensingMasks, build_sensing_masks, dl_sinr, eve_dl_sinr,
                      eve_ul_sinr, ismr, mc_sinr_oracle, phi_matrix, q_matrix,
                      sum_secrecy_dl, sum_secrecy_ul, ul_sinr)
from .surrogate import (ExpansionPoint, surrogate_sr_dl, surrogate_sr_ul_lb,
                        taylor_phi1, taylor_phi2, taylor_phi3,
                        ul_hat_sinr, ul_linearized_bound)
from .subproblem import (ConicProgram, SolverResult, SolveTolerances,
                         build_p13, solve)
from .ijtb import (IjtbOptions, IterationRecord, SolveReport, bench_feasible,
                   bench_iso_an, bench_iso_no_an, run_ijtb, ul_beamformer)
from .harness import (ExperimentSpec, check_outputs, masks_for, run_cell,
                      run_experiment, trial_rng_pair, write_outputs)

__version__ = "0.1.0"

__all__ = [
    "ChannelSet", "ScenarioConfig", "db_to_linear", "linear_to_db",
    "make_channel_set", "steering_vector",
    "DegenerateBeampatternError", "DesignPoint", "McSinrEstimate",
    "SensingMasks", "build_sensing_masks", "dl_sinr", "eve_dl_sinr",
    "eve_ul_sinr", "ismr", "mc_sinr_oracle", "phi_matrix", "q_matrix",
    "sum_secrecy_dl", "sum_secrecy_ul", "ul_sinr",
    "ExpansionPoint", "surrogate_sr_dl", "surrogate_sr_ul_lb",
    "taylor_phi1", "taylor_phi2", "taylor_phi3", "ul_hat_sinr",
    "ul_linearized_bound",
    "ConicProgram", "SolverResult", "SolveTolerances", "build_p13", "solve",
    "IjtbOptions", "IterationRecord", "SolveReport", "bench_feasible",
    "bench_iso_an", "bench_iso_no_an", "run_ijtb", "ul_beamformer",
    "ExperimentSpec", "check_outputs", "masks_for", "run_cell",
    "run_experiment", "trial_rng_pair", "write_outputs",
    "__version__",
]
