from .analysis import (ComparisonReport, GridMismatchError, compare_tables, envelope_slope, oscillation_maxima,
                       plateau_spread)
from .general import get_breaks, is_identifier
from .io import *
from .linalg import (ContractionError, DegenerateMatrixError, NonSquareMatrixError, SVDResult, contract, is_unitary,
                     kron, matexp, noise_increment, sparse_matexp, svd_truncate, swap_matrix)
from .mps import (EvolutionGate, MPSRun, MPSState, build_gate, entanglement_entropy, init_state, photon_number,
                  population, run_mps, step_feedback, step_no_feedback, step_two_tls)
from .oracles import (OracleCurve, OracleDomainError, OracleMethod, bloch_steady, delay_amplitude, exp_decay,
                      reference_curve)
from .schemes import (Coupling, DelayGeometry, JumpChannel, Scheme, SchemeConfig, SchemeValidationError,
                      coupling_pattern, jump_operators, validate)
from .sdw import (EnsembleResult, MeasurementError, NormCollapseError, OccupiedOutputBoxError, SDWState, SDWSystem,
                  WaveguideBasis, build_basis, build_effective_propagator, build_system, ensemble_average,
                  jump_probability, lindblad_jump_check, measure_output_boxes, run_trajectory, shift_boxes,
                  trajectory_rng)
