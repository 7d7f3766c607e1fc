"""EDM-based multi-source position and DOA estimation for microphone arrays.

Core pipeline: GCC-PHAT candidate TDOAs feed Euclidean-distance-matrix rank
costs that locate sources with a single 1-D search (position) or none at
all (DOA); SRP-PHAT grid searches serve as baselines. A deterministic
scenario simulator and an evaluation harness support desk-scale
experiments, exposed through a FastAPI service and a CLI.
"""

from .errors import (
    DegenerateGeometry,
    InfeasibleCombination,
    InfeasibleScenario,
    InvalidInput,
)
from .geometry import (
    Edm,
    GramEval,
    MicArray,
    ProcrustesMap,
    absolute_position_from_relative,
    edm_to_gram,
    eigendecompose_sym,
    mic_centering_vector,
    procrustes,
    reconstruct_relative_positions,
    source_centering_vector,
)
from .signals import GccCurve, StftConfig, gcc_phat, phase_spectrum, stft
from .tdoa import (
    CandidateSet,
    center_tdoas,
    combination_overlap,
    enumerate_combinations,
    pick_candidates,
    select_reference_mic,
)
from .position import (
    DistanceGrid,
    EstimateBatch,
    PositionEstimate,
    PositionEstimatorConfig,
    estimate_positions,
    estimate_positions_from_signals,
    minimize_ref_distance,
    position_cost,
    source_edm,
)
from .doa import (
    DoaEstimate,
    DoaEstimatorConfig,
    RankReducedGram,
    direction_cost,
    estimate_doas,
    estimate_doas_from_signals,
    rank_reduced_gram,
    reconstruct_source_frame,
)
from .srp import (
    PairPhases,
    SrpGrid,
    SrpValue,
    srp_localize_doa,
    srp_localize_position,
    srp_value_doa,
    srp_value_position,
)
from .sim import (
    Scenario,
    ScenarioConfig,
    TruthOracle,
    sample_scenario,
    speech_like_source,
    synthesize,
)
from .evaluate import (
    BenchConfig,
    ExperimentConfig,
    ExperimentResult,
    RunResult,
    bench,
    error_doa_deg,
    error_position_cm,
    greedy_assign,
    run_experiment,
)

__version__ = "0.1.0"
