"""Gyrokinetic-limit experiments for 2D Vlasov-Poisson with a point charge."""

from ._parallel import get_threads, set_threads
from .config import ConfigError, RunConfig, parse_config, serialize
from .fields import BlobParams, SingularityError, charge_field, coulomb_field, log_interaction_energy
from .measures import (
    Bump,
    SymbolicTestFunction,
    TestDictionary,
    TestFunction,
    WeightedMeasure,
    concentration_modulus,
    dual_norm_distance,
    h_phi_bilinear,
    h_phi_pair,
    symmetrization_check,
)
from .vp_sim import (
    BlowUpError,
    ChargeState,
    InitialDataSpec,
    NearCollisionError,
    SimulationError,
    VPState,
    run,
    sample_initial_data,
    step,
)
from .study import StudyReport, run_convergence_study
from .vortex_wave import VortexState, vw_run

__version__ = "0.1.0"
