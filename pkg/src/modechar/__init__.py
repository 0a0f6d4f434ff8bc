"""Parallel blue-sideband simulation and motional-mode characterization."""

from .chain import (
    Assignment,
    ChainConfig,
    DriveTone,
    assignment_schedule,
    builtin_dataset,
    load_config,
    resonant_tones,
    tau_max,
)
from .hamsim import (
    BasisIndex,
    DimensionGuardError,
    NormDriftError,
    PropagationResult,
    SimOptions,
    StateVector,
    build_bsb_entries,
    convergence_report,
    displacement_element,
    phase_rates,
    propagate,
    simulate_truth,
)
from .physics import (
    TwoLevelParams,
    bsb_rabi,
    dw_average,
    dw_single,
    laguerre,
    two_level_population,
    two_level_unitary,
)
from .thermal import (
    PhononEnsemble,
    ensemble_average,
    enumerate_configs,
    sample_configs,
    thermal_pmf,
)
from .trace import PopulationTrace

__version__ = "0.1.0"
