"""Steady states, entanglement and squeezing spectra of two cavity modes
coupled by engineered two-photon loss."""

from .exceptions import (
    ConfigError,
    DegenerateStateError,
    DegenerateSteadyStateError,
    DimensionError,
    NonStationaryError,
    ParameterError,
    SolverError,
    TruncationError,
    TwoPhotonError,
)
from .fock import (
    PureState,
    StateLabel,
    Truncation,
    annihilation_op,
    ces_state,
    coherent_state,
    kron,
    noon_state,
)
from .model import (
    DerivedCouplings,
    Superoperator,
    SystemParams,
    apply,
    build_full_liouvillian,
    build_reduced_liouvillian,
    derived_couplings,
)
from .steady import (
    DensityMatrix,
    SteadyReport,
    dark_residual,
    evolve,
    solve_reduced,
    steady_state,
)
from .entanglement import (
    CesFit,
    DuanResult,
    duan_variance,
    fit_ces_mixture,
    fock_populations,
    negativity,
    optimize_phase,
    partial_transpose_a,
)
from .spectra import (
    CorrelatorSpec,
    SpectrumSeries,
    integrated_cavity_check,
    narrowband_output_criterion,
    squeezing_spectra,
    time_domain_spectra,
    two_time_correlator,
)
from .validation import (
    ConditionReport,
    FeasiblePoint,
    check_conditions,
    choose_parameters,
    compare_full_vs_reduced,
    perturbative_coherences,
)

__version__ = "0.1.0"
