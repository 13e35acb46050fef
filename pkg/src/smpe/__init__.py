"""Workbench for discounted stochastic games on weighted cell grids."""

from .errors import (
    AtomicMass,
    InvalidInput,
    NoConvergence,
    NoSelection,
    ParseError,
    PreconditionFailed,
    SmpeError,
    ValidationError,
)
from .game import (
    KernelDecomposition,
    StochasticGameSpec,
    ValidationReport,
    sunspot_extend,
    validate_game,
)
from .kernels import (
    KernelMatrix,
    LevyParams,
    NoisyGameParams,
    NowakParams,
    block_rank_profile,
    check_coarser,
    kernel_matrix,
    make_levy_kernel,
    make_noisy_game,
    make_nowak_game,
)
from .measure import (
    CandidateField,
    GridSpace,
    Piece,
    SplitSelection,
    StepFunction,
    conditional_expectation,
    exhaustive_selection_search,
    half_split,
    is_g_atom,
    purify_selection,
)
from .nash import (
    AggregateVector,
    NashPoint,
    StageGame,
    build_stage_game,
    nash_enumerate,
)
from .solver import EquilibriumResult, SolveOptions, atom_value_operator, solve
from .verify import Certificate, SimulationReport, deviation_residual, simulate_payoffs

__all__ = [
    "AggregateVector",
    "AtomicMass",
    "CandidateField",
    "Certificate",
    "EquilibriumResult",
    "GridSpace",
    "InvalidInput",
    "KernelDecomposition",
    "KernelMatrix",
    "LevyParams",
    "NashPoint",
    "NoConvergence",
    "NoSelection",
    "NoisyGameParams",
    "NowakParams",
    "ParseError",
    "Piece",
    "PreconditionFailed",
    "SimulationReport",
    "SmpeError",
    "SolveOptions",
    "SplitSelection",
    "StageGame",
    "StepFunction",
    "StochasticGameSpec",
    "ValidationError",
    "ValidationReport",
    "atom_value_operator",
    "block_rank_profile",
    "build_stage_game",
    "check_coarser",
    "conditional_expectation",
    "deviation_residual",
    "exhaustive_selection_search",
    "half_split",
    "is_g_atom",
    "kernel_matrix",
    "make_levy_kernel",
    "make_noisy_game",
    "make_nowak_game",
    "nash_enumerate",
    "purify_selection",
    "simulate_payoffs",
    "solve",
    "sunspot_extend",
    "validate_game",
]
