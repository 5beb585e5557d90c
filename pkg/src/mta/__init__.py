"""Dynamic discrete choice estimation by optimal transport between actions and shocks."""

from .ddc import DdcModel, EstimationResult, ModelSolution, estimate, ex_ante_values, solve_model, utility_flows
from .errors import (
    ConvergenceError,
    DataError,
    IdentificationError,
    NotInteriorError,
    TransportError,
    ValidationError,
)
from .shocks import (
    DiscreteShocks,
    GumbelIID,
    Mixture,
    MultivariateNormal,
    StateDependentNormalMixture,
    derive_seed,
    discretize,
    shocks_per_state,
)
from .surplus import choice_probs, logit_oracle_w0, surplus_value
from .transport import (
    IdentifiedSetBounds,
    InversionResult,
    TransportProblem,
    TransportSolution,
    conjugate_value,
    fenchel_check,
    identified_set_bounds,
    invert_ccp,
    solve_transport,
)

__version__ = "0.1.0"
