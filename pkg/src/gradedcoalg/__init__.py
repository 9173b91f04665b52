"""Graded monad coalgebras for continuous-time Markov chains with observations."""

from .ctmc import (
    Generator,
    Kernel,
    LabelledModel,
    ModelValidationError,
    check_homomorphism,
    eigen_solution,
    kernel_at,
    load_model,
    lumpability_quotient,
    random_walk_model,
    repairable_3state,
    repairable_4state,
)
from .findist import FinDist, FinSubDist, bind, dirac, product, pushforward, strength
from .gcoalg import (
    EquivConfig,
    behavioural_equivalent,
    composite_at,
    iterate_step_coalgebra,
    trace_equivalent,
    trace_vector,
)
from .glogic import (
    BOOLEAN,
    QUANTITATIVE,
    eval_boolean,
    eval_quantitative,
    find_distinguishing_formula,
    logical_quotient,
    parse_formula,
    uniform_depth,
)
from .timealg import SamplingWord, parse_word, samp_mul, samp_normalize

__version__ = "0.1.0"
