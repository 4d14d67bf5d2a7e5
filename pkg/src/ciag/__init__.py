"""Curvature-aided incremental aggregated gradient methods for finite sums."""
from .dataio import Dataset, logistic_problem, minibatch, parse_libsvm, serialize_libsvm, synth_generate
from .errors import (
    ConfigError,
    ContractViolation,
    DivergenceError,
    InvalidInputError,
    ParseError,
    ReferenceFailure,
    UnsupportedStructureError,
)
from .oracle import (
    ComponentOracle,
    LogisticComponent,
    ProblemInstance,
    QuadraticComponent,
    assemble_problem,
    full_gradient,
    make_logistic_component,
    make_quadratic_component,
)
from .optim import Schedule, SolverConfig, Trace, run
from .theory import (
    RateConstants,
    RecursionSpec,
    aciag_admissible_c,
    aciag_params,
    ciag_admissible_c,
    rate_targets,
    simulate_recursion_p5,
    simulate_recursion_p6,
)
from .tracker import CurvatureTracker, IagTracker, LinearModelTracker, init_state

__version__ = "0.1.0"
