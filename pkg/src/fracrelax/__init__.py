"""Relaxation of nonlocal fractional Sobolev-type control problems with
finite, state-dependent control sets.

The package evaluates Mittag-Leffler type solution operators, solves the
nonlocal state equation in mild form, builds convex envelopes of costs over
finite control sets and runs the relaxation experiment that compares the
relaxed optimum with chattering atom-valued controls.
"""

from fracrelax.config import load_problem, parse_problem, serialize
from fracrelax.control_geometry import FiniteControlSet, convex_hull, hausdorff, weak_norm
from fracrelax.errors import (
    AccuracyError,
    BoundUnavailableError,
    ContractionError,
    DomainError,
    FracRelaxError,
    GridTooCoarseError,
    HypothesisError,
    InvertibilityError,
    OutOfRangeError,
    PreconditionError,
    SchemaError,
    UnsupportedDimensionError,
)
from fracrelax.fractional_ops import GridFunction, TimeGrid, caputo_derivative, gronwall_bound, rl_integral
from fracrelax.mild_solver import apriori_bound, continuity_probe, residual, solve_mild
from fracrelax.optimizer import (
    RelaxedControl,
    SolveReport,
    evaluate_P,
    evaluate_RP,
    relaxation_experiment,
    solve_P,
    solve_RP,
)
from fracrelax.problem import ControlSignal, CostSpec, DynamicsSpec, NonlocalSpec, ProblemSpec, Sampled
from fracrelax.relaxation import bipolar_envelope, caratheodory_decompose, chattering_sequence
from fracrelax.sobolev_system import OperatorTriple, s_alpha, t_alpha
from fracrelax.special_functions import (
    density_moment,
    gamma_fn,
    mittag_leffler,
    mittag_leffler_matrix,
    wright_density,
)

__version__ = "0.1.0"
