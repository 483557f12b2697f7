"""Stochastic gradient methods under growth conditions.

Finite-sum problems, four method variants (plain/projected/proximal/
resolvent stochastic gradient), growth-condition fitting, and rate/floor
analysis with a config-driven CLI (``sgmlab run|validate|report``).
"""

from .analysis import (
    EnsembleStats,
    RateFit,
    RateFitError,
    aggregate,
    check_inverse_t_rate,
    estimate_floor,
    fit_linear_rate,
    predict_floor,
    stats_from_matrix,
)
from .geometry import (
    ConvexSet,
    LinearMonotoneOperator,
    NumericalError,
    Regularizer,
    affine_subspace,
    ball,
    box,
    constant_regularizer,
    halfspace,
    hyperplane,
    indicator,
    l1_regularizer,
    project,
    prox,
    quadratic_regularizer,
    regularizer_value,
    resolvent,
    whole_space,
    zero_regularizer,
)
from .growth import (
    GrowthReport,
    NecessaryConditionReport,
    contraction_margins,
    enumerate_successors,
    fit_sgc,
    fit_wgc,
    growth_record,
    kaczmarz_M,
    measured_worst_omega,
    probe_grid,
    verify_necessary_condition,
    write_growth_json,
)
from .problems import (
    Component,
    EvaluationError,
    FiniteSumProblem,
    KaczmarzSystem,
    exact_conditional_moment,
    load_kaczmarz_text,
    make_kaczmarz_problem,
    make_quadratic_l1,
    make_random_kaczmarz_system,
    make_shared_minimizer_quadratics,
    make_two_point_quadratic,
)
from .solvers import (
    METHODS,
    ConstantStep,
    DivergenceError,
    EnsembleRun,
    InverseTStep,
    SolverRun,
    Trajectory,
    gradient_mapping,
    recommend_step,
    run,
    run_ensemble,
)

__version__ = "0.1.0"
