"""Frank-Wolfe solver for volunteer-measure allocation in emergency response.

Computes optimal volunteer measures (finite atomic measures of fixed total
mass) that minimize the death probability of the next emergency incident,
with exact closed-form objective and influence evaluation, a Poisson
simulation oracle, optimality certification, and an L1-norm grid fast path.
"""

__version__ = "0.1.0"

from .geometry import (
    ConvexPolygon,
    Rect,
    contains,
    convex_hull,
    distance,
    project,
    sample_uniform,
)
from .measure import DiscreteMeasure, ball_mass, merge_and_prune, restrict_to_domain, tv_distance
from .scenario import (
    DeathCurve,
    DiscretePoints,
    Problem,
    RectMixture,
    ScenarioError,
    UniformRect,
    beta,
    beta_prime,
    load_scenario,
    make_city,
    sample_incident,
    support_hull,
)
from .response import (
    InfluenceKernel,
    SampleBatch,
    correction_gradient,
    directional_derivative,
    influence,
    influence_gradient,
    objective_exact,
    objective_mc,
    simulate_objective,
    smoothness_constant,
    survival_integral,
)
from .solver import (
    SolveTrace,
    SolverConfig,
    certify,
    dfw_solve,
    fcfw_solve,
    fully_corrective,
    kkt_residual,
    minimize_influence,
    simplex_project,
    two_point_optimum,
)
from .l1 import DemandGrid, build_grid, concavity_check, l1_solve_on_grid, vertex_argmin_check

__all__ = [
    "__version__",
    "ConvexPolygon", "Rect", "contains", "convex_hull", "distance", "project",
    "sample_uniform",
    "DiscreteMeasure", "ball_mass", "merge_and_prune", "restrict_to_domain", "tv_distance",
    "DeathCurve", "DiscretePoints", "Problem", "RectMixture", "ScenarioError", "UniformRect",
    "beta", "beta_prime", "load_scenario", "make_city", "sample_incident", "support_hull",
    "InfluenceKernel", "SampleBatch", "correction_gradient", "directional_derivative",
    "influence", "influence_gradient", "objective_exact", "objective_mc",
    "simulate_objective", "smoothness_constant", "survival_integral",
    "SolveTrace", "SolverConfig", "certify", "dfw_solve", "fcfw_solve", "fully_corrective",
    "kkt_residual", "minimize_influence", "simplex_project", "two_point_optimum",
    "DemandGrid", "build_grid", "concavity_check", "l1_solve_on_grid", "vertex_argmin_check",
]
