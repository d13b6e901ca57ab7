"""Accelerated gradient sliding with per-oracle call accounting.

Solvers for ``min f(x) + h(x)`` that call the expensive gradient ``grad f``
far less often than ``grad h``, a restarted variant for strongly convex
problems, and a smoothing layer that applies the same machinery to bilinear
saddle-point problems.
"""

from .bregman import (
    ENTROPY,
    EUCLIDEAN,
    FeasibleSet,
    Geometry,
    ProxSubproblem,
    divergence,
    project_simplex,
    prox_map,
    prox_optimality_residual,
    solve_prox,
)
from .errors import *  # noqa: F401,F403
from .instances import (
    estimate_lmax,
    finite_difference_operator,
    gen_portfolio,
    gen_quadratic,
    gen_tv,
    load_instance,
    save_instance,
)
from .multistage import (
    StagePlan,
    estimate_delta0,
    mags_dynamic_smoothing,
    mags_run,
    plan_dynamic,
    plan_mags,
)
from .oracles import (
    LinearOperator,
    OracleCounters,
    SmoothOracle,
    check_smoothness,
    counted,
    least_squares,
    quadratic,
)
from .runner import RunConfig, race, run
from .saddle import (
    SaddleInstance,
    SmoothedObjective,
    dual_maximizer,
    psi,
    smoothed_grad,
    solve_spp,
)
from .sliding import (
    AgsSchedule,
    RunTrace,
    ags_run,
    nest_run,
    nesterov_schedule,
    prox_ag,
    schedule_cor1,
    schedule_cor2,
    validate_schedule,
)

__version__ = "0.1.0"
