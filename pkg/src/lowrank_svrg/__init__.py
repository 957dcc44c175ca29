"""Variance-reduced stochastic gradient solvers for low-rank matrix recovery."""

from lowrank_svrg.linalg import (
    FactorPair,
    SvdTriple,
    procrustes_distance,
    project_rank_r,
    spectral_norm_sq,
    top_r_svd,
)
from lowrank_svrg.models import (
    CompletionProblem,
    Link,
    OneBitProblem,
    SensingProblem,
    grad_component,
    grad_full,
    link_eval,
    loss_full,
    project_factor,
)
from lowrank_svrg.datagen import (
    GenSpec,
    GroundTruth,
    gen_completion,
    gen_ground_truth,
    gen_onebit,
    gen_problem,
    gen_sensing,
)
from lowrank_svrg.solvers import (
    GdConfig,
    InitConfig,
    IterTrace,
    SvrgConfig,
    factored_full_gradient,
    factored_objective,
    gd_solve,
    init_solve,
    semi_stochastic_gradient,
    svrg_solve,
)
from lowrank_svrg.errors import DivergenceError, NumericalError

__version__ = "0.1.0"
