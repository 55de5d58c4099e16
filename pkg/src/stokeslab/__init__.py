"""stokeslab: a desk-scale 2D mixed finite element laboratory.

Meshes, Taylor-Hood spaces, Stokes saddle-point solves, regularized
Green's-function machinery, and measured-ratio verification experiments.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    Domain, Mesh, Subdomain, DyadicDecomposition,
    build_structured_mesh, refine_uniform, build_dyadic, classify_elements,
    mesh_hierarchy, read_mesh, write_mesh,
)
from .space import (  # noqa: F401
    FeSpace, FeField, CallableField, CutoffFunction,
    interpolate, evaluate, evaluate_gradient, norm, h1_norm, build_cutoff,
    read_field, write_field,
)
from .quadrature import QuadratureRule, gauss_triangle  # noqa: F401
from .regularization import (  # noqa: F401
    DeltaFunction, SmoothBump, WeightSigma, build_bump, build_delta, eval_sigma,
)
from .stokes import (  # noqa: F401
    RhsFunctional, Solution, StokesOperator, assemble, compute_infsup,
    export_matrix, infsup_dense_oracle, infsup_spectrum, operator,
    ritz_projection, solve, solve_body_force,
)
from .projections import projection_Ph, projection_rh  # noqa: F401
from .greens import (  # noqa: F401
    GreensCase, GreensLab, ReferencePair, dyadic_profile,
    interpolation_error_lambda0, prolong, solve_greens,
)
from .verification import (  # noqa: F401
    ExperimentConfig, LevelLadder, RatioSeries, run_assumption_suite,
    run_local_energy_check, run_local_h2_check, run_stability_experiment,
)
