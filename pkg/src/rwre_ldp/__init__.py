"""Quenched large deviations for nearest-neighbor walks in random media.

Periodic and boxed lattice environments, finite-n and limiting log moment
generating functions, the corrector variational formula with its spectral
oracle, the entropy lower bound, Legendre-transform rate functions, the
explicit one-dimensional passage-time rate, and corrector sublinearity
diagnostics.
"""

__version__ = "0.1.0"

from .corrector_diag import (
    PathSumField,
    PeriodicEdgeField,
    g_n,
    interpolate,
    path_sum,
    sublinearity_profile,
)
from .entropy import (
    GammaResult,
    KernelDensityPair,
    gamma_lower,
    gamma_objective,
    invariant_density,
    lln_velocity,
    softmax_kernel,
    softmax_optimum_value,
)
from .errors import (
    ClassKError,
    Divergent,
    InvariantViolation,
    NoConvergence,
    NotInvariant,
    ParseError,
    RwreError,
)
from .lattice_env import (
    DirichletLaw,
    Environment,
    FiniteSupportLaw,
    PointMassLaw,
    load_env,
    make_periodic,
    sample_iid_boxed,
    save_env,
)
from .mgf import (
    MgfEstimate,
    brute_force_mgf,
    exact_mgf,
    mc_mgf,
    simulate_endpoints,
)
from .one_dim import (
    Env1D,
    J_rate,
    build_Fg,
    build_Fh,
    critical_tilt,
    g_h_curves,
    solve_G,
    solve_H,
    verify_I_equals_J,
)
from .rate import (
    RATE_INFINITY,
    RateCurve,
    empirical_ldp,
    legendre_transform,
    rate_curve,
)
from .variational import (
    Corrector,
    LambdaResult,
    spectral_lambda,
    supermartingale_check,
    variational_lambda,
)
