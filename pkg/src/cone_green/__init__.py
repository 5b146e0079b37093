"""Green functions, exit times and harmonic functions of lattice random
walks killed outside a cone, with an asymptotics verification harness."""

from .steps import (
    StepDistribution, AssumptionReport, PeriodInfo, InvalidDistribution,
    make_simple_walk, make_product_walk, make_williamson, make_custom,
    rademacher_pmf, lazy_unit_pmf, reversed_dist, moment,
    moment_log_corrected, validate_assumptions, r1_exponent,
    sample_step, sample_steps, replica_rng, snap_to_reachable,
)
from .cones import Cone, make_halfspace, make_wedge, make_orthant
from .dp import (
    KilledKernel, GreenEstimate, MemoryCapError,
    killed_kernel, survival, green_truncated, green_many,
    green_free_truncated, expected_tau_truncated, llt_tail,
)
from .ladder import (
    LadderLaw, ladder_height_pmf, renewal_function,
    harmonic_v, reversed_harmonic, harmonic_table,
)
from .quadrature import profile_integral, profile_integral_closed_form
from .kernels import USE_NUMBA

__version__ = "0.1.0"
