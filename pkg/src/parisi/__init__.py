"""Numerics for the Parisi variational formula of mixed p-spin models.

Evaluate the replica functional over discrete order-parameter measures,
minimize it over k-atom measures, verify the derivative identities in the
interaction strengths, detect the replica-symmetric region, and cross-check
everything against an exactly enumerated finite-size model.
"""

from .mixture import MixtureSpec, make_spec, xi, xi_prime, xi_second, theta
from .measure import (
    DiscreteMeasure,
    make_measure,
    dirac,
    moment,
    l1_distance,
    cdf_eval,
    mix,
)
from .functional import (
    QuadratureConfig,
    FunctionalValue,
    QuadratureResolutionError,
    DEFAULT_QUAD,
    evaluate,
    value_from_arrays,
    rs_closed_form,
    decomposition_f,
    partial_q,
    partial_m,
    LOG2,
)
from .optimizer import (
    OptimizerOptions,
    MinimizeResult,
    LadderLevel,
    LadderReport,
    StationarityReport,
    minimize_k,
    minimize_ladder,
    stationarity_certificate,
    convexity_probe,
)
from .calculus import (
    SubdifferentialProbe,
    dP_dbeta_analytic,
    dP_dbeta_fd,
    subdifferential_probe,
    overlap_moment_limit,
    envelope_values,
)
from .phase import (
    PhaseDiagnostics,
    BoundaryScanResult,
    rs_best_dirac,
    fixed_point_oracle,
    classify,
    boundary_scan,
)
from .finite_model import (
    ENUMERATION_LIMIT,
    FiniteModelSample,
    GibbsSummary,
    DisorderAverage,
    IbpCheck,
    sample_disorder,
    interaction_energies,
    hamiltonian_values,
    log_partition,
    gibbs_summary,
    disorder_average,
    ibp_check,
)

__version__ = "0.1.0"
