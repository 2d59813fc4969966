"""Small-ball probability bounds for random matrices with continuous diagonal
entries, verified by reproducible parallel Monte Carlo."""

from .bounds import (
    BoundCurve,
    det_bound,
    geometric_schedule,
    make_curve,
    minimize_sn_raw,
    norm_bound,
    product_density_envelope,
    product_smallball_bound,
    schedule_bound,
    sn_bound_closed,
    sn_bound_raw,
    symmetric_norm_bound,
    twobytwo_det_bound,
)
from .density_calculus import (
    QuadratureError,
    integrate_adaptive,
    product_density,
    product_density_mass,
    smallball_from_density,
)
from .distributions import Distribution, Gaussian, PiecewiseConstant, Triangular, Uniform
from .ensembles import (
    Constant,
    DeterministicMatrix,
    EnsembleSpec,
    IID,
    MatrixSample,
    RankOne,
    SeedPath,
    SharedScalar,
    SymmetricIID,
    Zero,
    regenerate,
    sample_matrix,
    sample_matrix_batch,
    symmetric_ensemble,
)
from .matrix_probes import (
    ProbeResult,
    log_abs_det,
    permanent,
    probe,
    singular_values,
)
from .mc_engine import (
    EstimationResult,
    Experiment,
    VerificationReport,
    clopper_pearson,
    estimate_expected_norm,
    run_experiment,
    verify_bound,
)

__version__ = "0.1.0"
