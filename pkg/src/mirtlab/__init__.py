"""Multidimensional item response theory: models, likelihoods, estimation and a geometry lab."""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DataFormatError,
    DegenerateModelError,
    DimensionError,
    ExistenceError,
    HyperplaneVerificationError,
    LikelihoodDomainError,
    MirtError,
    SurfaceError,
)
from .irt_core import MISSING, ItemKind, Response, UnivariateItem, irf, irf_derivative, log_bernoulli
from .mirt_models import (
    CoordinateChange,
    GmirtItem,
    IndependentItem,
    ScalarProductItem,
    change_coordinates,
    gmirt_eval,
    indep_eval,
    model_gradient,
    sp_eval,
    sp_pullback,
    sp_response_prob,
)
from .geometry_lab import (
    LineProbe,
    Surface,
    check_compensatory,
    check_line_monotonic,
    check_parallel,
    decompose_to_univariate,
    demo_noninvariance,
    factorization_ratio_test,
    find_constant_hyperplane,
)
from .likelihood import (
    PopulationModel,
    QuadratureRule,
    ResponseMatrix,
    gauss_hermite_rule,
    item_likelihood,
    item_log_likelihood,
    joint_log_likelihood,
    marginal_log_likelihood,
    mvn_log_density,
    student_likelihood,
    student_log_likelihood,
)
from .estimation import (
    AbilityEstimate,
    FitConfig,
    FitResult,
    check_mle_existence,
    estimate_ability,
    fit_joint,
    fit_marginal_em,
    ridge_diagnostics,
)
from .io import (
    ParameterFile,
    SimulationSpec,
    load_parameters,
    load_response_matrix,
    save_parameters,
    save_response_matrix,
    simulate,
)
