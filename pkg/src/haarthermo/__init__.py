"""Haar systems on finite groupoids: transfer operators, transverse measures, thermodynamic formalism."""
from .errors import (
    ConvergenceError,
    HaarError,
    InputError,
    NotNormalizedError,
    PartitionError,
    ValidationError,
)
from .groupoid import (
    FiniteGroupoid,
    Kernel,
    Measure,
    ModularFunction,
    PointSpace,
    Potential,
    TransverseFunction,
    build_fiber_groupoid,
    build_partition_groupoid,
    kernel_convolve,
    saturation_check,
    validate_modular,
    validate_transverse,
)
from .transfer import (
    apply_H,
    dual_apply,
    eigenfunction_residual,
    invariant_from_seed,
    normalize,
    u_tilde,
    verify_haar_invariance,
    verify_quasi_invariance,
)
from .transverse import (
    TransverseMeasure,
    coco_invariance_check,
    lambda_eval,
    measure_from_transverse,
)
from .thermo import (
    NormalizedFamily,
    entropy,
    entropy_sup_estimate,
    equilibrium_for,
    extremal_closed_forms,
    involution_check,
    pressure,
    pressure_variational_estimate,
)
from .xy import (
    CylinderFunction,
    XYSpec,
    eigenprob,
    h_vs_ruelle_check,
    leading_eigen,
    limit_quotient,
    ruelle_apply,
    ruelle_normalize,
    xy_quasi_invariance_check,
)
from .dyn import (
    MarkovSpec,
    disintegrate,
    haar_jacobian,
    ks_entropy_via_jacobian,
    markov_jacobian,
)

__version__ = "0.1.0"
