"""Patient first-mean stability of stochastically switched, stochastically delayed systems.

Maps have the form ``F(x) = L x + W tanh(x) + b``. Their smallest
Lipschitz matrices turn a nonlinear switched system into a nonnegative
linear one whose p-radius, when below one, certifies p-th mean stability;
for ``p = 1`` the certificate survives every bounded stochastic delay.
"""

from ._backend import BACKEND
from .delay import (
    DelayedSwitchedSystem,
    DelayPolicy,
    delayed_system,
    embed_map,
    embed_matrix,
    expected_delayed_lipschitz,
)
from .linalg import (
    DimensionCapError,
    NonConvergenceError,
    ReductionError,
    SpectralResult,
    assemble_companion,
    isoradial_reduce,
    kron,
    kron_power,
    spectral_radius,
)
from .schema import SchemaError, parse_system, system_to_dict
from .sim import estimate_decay, export_csv, mc_p_radius_estimate, simulate
from .stability import (
    StabilityReport,
    Verdict,
    check_delayed_first_mean_stable,
    check_first_mean_stable,
    check_patient_stability,
    p_radius,
    verify_reduction_equivalence,
)
from .systems import (
    CustomMap,
    IntervalEnsemble,
    LipschitzSet,
    MapSpec,
    SwitchedSystem,
    draw_instance,
    find_shared_fixed_point,
    lipschitz_matrix,
    lipschitz_set,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CustomMap",
    "DelayPolicy",
    "DelayedSwitchedSystem",
    "DimensionCapError",
    "IntervalEnsemble",
    "LipschitzSet",
    "MapSpec",
    "NonConvergenceError",
    "ReductionError",
    "SchemaError",
    "SpectralResult",
    "StabilityReport",
    "SwitchedSystem",
    "Verdict",
    "assemble_companion",
    "check_delayed_first_mean_stable",
    "check_first_mean_stable",
    "check_patient_stability",
    "delayed_system",
    "draw_instance",
    "embed_map",
    "embed_matrix",
    "estimate_decay",
    "expected_delayed_lipschitz",
    "export_csv",
    "find_shared_fixed_point",
    "isoradial_reduce",
    "kron",
    "kron_power",
    "lipschitz_matrix",
    "lipschitz_set",
    "mc_p_radius_estimate",
    "p_radius",
    "parse_system",
    "simulate",
    "spectral_radius",
    "system_to_dict",
    "verify_reduction_equivalence",
]
