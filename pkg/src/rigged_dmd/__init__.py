"""Rigged DMD: smoothed generalised eigenfunctions of unitary Koopman operators."""

from .dictionary import (
    Dictionary,
    SnapshotSet,
    evaluate_feature_matrix,
    parse_dictionary,
    parse_observable,
    quadrature_weights,
)
from .dmd_core import MpEdmdModel, RankDeficientError, edmd, gram, mpedmd, resolvent_apply
from .kernels import (
    KernelSpec,
    SmoothingConfig,
    eval_periodic_kernel,
    make_rational_kernel,
    poisson_kernel,
    theta_grid,
    verify_kernel_order,
)
from .modes import ModeSweep, generalized_modes
from .rigged import (
    ObservableCoeffs,
    WavePacketSet,
    coherency_residual,
    evaluate_packet,
    observable_coefficients,
    subspace_angle,
    wave_packets,
)

__version__ = "0.1.0"

__all__ = [
    "Dictionary",
    "SnapshotSet",
    "evaluate_feature_matrix",
    "parse_dictionary",
    "parse_observable",
    "quadrature_weights",
    "MpEdmdModel",
    "RankDeficientError",
    "edmd",
    "gram",
    "mpedmd",
    "resolvent_apply",
    "KernelSpec",
    "SmoothingConfig",
    "eval_periodic_kernel",
    "make_rational_kernel",
    "poisson_kernel",
    "theta_grid",
    "verify_kernel_order",
    "ModeSweep",
    "generalized_modes",
    "ObservableCoeffs",
    "WavePacketSet",
    "coherency_residual",
    "evaluate_packet",
    "observable_coefficients",
    "subspace_angle",
    "wave_packets",
]
