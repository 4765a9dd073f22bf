"""Wasserstein barycenters of Lab color distributions for H&E stain
normalization and augmentation."""

from .barycenter import (
    BarycenterProblem,
    BarycenterResult,
    ScheduleMode,
    SupportStrategy,
    WeightSchedule,
    build_support,
    displacement_interpolation,
    interpolation_path,
    schedule_weights,
    solve_barycenter,
    transport_map,
)
from .colorspace import lab_to_rgb, rgb_to_lab
from .metrics import SsimConfig, luminance, ssim, ssim_map
from .ot_core import (
    DiscreteMeasure,
    SinkhornResult,
    SolverConfig,
    TransportPlan,
    barycentric_map,
    cost_matrix,
    exact_ot_small,
    sinkhorn,
    transport_cost,
    w2_distance,
)
from .palette import ColorPalette, extract_palette, reconstruct
from .transfer import (
    DEFAULT_T_SAMPLES,
    NormalizationRequest,
    TransferResult,
    augment,
    normalize,
)

__version__ = "0.1.0"

__all__ = [
    "BarycenterProblem",
    "BarycenterResult",
    "ColorPalette",
    "DEFAULT_T_SAMPLES",
    "DiscreteMeasure",
    "NormalizationRequest",
    "ScheduleMode",
    "SinkhornResult",
    "SolverConfig",
    "SsimConfig",
    "SupportStrategy",
    "TransferResult",
    "TransportPlan",
    "WeightSchedule",
    "augment",
    "barycentric_map",
    "build_support",
    "cost_matrix",
    "displacement_interpolation",
    "exact_ot_small",
    "extract_palette",
    "interpolation_path",
    "lab_to_rgb",
    "luminance",
    "normalize",
    "reconstruct",
    "rgb_to_lab",
    "schedule_weights",
    "sinkhorn",
    "solve_barycenter",
    "ssim",
    "ssim_map",
    "transport_cost",
    "transport_map",
    "w2_distance",
]
