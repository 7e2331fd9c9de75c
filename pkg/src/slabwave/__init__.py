"""Resolvents, resonances and inverse source recovery in a planar slab waveguide."""
from .errors import (
    ContractionError,
    DomainError,
    GeometryRejectedError,
    NumericError,
    SingularityError,
    SlabwaveError,
    ThresholdError,
)
from .inverse import (
    BoundaryDataSet,
    StabilityConfig,
    continuation_bound,
    continuation_exponent,
    recover_coefficient,
    reconstruct_source,
    stability_sweep,
    synthesize_data,
    tail_check,
)
from .slabgeom import CutoffFunction, Grid2D, ModalField, SlabGeometry, mode_project, mode_synthesize
from .specfun import free_kernel_2d, hankel0_first, kernel_integral_rep
from .spectral import cylinder_eigs, disk_eigensolve
from .waveguide import apply_R0, beta_extended, resonance_scan, solve_RV, trace_on_gamma

__version__ = "0.1.0"
