"""Hyperspectral unmixing under endmember variability.

Two-stage workflow: first estimate a per-pixel, per-band, per-endmember
scaling tensor from pure-pixel information with a low-rank (CP) smoothness
constraint; then solve a regularised matrix-factorisation problem for the
abundances and per-pixel endmember matrices.  See :mod:`hsunmix.core` for
the array layout conventions.
"""

__version__ = "0.1.0"

from .core import cube_to_matrix, matrix_to_cube, pixelwise_scaling
from .exceptions import (
    BadMagicError,
    ConvergenceWarning,
    CsvParseError,
    DataFormatError,
    DimensionMismatchError,
    PurePixelWarning,
    RankWarning,
    TruncatedPayloadError,
)
from .extraction import (
    PurePixelSets,
    extract_endmembers_vca,
    find_pure_pixels,
    spectral_angle,
)
from .metrics import MetricsReport, evaluate_unmixing, match_endmembers, rmse, sam
from .synthgen import (
    GroundTruth,
    SynthConfig,
    forward_glmm,
    generate,
    load_default_library,
)
from .tensor4 import CPDecomposition, constant_cp, cp_als, fold, reconstruct, unfold
from .unmixing import (
    UnmixConfig,
    fcls,
    gradient_h,
    gradient_h_adjoint,
    gradient_v,
    gradient_v_adjoint,
    group_soft_threshold,
    objective_unmix,
    project_simplex_columns,
    unmix,
    update_abundances_admm,
    update_endmembers,
)
from .variability import (
    VariabilityConfig,
    VariabilityResult,
    estimate_variability,
    objective_psi,
    update_psi,
)
