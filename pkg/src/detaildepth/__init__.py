"""Depth-map geometry for detailed single-view human depth estimation.

Base/detail decomposition, depth-normal fusion, normals from depth,
integral heatmap regression, training losses and evaluation metrics.
Kernels run under numba when available; set ``DETAILDEPTH_BACKEND=numpy``
to force the pure-numpy path.
"""
from ._backend import backend_name, use_backend
from .core import (
    CameraModel,
    DepthGrid,
    GridPoint3,
    NormalGrid,
    back_project,
    back_project_grid,
    joint_mask,
    neighbors4,
    rmse,
)
from .decompose import BilateralParams, ShapeDecomposition, center_median, decompose
from .errors import (
    DetailDepthError,
    DimensionMismatchError,
    DomainTooLargeError,
    EmptyInputError,
    FormatError,
    InvalidPixelError,
    NotNormalizedError,
    OutOfRangeError,
)
from .fusion import FusionParams, ToyParams, global_oracle, refine, sine_toy_report
from .losses import LossParams, huber, truncated_l1
from .metrics import DepthEvalReport, evaluate
from .normals import PlaneFitParams, angular_error, normals_from_depth
from .regression import DepthBinning, VolumeHeatmap, integral_depthmap, integral_joint
from .synth import SurfaceSpec, corrupt, generate

__version__ = "0.1.0"
