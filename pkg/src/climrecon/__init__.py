"""climrecon: reconstruction of sparse 2-D climate fields.

Three reconstructors (inverse distance weighting, ordinary kriging and a
Gabor coordinate network) behind a shared point-cloud interface, plus the
machinery to compare them fairly: Bayesian hyper-parameter tuning on
validation splits, rank-based statistics with effect sizes on test metrics,
and a wall-time / peak-memory bench over growing target sets.
"""

from .domain import (
    EARTH_RADIUS_KM,
    ClimatePoint,
    ClimatePointCloud,
    CoordinateSystem,
    DuplicateCoordinateError,
    QueryPoint,
    bounding_box,
    distance,
    haversine_km,
)
from .gabornet import DivergenceError, GaborNetParams, GaborNetwork, gabor_reconstruct, train_gabor
from .idw import IdwParams, idw_reconstruct
from .kernels import BACKEND
from .kriging import (
    ConstantFieldError,
    DegenerateVariogramError,
    EmpiricalVariogram,
    FittedVariogram,
    KrigingParams,
    SingularSystemError,
    StandardizationParams,
    VariogramFamily,
    empirical_variogram,
    fit_variogram,
    krige,
    ok_reconstruct,
    ok_weights,
    preprocess_ok,
)
from .metrics import ConstantObservationsError, EvalPair, MetricSet, compute_metrics
from .spatial import KdIndex, build, knn

__version__ = "0.1.0"
