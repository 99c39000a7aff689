"""Parallel Gaussian process regression with low-rank covariance
approximations: exact GP, PITC/PIC support-set methods, and a
reduced-rank incomplete-Cholesky method, each with a distributed
master-worker realization that matches its centralized counterpart.
"""

from .core import Dataset, Hyperparams, Point, Points, Prediction, concat_datasets
from .exact import fgp_predict
from .icf import centralized_icf, factor_distributed, factor_serial
from .kernels import cov_matrix, kernel
from .linalg import NotPositiveDefiniteError, pd_factor, pd_solve
from .metrics import MetricsReport, mnlp, rmse
from .partition import (
    Partition,
    partition_clustered,
    partition_even,
    select_support_set,
    support_candidates,
)
from .pitc import centralized_pic, centralized_pitc
from .runtime import (
    Ledger,
    SummaryStore,
    assimilate,
    new_store,
    run_picf,
    run_ppic,
    run_ppitc,
    store_predict,
)

__all__ = [
    "Dataset",
    "Hyperparams",
    "Ledger",
    "MetricsReport",
    "NotPositiveDefiniteError",
    "Partition",
    "Point",
    "Points",
    "Prediction",
    "SummaryStore",
    "assimilate",
    "centralized_icf",
    "centralized_pic",
    "centralized_pitc",
    "concat_datasets",
    "cov_matrix",
    "factor_distributed",
    "factor_serial",
    "fgp_predict",
    "kernel",
    "mnlp",
    "new_store",
    "partition_clustered",
    "partition_even",
    "pd_factor",
    "pd_solve",
    "rmse",
    "run_picf",
    "run_ppic",
    "run_ppitc",
    "select_support_set",
    "store_predict",
    "support_candidates",
]

__version__ = "0.1.0"
