"""Time-varying sparse graph estimation, changepoint detection, and
principal network analysis."""

from .changepoint import (
    ChangepointReport,
    ChangepointResult,
    KernelConfig,
    SideEstimates,
    detect,
    fast_candidates,
    fit_with_changepoints,
    run_changepoint_pipeline,
    select_estimators,
    side_residual,
)
from .glm import (
    IDENTITY_LINK,
    LOGISTIC_LINK,
    LinkSpec,
    Mode,
    RegressionSetting,
    TimeSeriesPanel,
    build_design,
    offset_loss,
    residual,
)
from .kernels import KernelWeights, Side, make_kernel
from .metrics import EdgeRocPoint, changepoint_error, edge_roc, trajectory_error
from .pna import (
    Factorization,
    IpalmConfig,
    align_factors,
    ipalm_factorize,
    lipschitz_bounds,
    mf_gradients,
    mf_objective,
    prox_B,
)
from .prox import prox_group, prox_nuclear, prox_symmetric_pairs
from .synth import GroundTruth, SynthConfig, generate, simulate_ar
from .tvgraph import (
    GraphSequence,
    PenaltySpec,
    fit_tv_graphs,
    grad_F,
    objective_F,
)

__version__ = "0.1.0"
