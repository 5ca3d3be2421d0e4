from .mh import default_step_scale, mh_sweep, site_log_ratio, sweep_inplace
from .pm import (
    ParallelMarginalization,
    StepRecord,
    SwapCounter,
    Variant,
    constant_schedule,
    dyadic_schedule,
    linear_schedule,
    pm_step,
)
from .reference import (
    MidpointGaussian,
    SequentialKernelFamily,
    autoregressive_family,
    independent_family,
    q_form_lambda,
    reduction_lambda,
)
from .swap import (
    AllZeroWeightError,
    GaussianMarginal,
    OracleUnavailableError,
    QuadratureMarginal,
    SwapOutcome,
    acceptance_probability,
    exact_swap_accept,
    swap_bridge_simplified,
    swap_pm1,
    swap_pm2,
)
