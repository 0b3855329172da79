"""
Bayesian estimation of time-dependent transition intensities of a two-state
Markov jump process from panel data, by augmenting each observation interval
with the honest times of the two driving Poisson point processes.
"""
__version__ = "0.1.0"

from .rate_models import (
    ChannelPair,
    RateParams,
    cumulative_hazard,
    intensity_at,
    inverse_remaining_hazard,
)
from .tpm_oracle import (
    InitialDistribution,
    TransitionMatrix,
    crude_initial_estimates,
    exact_fit_constant,
    observed_log_likelihood,
    tpm_closed_form_constant,
    tpm_quadrature,
)
from .honest_times import sample_constrained_pair, sample_honest_time
from .ctmc_simulator import coupling_check, regular_grids, simulate_panel, simulate_path, states_at
from .panel_io import PanelDataset, parse_panel_csv, validate_panel, visit_summary, write_panel_csv
from .mcmc_engine import ChainConfig, Prior, ThetaState, posterior_summary, run_chain, truncation_report
