"""Percolated Crump-Mode-Jagers family trees.

Families and their transforms live in :mod:`cmjtrees.families`, the
simulator in :mod:`cmjtrees.engine`, deterministic constants in
:mod:`cmjtrees.analysis`, the renewal-equation mean in
:mod:`cmjtrees.renewal` and replicate studies in :mod:`cmjtrees.experiments`.
"""

__version__ = "0.1.0"

from .analysis import (
    AnalysisReport,
    RegimeSchedule,
    lemma3_ratio,
    martingale_limit_mean,
    mu_bar,
    predict,
    solve_clonal_malthusian,
    solve_malthusian,
    subcritical_threshold,
)
from .engine import SimOptions, SimOutcome, export_tree, root_cluster_fraction, simulate, simulate_fixed_time
from .errors import *  # noqa: F403
from .experiments import ExperimentConfig, ExperimentReport, run_experiment, slope_fit
from .families import (
    FamilyModel,
    Kind,
    catalogue,
    check_assumptions,
    expected_phi_hat,
    laplace_mu,
    laplace_mu_deriv,
    make_family,
    preset,
    spawn_cursor,
)
from .renewal import mean_count
