"""f-divergence preference optimisation on finite simplexes.

Submodules:

``generators``  catalog of generating functions and f-divergences
``classifier``  DPO-inducing and displacement-resistance tests
``simplex``     full and partial-sum regularised reward maximisation
``losses``      DPO, f-DPO and SquaredPO losses with gradients
``trainer``     tabular Bradley-Terry training laboratory
``oracle``      brute-force references used for cross-checks
``cli``         command-line entry point
"""

from .generators import Generator, catalog, f_divergence, get as get_generator
from .classifier import Verdict, argmin_f, classify, classify_taxonomy, is_displacement_resistant, is_dpo_inducing
from .simplex import (
    HypothesisViolation,
    PartialCase,
    SimplexInstance,
    check_displacement_bound,
    closed_form_kl,
    implied_gaps,
    objective_full,
    objective_partial,
    solve_full,
    solve_partial_convex,
    solve_partial_numeric,
    verify_kkt_equal_partials,
)
from .losses import TripleLogProbs, bt_nll, dpo_loss, fdpo_loss, squaredpo_loss
from .trainer import (
    PreferenceTriple,
    SyntheticWorld,
    TabularPolicy,
    ToyConfig,
    chosen_log_ratios,
    displacement_report,
    generate_world,
    run_experiment,
    sample_preferences,
    train,
)

__version__ = "0.1.0"
