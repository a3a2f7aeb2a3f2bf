"""Classical capacity of photon pairs sent through a collectively depolarizing fiber."""

__version__ = "0.1.0"

from .analyzer import AnalyzerModel, classify_detector_pair, mode_overlap, outcome_probabilities
from .capacity import (
    ClassicalChannelMatrix,
    binary_capacity_closed_form,
    blahut_arimoto,
    holevo_quantity,
    optimize_two_state_prior,
)
from .channel import ChannelModel, scramble_single_use, twirl_exact, twirl_monte_carlo
from .experiment import (
    evaluate_capacity,
    fit_gaussian_pair,
    reduce_to_channel,
    run_pipeline,
    simulate_scan,
)
from .qstate import (
    TwoQubitState,
    apply_collective,
    make_named_state,
    singlet_fidelity,
    von_neumann_entropy,
)
