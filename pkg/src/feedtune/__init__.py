"""Query-budgeted black-box tuning of a provider's model on a holder's data.

The provider proposes candidate parameter vectors; the holder answers with
scalar evaluation scores only. :func:`pps_run` and :func:`lcps_run` are the
two search methods, :class:`FeedbackOracle` is the holder, and
:mod:`feedtune.protocol` puts a socket between them.
"""
from .channel import BudgetExhausted, FunctionChannel, ProtocolError
from .experiment import ExperimentSpec, compare, run_experiment
from .lcps import (
    ImportanceState,
    LcpsConfig,
    RegretLedger,
    average_improvement,
    committed_improvement,
    layer_probabilities,
    lcps_run,
    optimal_beta,
    regret_bound,
    run_bandit,
    update_importance,
)
from .metrics import MetricSpec, quantize_feedback
from .models import LabeledDataset, MlpModel, evaluate, forward, pack_parameters, unpack_parameters
from .nes import (
    SampleBatch,
    SearchDistribution,
    draw_batch,
    estimate_gradient,
    normalize_feedbacks,
    projection_diagnostic,
)
from .oracle import FeedbackOracle, split_dataset
from .params import LayerPartition, Segment, axpy, make_rng, split_rng
from .pps import FairnessConfig, PpsConfig, RunTrace, default_batch_size, fairness_pps_run, pps_run, random_search
from .protocol import connect, serve
from .scenarios import SCENARIOS, get_scenario, layered_quadratic, opt_reference, prepare

__version__ = "0.1.0"
