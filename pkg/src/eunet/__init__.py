"""Exact inference and decision analysis for expected utility networks.

A network couples two undirected arc layers over one ordered set of discrete
variables: a probability layer and a utility layer, each parameterised by
per-variable positive ratio tables against a distinguished reference state.
The package reconstructs the implied joint measures exactly, answers
probability/utility/value queries about events, tests independence at the
graph, table, and event level, and optimises decision variables — including
a worked second-price auction model.
"""

from .decision import (
    TIE_TOLERANCE,
    AuctionModel,
    DecisionProblem,
    OptimalDecision,
    auction_best_response,
    build_vickrey_auction,
    classify_relevance,
    decompose_decisions,
    optimal_decision,
)
from .formats import (
    BN_FORMAT,
    EUN_FORMAT,
    BayesNet,
    SchemaError,
    bn_to_eun,
    moral_arcs,
    parse_bayes_net,
    parse_network,
    serialize_network,
)
from .independence import (
    declared_independent,
    derive_perfect_map,
    eu_independent_events,
    eu_independent_vars,
    max_ratio_spread,
    separates,
    table_independent,
)
from .inference import (
    MeasureTriple,
    conditional_event_utility,
    conditional_probability,
    event_utility,
    local_conditional_eu,
    marginal_p_ratio,
    marginal_u_ratio,
    utility_bayes,
    value,
)
from .model import (
    DEFAULT_STATE_CAP,
    PROB,
    STATE_CAP_ENV,
    UTIL,
    Assignment,
    EmptyEventError,
    EunError,
    EUNGraph,
    Event,
    ImapReport,
    ImapViolation,
    MantlePotential,
    Network,
    ReconstructedJoint,
    RestrictedPotential,
    SeparationError,
    Space,
    StateCapError,
    ValidationError,
    VariableSpec,
    build_network,
    derive_restricted_potentials,
    full_mantle_potential,
    joint_ratio,
    reconstruct_joint,
    resolve_state_cap,
    validate_imap,
)

__version__ = "0.1.0"

__all__ = [
    "PROB",
    "UTIL",
    "DEFAULT_STATE_CAP",
    "STATE_CAP_ENV",
    "TIE_TOLERANCE",
    "EUN_FORMAT",
    "BN_FORMAT",
    "EunError",
    "ValidationError",
    "SchemaError",
    "StateCapError",
    "EmptyEventError",
    "SeparationError",
    "VariableSpec",
    "EUNGraph",
    "RestrictedPotential",
    "Space",
    "Assignment",
    "Event",
    "Network",
    "ReconstructedJoint",
    "MantlePotential",
    "ImapReport",
    "ImapViolation",
    "MeasureTriple",
    "DecisionProblem",
    "OptimalDecision",
    "AuctionModel",
    "BayesNet",
    "build_network",
    "joint_ratio",
    "reconstruct_joint",
    "full_mantle_potential",
    "validate_imap",
    "derive_restricted_potentials",
    "resolve_state_cap",
    "separates",
    "declared_independent",
    "table_independent",
    "max_ratio_spread",
    "derive_perfect_map",
    "eu_independent_vars",
    "eu_independent_events",
    "marginal_p_ratio",
    "marginal_u_ratio",
    "conditional_probability",
    "event_utility",
    "conditional_event_utility",
    "value",
    "utility_bayes",
    "local_conditional_eu",
    "optimal_decision",
    "decompose_decisions",
    "classify_relevance",
    "build_vickrey_auction",
    "auction_best_response",
    "parse_network",
    "serialize_network",
    "parse_bayes_net",
    "bn_to_eun",
    "moral_arcs",
    "__version__",
]
