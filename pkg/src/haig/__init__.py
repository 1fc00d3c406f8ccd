"""Finite human-AI safety games: model, solver, runtime filter, harness."""

from .errors import (
    BudgetExceededError,
    DistributionError,
    HaigError,
    NotConvergedError,
    PolicyResolutionError,
    SchemaError,
    SerializationError,
    SpecReferenceError,
    SpecSyntaxError,
)
from .filtering import (
    FALLBACK_ONLY,
    LEAST_RESTRICTIVE,
    SWITCH,
    InterventionRecord,
    SafetyFilter,
    certified_actions,
    check_initial_condition,
    filter_action,
    perfect_filter,
    pluggable_monitor,
)
from .harness import (
    Counterexample,
    OracleReport,
    RolloutConfig,
    RolloutTrace,
    VerificationReport,
    compare_oracle,
    rollout,
    summary_csv,
    verify_safety,
)
from .model import (
    GameSpec,
    GroundTruthSystem,
    ValidationItem,
    ValidationReport,
    allowed_human_actions,
    margin,
    step_info_state,
    validate_model,
)
from .rng import SplitMix64
from .scenarios import build_chain, build_dialogue, random_game
from .solver import (
    ValueSolution,
    brute_force_value,
    extract_policies,
    q_value,
    solution_payload,
    value_iteration,
)
from .specfile import SpecDocument, load_spec, parse_spec, save_spec, serialize

__all__ = [
    "BudgetExceededError",
    "Counterexample",
    "DistributionError",
    "FALLBACK_ONLY",
    "GameSpec",
    "GroundTruthSystem",
    "HaigError",
    "InterventionRecord",
    "LEAST_RESTRICTIVE",
    "NotConvergedError",
    "OracleReport",
    "PolicyResolutionError",
    "RolloutConfig",
    "RolloutTrace",
    "SWITCH",
    "SafetyFilter",
    "SchemaError",
    "SerializationError",
    "SpecDocument",
    "SpecReferenceError",
    "SpecSyntaxError",
    "SplitMix64",
    "ValidationItem",
    "ValidationReport",
    "ValueSolution",
    "VerificationReport",
    "allowed_human_actions",
    "brute_force_value",
    "build_chain",
    "build_dialogue",
    "certified_actions",
    "check_initial_condition",
    "compare_oracle",
    "extract_policies",
    "filter_action",
    "load_spec",
    "margin",
    "parse_spec",
    "perfect_filter",
    "pluggable_monitor",
    "q_value",
    "random_game",
    "rollout",
    "save_spec",
    "serialize",
    "solution_payload",
    "step_info_state",
    "summary_csv",
    "validate_model",
    "value_iteration",
    "verify_safety",
]
