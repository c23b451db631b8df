"""Decentralized secure-aggregation laboratory.

A K-user fully connected network computes the sum of private inputs over a
prime field so that no user -- even colluding with up to T others -- learns
anything beyond that sum.  The package provides the masking schemes, a
broadcast-network simulator with a passive collusion adversary, and an
exact information-theoretic auditor that verifies recovery, security, and
the key-structure and rate properties by exhaustive enumeration at desk
scale.
"""

from .errors import (
    BudgetExceeded,
    DecodeFailure,
    DsaError,
    Infeasible,
    InvalidCollusion,
    InvalidModulus,
    MissingMessage,
    ModulusMismatch,
    ShapeMismatch,
)
from .field import (
    FieldElement,
    SymbolVector,
    fe_add,
    fe_neg,
    is_prime,
    sample_permutation,
    sample_uniform_vector,
    vec_sum,
)
from .infoaudit import (
    DEFAULT_BUDGET,
    AuditResult,
    DerivedVariable,
    SeedSpace,
    audit_all_security,
    audit_key_structure,
    audit_recovery,
    audit_security,
    build_seed_space,
    conditional_entropy,
    conditional_mutual_information,
    entropy,
    leakage_without_sum,
    run_full_audit,
)
from .protocol import (
    BroadcastMessage,
    KeyAssignment,
    ProtocolConfig,
    RateReport,
    Scheme,
    SourceKey,
    Transcript,
    baseline_execute,
    derive_individual_keys,
    encode_message,
    feasibility_check,
    generate_source_key,
    recover_sum,
    theoretical_rates,
)
from .simnet import (
    AdversaryView,
    ChannelModel,
    MeasuredRates,
    NodeState,
    collude,
    read_replay,
    run_protocol,
    sweep,
    write_replay,
)

__version__ = "0.1.0"

__all__ = [
    "AdversaryView",
    "AuditResult",
    "BroadcastMessage",
    "BudgetExceeded",
    "ChannelModel",
    "DEFAULT_BUDGET",
    "DecodeFailure",
    "DerivedVariable",
    "DsaError",
    "FieldElement",
    "Infeasible",
    "InvalidCollusion",
    "InvalidModulus",
    "KeyAssignment",
    "MeasuredRates",
    "MissingMessage",
    "ModulusMismatch",
    "NodeState",
    "ProtocolConfig",
    "RateReport",
    "Scheme",
    "SeedSpace",
    "ShapeMismatch",
    "SourceKey",
    "SymbolVector",
    "Transcript",
    "audit_all_security",
    "audit_key_structure",
    "audit_recovery",
    "audit_security",
    "baseline_execute",
    "build_seed_space",
    "collude",
    "conditional_entropy",
    "conditional_mutual_information",
    "derive_individual_keys",
    "encode_message",
    "entropy",
    "fe_add",
    "fe_neg",
    "feasibility_check",
    "generate_source_key",
    "is_prime",
    "leakage_without_sum",
    "read_replay",
    "recover_sum",
    "run_full_audit",
    "run_protocol",
    "sample_permutation",
    "sample_uniform_vector",
    "sweep",
    "theoretical_rates",
    "vec_sum",
    "write_replay",
]
