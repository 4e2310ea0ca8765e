//! Fuzzy decision analysis for System-of-Systems negotiation.
//!
//! Crisp performance, funding and deadline gaps plus a capability weight are
//! fuzzified, run through a 256-rule Fuzzy Associative Memory with Mamdani
//! min–max inference, and defuzzified by centroid into funding and deadline
//! adjustments. The [`simulator`] drives one SoS agent negotiating with N
//! system agents using those adjustments.

pub mod cli;
pub mod fam;
pub mod fuzzy;
pub mod negotiation;
pub mod simulator;

pub use fam::{
    defuzz_centroid, fam_lookup, generate_default_rules, infer, parse_rules, serialize_rules,
    Antecedent, DeadlineAction, FamError, FamRule, FamTable, FundingAction, InferenceResult,
};
pub use fuzzy::{
    classify_gap, classify_weight, eval_mf, fuzzify, GapKind, GapTerm, LinguisticVariable,
    MembershipVector, PiecewiseLinear, WeightTerm,
};
pub use negotiation::{
    compute_gaps, next_request, plan_adjustments, reconcile_budget, AdjustmentPlan,
    CapabilityState, GapVector, NegotiationError,
};
pub use simulator::{
    accept, load_scenario, run, system_respond, write_trace, RoundTrace, RunOutcome, RunStatus,
    Scenario, ScenarioError, SimError, Summary, SystemAgentParams,
};
