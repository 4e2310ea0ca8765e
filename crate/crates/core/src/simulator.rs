//! Round-based negotiation between one SoS agent and N system agents.
//!
//! Each round every system answers the current request, the SoS checks the
//! answers against its acceptance thresholds, and if they fall short it
//! plans, reconciles and issues new requests.

use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fam::{parse_rules, FamError, FamTable};
use crate::fuzzy::{classify_gap, classify_weight, GapKind, GapTerm, WeightTerm};
use crate::negotiation::{
    compute_gaps, next_request, plan_adjustments, reconcile_budget, CapabilityState, GapVector,
    NegotiationError, MAX_DEADLINE, MAX_FUNDING, MAX_PERFORMANCE, MIN_DEADLINE, MIN_FUNDING,
    MIN_PERFORMANCE,
};

/// Shipped ten-system scenario.
pub const DEFAULT_SCENARIO_JSON: &str = include_str!("../data/default-scenario.json");

pub const TRACE_HEADER: &str = "round,system_id,weight,requested_perf,offered_perf,perf_gap,perf_term,\
funding_provided,funding_requested,funding_gap,funding_term,requested_deadline,offered_deadline,deadline_gap,\
deadline_term,weight_term,raw_funding_adj,raw_deadline_adj,rec_funding_adj,rec_deadline_adj,fired_rules";

/// Rule-file value that selects the shipped default rules.
pub const DEFAULT_RULE_FILE: &str = "default";

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

impl ScenarioError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("rules {path}: {source}")]
    Rules {
        path: String,
        #[source]
        source: FamError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("round {round}: {source}")]
    Negotiation {
        round: u32,
        #[source]
        source: NegotiationError,
    },
    #[error("capability weights sum to zero")]
    ZeroWeightSum,
}

/// Parameters of the black-box responder standing in for one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemAgentParams {
    pub system_id: String,
    /// Millions per performance point.
    pub unit_cost: f64,
    /// Cycles of delay per undelivered performance point.
    pub slip_factor: u32,
    /// Multiplier (≥ 1) on the system's funding ask.
    pub greed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapabilitySpec {
    pub capability_id: String,
    pub weight: f64,
    pub requested_performance: u32,
    pub requested_deadline: u32,
    pub funding_provided: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceThresholds {
    pub max_weighted_mean_perf_gap: f64,
    pub max_deadline_gap: u32,
}

impl Default for AcceptanceThresholds {
    fn default() -> Self {
        Self {
            max_weighted_mean_perf_gap: 1.0,
            max_deadline_gap: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub total_budget: f64,
    pub capabilities: Vec<CapabilitySpec>,
    pub systems: Vec<SystemAgentParams>,
    pub acceptance: AcceptanceThresholds,
    pub max_rounds: u32,
    pub rule_file: String,
    /// Reserved; the responder is deterministic.
    pub rng_seed: u64,
}

impl Scenario {
    pub fn default_scenario() -> Scenario {
        load_scenario(DEFAULT_SCENARIO_JSON).expect("shipped default scenario is valid")
    }

    /// Checks every invariant, reporting the first violation by field path.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let finite_in = |v: f64, lo: f64, hi: f64| v.is_finite() && (lo..=hi).contains(&v);

        if !(self.total_budget.is_finite() && self.total_budget > 0.0) {
            return Err(ScenarioError::new(
                "total_budget",
                "must be a positive finite number",
            ));
        }
        if self.capabilities.is_empty() {
            return Err(ScenarioError::new(
                "capabilities",
                "at least one capability required",
            ));
        }
        if self.systems.len() != self.capabilities.len() {
            return Err(ScenarioError::new(
                "systems",
                format!(
                    "count mismatch ({} systems for {} capabilities)",
                    self.systems.len(),
                    self.capabilities.len()
                ),
            ));
        }
        for (i, cap) in self.capabilities.iter().enumerate() {
            let path = |field: &str| format!("capabilities[{i}].{field}");
            if cap.capability_id.trim().is_empty() {
                return Err(ScenarioError::new(
                    path("capability_id"),
                    "must not be empty",
                ));
            }
            if self.capabilities[..i]
                .iter()
                .any(|c| c.capability_id == cap.capability_id)
            {
                return Err(ScenarioError::new(
                    path("capability_id"),
                    format!("duplicate id '{}'", cap.capability_id),
                ));
            }
            if !finite_in(cap.weight, 0.0, 1.0) {
                return Err(ScenarioError::new(path("weight"), "must be in [0, 1]"));
            }
            if !(MIN_PERFORMANCE..=MAX_PERFORMANCE).contains(&cap.requested_performance) {
                return Err(ScenarioError::new(
                    path("requested_performance"),
                    "must be in 1..=10",
                ));
            }
            if !(MIN_DEADLINE..=MAX_DEADLINE).contains(&cap.requested_deadline) {
                return Err(ScenarioError::new(
                    path("requested_deadline"),
                    "must be in 1..=100",
                ));
            }
            if !finite_in(cap.funding_provided, MIN_FUNDING, MAX_FUNDING) {
                return Err(ScenarioError::new(
                    path("funding_provided"),
                    "must be in [1, 10]",
                ));
            }
        }
        if self.capabilities.iter().all(|c| c.weight == 0.0) {
            return Err(ScenarioError::new("capabilities", "all weights are zero"));
        }
        for (i, sys) in self.systems.iter().enumerate() {
            let path = |field: &str| format!("systems[{i}].{field}");
            if sys.system_id.trim().is_empty() {
                return Err(ScenarioError::new(path("system_id"), "must not be empty"));
            }
            if self.systems[..i]
                .iter()
                .any(|s| s.system_id == sys.system_id)
            {
                return Err(ScenarioError::new(
                    path("system_id"),
                    format!("duplicate id '{}'", sys.system_id),
                ));
            }
            if !(sys.unit_cost.is_finite() && sys.unit_cost > 0.0) {
                return Err(ScenarioError::new(path("unit_cost"), "must be positive"));
            }
            if !(sys.greed.is_finite() && sys.greed >= 1.0) {
                return Err(ScenarioError::new(path("greed"), "must be at least 1"));
            }
        }
        let n = self.capabilities.len() as f64;
        if self.total_budget < MIN_FUNDING * n {
            return Err(ScenarioError::new(
                "total_budget",
                format!("cannot fund the minimum of {MIN_FUNDING} for {n} capabilities"),
            ));
        }
        let provided: f64 = self.capabilities.iter().map(|c| c.funding_provided).sum();
        if provided > self.total_budget + 1e-9 {
            return Err(ScenarioError::new(
                "capabilities",
                format!(
                    "initial funding {provided} exceeds total_budget {}",
                    self.total_budget
                ),
            ));
        }
        let max_gap = self.acceptance.max_weighted_mean_perf_gap;
        if !(max_gap.is_finite() && max_gap >= 0.0) {
            return Err(ScenarioError::new(
                "acceptance.max_weighted_mean_perf_gap",
                "must be a non-negative number",
            ));
        }
        if self.max_rounds < 1 {
            return Err(ScenarioError::new("max_rounds", "must be at least 1"));
        }
        if self.rule_file.trim().is_empty() {
            return Err(ScenarioError::new(
                "rule_file",
                "must be a path or \"default\"",
            ));
        }
        Ok(())
    }

    /// Loads the scenario's rule table; relative paths resolve against `base_dir`.
    pub fn load_rules(&self, base_dir: &Path) -> Result<FamTable, SimError> {
        if self.rule_file.eq_ignore_ascii_case(DEFAULT_RULE_FILE) {
            return Ok(FamTable::shipped_default().clone());
        }
        let path: PathBuf = base_dir.join(&self.rule_file);
        let text = std::fs::read_to_string(&path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        parse_rules(&text).map_err(|source| SimError::Rules {
            path: path.display().to_string(),
            source,
        })
    }

    /// Initial requests, before any system has answered.
    pub fn initial_requests(&self) -> Vec<CapabilityState> {
        self.capabilities
            .iter()
            .map(|c| CapabilityState {
                capability_id: c.capability_id.clone(),
                weight: c.weight,
                requested_performance: c.requested_performance,
                offered_performance: c.requested_performance,
                requested_deadline: c.requested_deadline,
                offered_deadline: c.requested_deadline,
                funding_provided: c.funding_provided,
                funding_requested_by_system: c.funding_provided,
            })
            .collect()
    }

    /// Same scenario restarted from the given requests.
    pub fn restarted_from(&self, states: &[CapabilityState]) -> Scenario {
        let capabilities = states
            .iter()
            .map(|s| CapabilitySpec {
                capability_id: s.capability_id.clone(),
                weight: s.weight,
                requested_performance: s.requested_performance,
                requested_deadline: s.requested_deadline,
                funding_provided: s.funding_provided,
            })
            .collect();
        Scenario {
            capabilities,
            ..self.clone()
        }
    }
}

/// Parses and validates scenario JSON. Unknown fields are rejected.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." || path == "?" {
            "scenario".to_string()
        } else {
            path
        };
        ScenarioError::new(path, e.into_inner().to_string())
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn scenario_to_json(scenario: &Scenario) -> String {
    let mut text = serde_json::to_string_pretty(scenario).expect("scenario serializes");
    text.push('\n');
    text
}

/// Deterministic linear cost/slip/greed responder.
pub fn system_respond(params: &SystemAgentParams, request: &CapabilityState) -> CapabilityState {
    let requested = request.requested_performance;
    // The epsilon keeps exact multiples (e.g. 1.8 / 0.3) from flooring one short.
    let affordable = (request.funding_provided / params.unit_cost + 1e-9)
        .floor()
        .clamp(0.0, f64::from(MAX_PERFORMANCE)) as u32;
    let offered = requested
        .min(affordable)
        .clamp(MIN_PERFORMANCE, MAX_PERFORMANCE);
    let shortfall = requested.saturating_sub(offered);
    let deadline = (u64::from(request.requested_deadline)
        + u64::from(params.slip_factor) * u64::from(shortfall))
    .clamp(u64::from(MIN_DEADLINE), u64::from(MAX_DEADLINE));
    CapabilityState {
        offered_performance: offered,
        offered_deadline: deadline as u32,
        funding_requested_by_system: (f64::from(requested) * params.unit_cost * params.greed)
            .clamp(MIN_FUNDING, MAX_FUNDING),
        ..request.clone()
    }
}

/// Weight-averaged performance gap.
pub fn weighted_mean_perf_gap(states: &[CapabilityState]) -> Result<f64, SimError> {
    let weight_sum: f64 = states.iter().map(|s| s.weight).sum();
    if weight_sum <= 0.0 {
        return Err(SimError::ZeroWeightSum);
    }
    let weighted: f64 = states
        .iter()
        .map(|s| s.weight * compute_gaps(s).performance)
        .sum();
    Ok(weighted / weight_sum)
}

/// True when the weighted mean performance gap and every deadline gap are
/// within the thresholds (inclusive).
pub fn accept(
    states: &[CapabilityState],
    thresholds: &AcceptanceThresholds,
) -> Result<bool, SimError> {
    let mean = weighted_mean_perf_gap(states)?;
    let deadlines_ok = states
        .iter()
        .all(|s| compute_gaps(s).deadline <= f64::from(thresholds.max_deadline_gap));
    Ok(mean <= thresholds.max_weighted_mean_perf_gap && deadlines_ok)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub system_id: String,
    pub state: CapabilityState,
    pub gaps: GapVector,
    pub perf_term: GapTerm,
    pub funding_term: GapTerm,
    pub deadline_term: GapTerm,
    pub weight_term: WeightTerm,
    pub raw_funding_adjustment: f64,
    pub raw_deadline_adjustment: f64,
    pub reconciled_funding_adjustment: f64,
    pub reconciled_deadline_adjustment: i32,
    pub fired_rules: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub round: u32,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Accepted,
    RoundLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: RunStatus,
    pub rounds: u32,
    pub final_weighted_mean_perf_gap: f64,
    pub budget_utilization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub traces: Vec<RoundTrace>,
    pub summary: Summary,
    /// States of the last traced round (requests plus system answers).
    pub final_states: Vec<CapabilityState>,
}

fn record(system_id: &str, state: &CapabilityState) -> TraceRecord {
    let gaps = compute_gaps(state);
    TraceRecord {
        system_id: system_id.to_string(),
        state: state.clone(),
        gaps,
        perf_term: classify_gap(GapKind::Performance, gaps.performance),
        funding_term: classify_gap(GapKind::Funding, gaps.funding),
        deadline_term: classify_gap(GapKind::Deadline, gaps.deadline),
        weight_term: classify_weight(state.weight),
        raw_funding_adjustment: 0.0,
        raw_deadline_adjustment: 0.0,
        reconciled_funding_adjustment: 0.0,
        reconciled_deadline_adjustment: 0,
        fired_rules: 0,
    }
}

/// Runs the negotiation loop to acceptance or the round limit.
pub fn run(scenario: &Scenario, table: &FamTable) -> Result<RunOutcome, SimError> {
    scenario.validate()?;
    let mut requests = scenario.initial_requests();
    let mut traces = Vec::new();
    let mut status = RunStatus::RoundLimit;
    let mut final_states = Vec::new();

    for round in 1..=scenario.max_rounds {
        let states: Vec<CapabilityState> = scenario
            .systems
            .iter()
            .zip(&requests)
            .map(|(params, request)| system_respond(params, request))
            .collect();
        let mut records: Vec<TraceRecord> = scenario
            .systems
            .iter()
            .zip(&states)
            .map(|(params, state)| record(&params.system_id, state))
            .collect();

        if accept(&states, &scenario.acceptance)? {
            traces.push(RoundTrace { round, records });
            final_states = states;
            status = RunStatus::Accepted;
            break;
        }

        let negotiation = |source| SimError::Negotiation { round, source };
        let raw = plan_adjustments(&states, table).map_err(negotiation)?;
        let plan = reconcile_budget(&states, &raw, scenario.total_budget).map_err(negotiation)?;
        for (rec, adj) in records.iter_mut().zip(&plan.entries) {
            rec.raw_funding_adjustment = adj.raw_funding_adjustment;
            rec.raw_deadline_adjustment = adj.raw_deadline_adjustment;
            rec.reconciled_funding_adjustment = adj.reconciled_funding_adjustment;
            rec.reconciled_deadline_adjustment = adj.reconciled_deadline_adjustment;
            rec.fired_rules = adj.fired_rules;
        }
        traces.push(RoundTrace { round, records });
        requests = states
            .iter()
            .zip(&plan.entries)
            .map(|(s, a)| next_request(s, a))
            .collect();
        final_states = states;
    }

    let funded: f64 = final_states.iter().map(|s| s.funding_provided).sum();
    let summary = Summary {
        status,
        rounds: traces.len() as u32,
        final_weighted_mean_perf_gap: weighted_mean_perf_gap(&final_states)?,
        budget_utilization: funded / scenario.total_budget,
    };
    Ok(RunOutcome {
        traces,
        summary,
        final_states,
    })
}

fn real(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// Writes the per-round trace as CSV, one row per system per round.
pub fn write_trace<W: io::Write>(traces: &[RoundTrace], destination: W) -> io::Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(destination);
    writer.write_record(TRACE_HEADER.split(','))?;
    for trace in traces {
        for r in &trace.records {
            let s = &r.state;
            writer.write_record([
                trace.round.to_string(),
                r.system_id.clone(),
                real(s.weight),
                s.requested_performance.to_string(),
                s.offered_performance.to_string(),
                real(r.gaps.performance),
                r.perf_term.to_string(),
                real(s.funding_provided),
                real(s.funding_requested_by_system),
                real(r.gaps.funding),
                r.funding_term.to_string(),
                s.requested_deadline.to_string(),
                s.offered_deadline.to_string(),
                real(r.gaps.deadline),
                r.deadline_term.to_string(),
                r.weight_term.to_string(),
                real(r.raw_funding_adjustment),
                real(r.raw_deadline_adjustment),
                real(r.reconciled_funding_adjustment),
                r.reconciled_deadline_adjustment.to_string(),
                r.fired_rules.to_string(),
            ])?;
        }
    }
    writer.flush()
}

pub fn summary_to_json(summary: &Summary) -> String {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    text
}
