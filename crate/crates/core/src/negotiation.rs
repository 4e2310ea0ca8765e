//! SoS-side negotiation: gaps from system responses, FAM inference per
//! capability, and reconciliation of the raw funding moves against a fixed
//! total budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fam::{infer, FamError, FamTable, InferenceResult};

pub const MIN_PERFORMANCE: u32 = 1;
pub const MAX_PERFORMANCE: u32 = 10;
pub const MIN_DEADLINE: u32 = 1;
pub const MAX_DEADLINE: u32 = 100;
pub const MIN_FUNDING: f64 = 1.0;
pub const MAX_FUNDING: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NegotiationError {
    #[error("capability {capability_id}: {source}")]
    Inference {
        capability_id: String,
        #[source]
        source: FamError,
    },
    #[error(
        "budget {budget} cannot fund the minimum of {MIN_FUNDING} for {capabilities} capabilities"
    )]
    InfeasibleBudget { budget: f64, capabilities: usize },
    #[error("funding already provided ({provided}) exceeds the budget ({budget})")]
    BudgetOverrun { provided: f64, budget: f64 },
    #[error("no capabilities to negotiate")]
    NoCapabilities,
}

/// One capability's position in the current round: the SoS request and the
/// system's response to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityState {
    pub capability_id: String,
    pub weight: f64,
    pub requested_performance: u32,
    pub offered_performance: u32,
    pub requested_deadline: u32,
    pub offered_deadline: u32,
    pub funding_provided: f64,
    pub funding_requested_by_system: f64,
}

/// Non-negative shortfalls; a positive gap means the system delivers less,
/// later, or asks for more money than the SoS position.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GapVector {
    pub performance: f64,
    pub funding: f64,
    pub deadline: f64,
}

pub fn compute_gaps(state: &CapabilityState) -> GapVector {
    GapVector {
        performance: (f64::from(state.requested_performance)
            - f64::from(state.offered_performance))
        .max(0.0),
        funding: (state.funding_requested_by_system - state.funding_provided).max(0.0),
        deadline: (f64::from(state.offered_deadline) - f64::from(state.requested_deadline))
            .max(0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityAdjustment {
    pub capability_id: String,
    pub gaps: GapVector,
    pub fired_rules: usize,
    pub raw_funding_adjustment: f64,
    pub raw_deadline_adjustment: f64,
    pub reconciled_funding_adjustment: f64,
    pub reconciled_deadline_adjustment: i32,
}

impl CapabilityAdjustment {
    /// Unreconciled entry carrying an inference result's crisp outputs.
    pub fn raw(capability_id: &str, gaps: GapVector, result: &InferenceResult) -> Self {
        Self {
            capability_id: capability_id.to_string(),
            gaps,
            fired_rules: result.fired.len(),
            raw_funding_adjustment: result.funding_adjustment,
            raw_deadline_adjustment: result.deadline_adjustment,
            reconciled_funding_adjustment: 0.0,
            reconciled_deadline_adjustment: 0,
        }
    }
}

/// Per-capability adjustments, in the same order as the input states.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdjustmentPlan {
    pub entries: Vec<CapabilityAdjustment>,
}

/// Runs inference for every capability. Reconciled fields are left at zero.
pub fn plan_adjustments(
    states: &[CapabilityState],
    table: &FamTable,
) -> Result<AdjustmentPlan, NegotiationError> {
    if states.is_empty() {
        return Err(NegotiationError::NoCapabilities);
    }
    let entries = states
        .iter()
        .map(|state| {
            let gaps = compute_gaps(state);
            let result = infer(
                table,
                gaps.performance,
                state.weight,
                gaps.funding,
                gaps.deadline,
            )
            .map_err(|source| NegotiationError::Inference {
                capability_id: state.capability_id.clone(),
                source,
            })?;
            Ok(CapabilityAdjustment::raw(
                &state.capability_id,
                gaps,
                &result,
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AdjustmentPlan { entries })
}

/// Makes the raw plan affordable.
///
/// Decreases are applied first (never below the funding floor) and release
/// money into a pool together with any unspent budget. Increases are paid in
/// full when the pool covers them and scaled down proportionally otherwise.
/// Deadline moves are rounded to whole cycles and kept within range.
pub fn reconcile_budget(
    states: &[CapabilityState],
    plan: &AdjustmentPlan,
    total_budget: f64,
) -> Result<AdjustmentPlan, NegotiationError> {
    assert_eq!(
        states.len(),
        plan.entries.len(),
        "one plan entry per capability"
    );
    if states.is_empty() {
        return Err(NegotiationError::NoCapabilities);
    }
    if total_budget < MIN_FUNDING * states.len() as f64 {
        return Err(NegotiationError::InfeasibleBudget {
            budget: total_budget,
            capabilities: states.len(),
        });
    }
    let provided: f64 = states.iter().map(|s| s.funding_provided).sum();
    if provided > total_budget + 1e-9 {
        return Err(NegotiationError::BudgetOverrun {
            provided,
            budget: total_budget,
        });
    }

    let mut released = 0.0;
    let mut requested_increase = 0.0;
    for (state, entry) in states.iter().zip(&plan.entries) {
        let raw = entry.raw_funding_adjustment;
        if raw < 0.0 {
            released += -raw.max(MIN_FUNDING - state.funding_provided).min(0.0);
        } else {
            requested_increase += raw;
        }
    }
    let pool = (total_budget - provided).max(0.0) + released;
    let scale = if requested_increase <= pool || requested_increase == 0.0 {
        1.0
    } else {
        pool / requested_increase
    };

    let entries = states
        .iter()
        .zip(&plan.entries)
        .map(|(state, entry)| {
            let raw = entry.raw_funding_adjustment;
            let applied = if raw < 0.0 {
                raw.max(MIN_FUNDING - state.funding_provided).min(0.0)
            } else {
                raw * scale
            };
            let funding = (state.funding_provided + applied).clamp(MIN_FUNDING, MAX_FUNDING);

            let step = entry.raw_deadline_adjustment.round() as i64;
            let deadline = (i64::from(state.requested_deadline) + step)
                .clamp(i64::from(MIN_DEADLINE), i64::from(MAX_DEADLINE));

            CapabilityAdjustment {
                reconciled_funding_adjustment: funding - state.funding_provided,
                reconciled_deadline_adjustment: (deadline - i64::from(state.requested_deadline))
                    as i32,
                ..entry.clone()
            }
        })
        .collect();
    Ok(AdjustmentPlan { entries })
}

/// Applies a reconciled adjustment to produce the next round's request.
/// Requested performance is never changed.
pub fn next_request(state: &CapabilityState, adjustment: &CapabilityAdjustment) -> CapabilityState {
    let deadline = (i64::from(state.requested_deadline)
        + i64::from(adjustment.reconciled_deadline_adjustment))
    .clamp(i64::from(MIN_DEADLINE), i64::from(MAX_DEADLINE));
    CapabilityState {
        funding_provided: (state.funding_provided + adjustment.reconciled_funding_adjustment)
            .clamp(MIN_FUNDING, MAX_FUNDING),
        requested_deadline: deadline as u32,
        ..state.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fam::generate_default_rules;
    use crate::fuzzy::{classify_gap, GapKind, GapTerm};

    fn state(id: &str, weight: f64, funding: f64) -> CapabilityState {
        CapabilityState {
            capability_id: id.into(),
            weight,
            requested_performance: 8,
            offered_performance: 8,
            requested_deadline: 10,
            offered_deadline: 10,
            funding_provided: funding,
            funding_requested_by_system: funding,
        }
    }

    fn raw_plan(states: &[CapabilityState], funding: &[f64], deadline: &[f64]) -> AdjustmentPlan {
        AdjustmentPlan {
            entries: states
                .iter()
                .zip(funding.iter().zip(deadline))
                .map(|(s, (&f, &d))| CapabilityAdjustment {
                    capability_id: s.capability_id.clone(),
                    gaps: compute_gaps(s),
                    fired_rules: 1,
                    raw_funding_adjustment: f,
                    raw_deadline_adjustment: d,
                    reconciled_funding_adjustment: 0.0,
                    reconciled_deadline_adjustment: 0,
                })
                .collect(),
        }
    }

    fn ten_at_three() -> Vec<CapabilityState> {
        (0..10).map(|i| state(&format!("C{i}"), 0.5, 3.0)).collect()
    }

    #[test]
    fn gap_examples() {
        let mut s = state("C1", 0.5, 3.0);
        s.requested_performance = 9;
        s.offered_performance = 4;
        s.funding_requested_by_system = 6.5;
        let g = compute_gaps(&s);
        assert_eq!(g.performance, 5.0);
        assert_eq!(
            classify_gap(GapKind::Performance, g.performance),
            GapTerm::High
        );
        assert_eq!(g.funding, 3.5);
        assert_eq!(g.deadline, 0.0);

        let fixed = compute_gaps(&state("C2", 0.5, 3.0));
        assert_eq!(fixed, GapVector::default());
        for kind in GapKind::ALL {
            assert_eq!(classify_gap(kind, 0.0), GapTerm::None);
        }
    }

    #[test]
    fn over_delivery_clamps_to_zero() {
        let mut s = state("C1", 0.5, 5.0);
        s.offered_performance = 10;
        s.offered_deadline = 3;
        s.funding_requested_by_system = 2.0;
        assert_eq!(compute_gaps(&s), GapVector::default());
    }

    #[test]
    fn plan_signs_and_determinism() {
        let table = generate_default_rules();
        let plan = plan_adjustments(&[state("C1", 0.0, 3.0)], &table).unwrap();
        assert!(plan.entries[0].raw_funding_adjustment < 0.0);
        assert!(plan.entries[0].raw_deadline_adjustment.abs() < 1e-3);

        let mut extreme = state("C1", 1.0, 3.0);
        extreme.requested_performance = 10;
        extreme.offered_performance = 1;
        let plan = plan_adjustments(&[extreme], &table).unwrap();
        assert!(plan.entries[0].raw_funding_adjustment > 0.0);
        assert!(plan.entries[0].raw_deadline_adjustment.abs() < 1e-3);

        let twins = [state("A", 0.4, 3.0), state("B", 0.4, 3.0)];
        let plan = plan_adjustments(&twins, &table).unwrap();
        assert_eq!(
            plan.entries[0].raw_funding_adjustment,
            plan.entries[1].raw_funding_adjustment
        );
        assert_eq!(
            plan.entries[0].raw_deadline_adjustment,
            plan.entries[1].raw_deadline_adjustment
        );

        assert_eq!(
            plan_adjustments(&[], &table),
            Err(NegotiationError::NoCapabilities)
        );
    }

    #[test]
    fn released_funds_cover_increase() {
        let states = ten_at_three();
        let mut funding = vec![0.0; 10];
        funding[0] = 1.0;
        funding[1] = -1.0;
        let plan =
            reconcile_budget(&states, &raw_plan(&states, &funding, &[0.0; 10]), 30.0).unwrap();
        assert_eq!(plan.entries[0].reconciled_funding_adjustment, 1.0);
        assert_eq!(plan.entries[1].reconciled_funding_adjustment, -1.0);
        assert!(plan.entries[2..]
            .iter()
            .all(|e| e.reconciled_funding_adjustment == 0.0));
    }

    #[test]
    fn zero_pool_blocks_increases() {
        let states = ten_at_three();
        let plan =
            reconcile_budget(&states, &raw_plan(&states, &[1.0; 10], &[0.0; 10]), 30.0).unwrap();
        assert!(plan
            .entries
            .iter()
            .all(|e| e.reconciled_funding_adjustment == 0.0));
    }

    #[test]
    fn partial_pool_scales_increases() {
        let states = ten_at_three();
        let mut funding = vec![0.0; 10];
        funding[0] = 2.0;
        funding[1] = 1.0;
        // 1.5 spare budget against 3.0 requested
        let plan =
            reconcile_budget(&states, &raw_plan(&states, &funding, &[0.0; 10]), 31.5).unwrap();
        assert!((plan.entries[0].reconciled_funding_adjustment - 1.0).abs() < 1e-12);
        assert!((plan.entries[1].reconciled_funding_adjustment - 0.5).abs() < 1e-12);
    }

    #[test]
    fn decreases_respect_floor() {
        let states = vec![state("A", 0.5, 1.5), state("B", 0.5, 3.0)];
        let plan =
            reconcile_budget(&states, &raw_plan(&states, &[-2.0, 2.0], &[0.0, 0.0]), 4.5).unwrap();
        assert_eq!(plan.entries[0].reconciled_funding_adjustment, -0.5);
        assert_eq!(plan.entries[1].reconciled_funding_adjustment, 0.5);
    }

    #[test]
    fn deadline_rounding_and_clamp() {
        let mut s = state("A", 0.5, 3.0);
        s.requested_deadline = 99;
        let states = vec![s.clone()];
        let plan = reconcile_budget(&states, &raw_plan(&states, &[0.0], &[1.4]), 10.0).unwrap();
        assert_eq!(plan.entries[0].reconciled_deadline_adjustment, 1);
        assert_eq!(next_request(&s, &plan.entries[0]).requested_deadline, 100);

        let plan = reconcile_budget(&states, &raw_plan(&states, &[0.0], &[7.6]), 10.0).unwrap();
        assert_eq!(plan.entries[0].reconciled_deadline_adjustment, 1);

        let plan = reconcile_budget(&states, &raw_plan(&states, &[0.0], &[-2.5]), 10.0).unwrap();
        assert_eq!(plan.entries[0].reconciled_deadline_adjustment, -3);

        s.requested_deadline = 2;
        let states = vec![s];
        let plan = reconcile_budget(&states, &raw_plan(&states, &[0.0], &[-9.0]), 10.0).unwrap();
        assert_eq!(plan.entries[0].reconciled_deadline_adjustment, -1);
    }

    #[test]
    fn budget_errors() {
        let states = ten_at_three();
        let plan = raw_plan(&states, &[0.0; 10], &[0.0; 10]);
        assert!(matches!(
            reconcile_budget(&states, &plan, 9.0),
            Err(NegotiationError::InfeasibleBudget {
                capabilities: 10,
                ..
            })
        ));
        assert!(matches!(
            reconcile_budget(&states, &plan, 29.0),
            Err(NegotiationError::BudgetOverrun { .. })
        ));
    }

    #[test]
    fn next_request_examples() {
        let adj = |f: f64, d: i32| CapabilityAdjustment {
            capability_id: "A".into(),
            gaps: GapVector::default(),
            fired_rules: 1,
            raw_funding_adjustment: f,
            raw_deadline_adjustment: f64::from(d),
            reconciled_funding_adjustment: f,
            reconciled_deadline_adjustment: d,
        };
        let mut s = state("A", 0.5, 3.0);
        s.requested_deadline = 20;
        let next = next_request(&s, &adj(1.667, 0));
        assert!((next.funding_provided - 4.667).abs() < 1e-12);
        assert_eq!(next.requested_performance, s.requested_performance);
        assert_eq!(next_request(&s, &adj(0.0, 20)).requested_deadline, 40);
        s.funding_provided = 9.5;
        assert_eq!(next_request(&s, &adj(1.667, 0)).funding_provided, 10.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn scenario() -> impl Strategy<Value = (Vec<CapabilityState>, Vec<f64>, Vec<f64>, f64)> {
            (1usize..12).prop_flat_map(|n| {
                (
                    proptest::collection::vec((0.0f64..1.0, 1.0f64..10.0, 1u32..=100), n),
                    proptest::collection::vec(-2.0f64..2.0, n),
                    proptest::collection::vec(-20.0f64..40.0, n),
                    0.0f64..20.0,
                )
                    .prop_map(|(caps, funding, deadline, slack)| {
                        let states: Vec<CapabilityState> = caps
                            .iter()
                            .enumerate()
                            .map(|(i, &(w, f, d))| {
                                let mut s = state(&format!("C{i}"), w, f);
                                s.requested_deadline = d;
                                s
                            })
                            .collect();
                        let budget = states.iter().map(|s| s.funding_provided).sum::<f64>() + slack;
                        (states, funding, deadline, budget)
                    })
            })
        }

        proptest! {
            #[test]
            fn reconciliation_conserves_budget((states, funding, deadline, budget) in scenario()) {
                let plan = reconcile_budget(&states, &raw_plan(&states, &funding, &deadline), budget).unwrap();
                let mut total = 0.0;
                for (s, e) in states.iter().zip(&plan.entries) {
                    let next = next_request(s, e);
                    prop_assert!((MIN_FUNDING..=MAX_FUNDING).contains(&next.funding_provided));
                    prop_assert!((MIN_DEADLINE..=MAX_DEADLINE).contains(&next.requested_deadline));
                    // increases never exceed what inference asked for
                    prop_assert!(e.reconciled_funding_adjustment <= e.raw_funding_adjustment.max(0.0) + 1e-12);
                    total += next.funding_provided;
                }
                prop_assert!(total <= budget + 1e-9, "{} > {}", total, budget);
            }
        }
    }
}
