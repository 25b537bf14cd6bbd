//! Per-step trace rows and per-phase summaries emitted by both solvers.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::instance::MarketInstance;
use crate::rational::{self, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Start of a Δ-phase; `phi_before` and `phi_after` both hold Φ.
    Phase,
    Refund,
    AugmentBuyer,
    AugmentGood,
    /// One augmentation into a deficit good right after a compressed restart.
    Repair,
    Halve,
    Restart,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartBranch {
    Delayed,
    Compressed,
    /// The computed parameter was not positive; the solver halved instead.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub phase: usize,
    #[serde(with = "rational::serde_str")]
    pub delta: Rational,
    pub kind: StepKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_before: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_after: Option<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub abundant_added: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<RestartBranch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_delta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surpluses: Option<Vec<String>>,
}

impl TraceRow {
    pub fn new(phase: usize, delta: &Rational, kind: StepKind) -> Self {
        Self {
            phase,
            delta: delta.clone(),
            kind,
            subject: None,
            phi_before: None,
            phi_after: None,
            abundant_added: Vec::new(),
            branch: None,
            new_delta: None,
            threshold: None,
            surpluses: None,
        }
    }

    pub fn subject(mut self, subject: impl Into<String>) -> Self {
        self.subject = Some(subject.into());
        self
    }

    pub fn phi(mut self, before: &BigInt, after: &BigInt) -> Self {
        self.phi_before = Some(clamp(before));
        self.phi_after = Some(clamp(after));
        self
    }

    /// Whether this row is one iteration of a phase's inner loop.
    pub fn is_inner_step(&self) -> bool {
        matches!(
            self.kind,
            StepKind::Refund | StepKind::AugmentBuyer | StepKind::AugmentGood
        )
    }
}

pub(crate) fn clamp(v: &BigInt) -> i64 {
    v.to_i64()
        .unwrap_or(if v.sign() == num_bigint::Sign::Minus {
            i64::MIN
        } else {
            i64::MAX
        })
}

/// Measurements from one compressed restart.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RestartCheck {
    pub old_delta: Rational,
    pub new_delta: Rational,
    /// `s(p', r', H)` for every component, before any post-restart commitment.
    pub surpluses: Vec<Rational>,
    /// `(s(p, r, H), s(p^H, r^H, H))` for every component that ran a price raise.
    pub root_surpluses: Vec<(Rational, Rational)>,
    /// Smallest restart spending over previously abundant edges.
    pub min_old_abundant: Option<Rational>,
    /// Outer iterations of each price raise made during this call.
    pub special_price_iterations: Vec<usize>,
    pub repairs: usize,
    pub unrepaired_deficits: usize,
    /// Buyers with `α <= 1` whose whole multiples of the new Δ were refunded
    /// right after the restart.
    pub batched_refunds: usize,
}

/// What happened in one Δ-phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseSummary {
    pub index: usize,
    pub delta: Rational,
    /// Φ after any halving or restart, before the inner loop.
    pub phi_start: i64,
    pub iterations: usize,
    /// Largest `|x_end - x_start|` over edges within the inner loop.
    pub max_drift: Rational,
    /// Edges with `x >= 3nΔ` at phase start.
    pub abundant_start: Vec<usize>,
    /// Abundant edges at phase start that had never been abundant before.
    pub new_abundant: Vec<usize>,
    /// Singleton buyers whose bang-per-buck dropped to at most one for the
    /// first time during this phase (strong solver only).
    pub new_satisfied_singletons: Vec<usize>,
    pub branch: Option<RestartBranch>,
    pub restart: Option<RestartCheck>,
    /// Special-price calls made in a delayed or compressed branch.
    pub special_price_iterations: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub phases: usize,
    pub augmentations: usize,
    pub refund_steps: usize,
    pub restarts: usize,
    pub delayed_discoveries: usize,
    pub degenerate_restarts: usize,
    pub abundant_edges: usize,
    pub progress_events: usize,
    pub special_price_calls: usize,
    pub special_price_max_iterations: usize,
    /// New equality edges from an inactive buyer to an active good observed
    /// during price raising. Expected to stay zero.
    pub reverse_direction_edges: usize,
    /// Non-abundant equality edges from an inactive buyer to an active good
    /// that stopped being equality edges during price raising.
    pub lost_equality_edges: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub phases: Vec<PhaseSummary>,
    pub counters: Counters,
}

impl RunTrace {
    /// Rows as newline-delimited JSON.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row).expect("rows serialize"));
            out.push('\n');
        }
        out
    }
}

pub(crate) fn edge_names(inst: &MarketInstance, edges: &[usize]) -> Vec<(String, String)> {
    edges
        .iter()
        .map(|&k| {
            let e = inst.edge(k);
            (
                inst.buyer_id(e.buyer).to_string(),
                inst.good_id(e.good).to_string(),
            )
        })
        .collect()
}
