//! The committed-refund algorithm. Refunds in the working state are commitments
//! made at buyers with bang-per-buck one; the run stops as soon as the basic
//! solution of the abundant forest is an equilibrium for the remaining
//! budgets.

mod auxiliary;
mod restart;
mod special_price;

pub use auxiliary::AuxNetwork;
pub use restart::{
    get_allocations, get_parameter, get_prices, make_fertile, Parameter, RestartOutcome,
    RestartPrices,
};
pub use special_price::{special_price, SpecialPriceRun, SpecialPriceStop};

#[cfg(test)]
use num_traits::Zero;
use num_traits::{One, Signed};

use crate::basic_solution::{basic_solution, SupportForest};
use crate::error::{invariant, Result, SolverError};
use crate::graph::{abundant_mask, alphas, bang_per_buck, components_of, Component, Components};
use crate::instance::MarketInstance;
use crate::oracle::{check_equilibrium, Equilibrium};
use crate::par::Execution;
use crate::rational::{self, int, Rational};
use crate::state::MarketState;
use crate::trace::{RestartBranch, RunTrace, StepKind, TraceRow};
use crate::weak::{
    ensure_generic, halve_and_repair, initialize, potential, run_inner_loop, PhaseTracker,
};

/// `s(p, r, H)`.
pub fn surplus(inst: &MarketInstance, market: &MarketState, comp: &Component) -> Rational {
    comp.surplus(inst, &market.prices, &market.refunds)
}

/// Commits `amount` of a critical buyer's cash as refund.
pub fn commit_refund(
    inst: &MarketInstance,
    market: &mut MarketState,
    buyer: usize,
    amount: &Rational,
) -> Result<()> {
    invariant!(
        bang_per_buck(inst, &market.prices, buyer) == Rational::one(),
        "commitment at non-critical buyer {}",
        inst.buyer_id(buyer)
    );
    invariant!(
        !amount.is_negative() && *amount <= market.cash(inst, buyer),
        "commitment out of range at buyer {}",
        inst.buyer_id(buyer)
    );
    market.refunds[buyer] += amount;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FertileReason {
    /// A lone buyer with `α > 1` and cash above `Δ/(3n²)`.
    SingletonBuyer,
    /// Surplus at most `-Δ/(3n²)`.
    NegativeSurplus,
}

/// Fertile Δ-components at the current spending.
pub fn fertile_components(
    inst: &MarketInstance,
    market: &MarketState,
    delta: &Rational,
) -> Vec<(Component, FertileReason)> {
    let n = inst.num_nodes();
    let bound = delta / int(3 * (n * n) as i64);
    let comps = components_of(inst, &abundant_mask(inst, market, delta));
    let one = Rational::one();
    let mut out = Vec::new();
    for comp in comps.list {
        if let Some(i) = comp.singleton_buyer() {
            if bang_per_buck(inst, &market.prices, i) > one && market.cash(inst, i) > bound {
                out.push((comp, FertileReason::SingletonBuyer));
                continue;
            }
        }
        if surplus(inst, market, &comp) <= -&bound {
            out.push((comp, FertileReason::NegativeSurplus));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StrongOptions {
    pub execution: Execution,
    /// Keep the state at every phase end.
    pub collect_snapshots: bool,
}

/// State at the end of a phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub phase: usize,
    pub delta: Rational,
    pub market: MarketState,
}

impl Snapshot {
    pub fn aux_network(&self, inst: &MarketInstance) -> AuxNetwork {
        AuxNetwork::new(inst, &abundant_mask(inst, &self.market, &self.delta))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrongRun {
    pub equilibrium: Equilibrium,
    pub trace: RunTrace,
    pub final_delta: Rational,
    /// Refunds committed before the final basic solution.
    pub committed: Vec<Rational>,
    /// Phase index of every progress event, in order.
    pub progress_phases: Vec<usize>,
    pub phase_budget: usize,
    pub snapshots: Vec<Snapshot>,
}

impl StrongRun {
    /// Longest run of phases without a progress event, counted from the
    /// first phase.
    pub fn max_progress_gap(&self) -> usize {
        let mut last = 0;
        let mut gap = 0;
        for &p in &self.progress_phases {
            gap = gap.max(p - last);
            last = p;
        }
        gap
    }
}

/// `20 n (5 log₂ n + 10)`.
pub fn phase_budget(n: usize) -> usize {
    let log = (n as f64).log2().ceil() as usize;
    20 * n * (5 * log + 10)
}

fn compressed_solution(
    inst: &MarketInstance,
    market: &MarketState,
    delta: &Rational,
) -> Option<MarketState> {
    let budgets: Vec<Rational> = (0..inst.num_buyers())
        .map(|i| inst.budget(i) - &market.refunds[i])
        .collect();
    let support = SupportForest::from_mask(inst, &abundant_mask(inst, market, delta)).ok()?;
    let solution = basic_solution(inst, &support, &budgets).ok()?;
    check_equilibrium(inst, &budgets, &solution)
        .passed()
        .then_some(solution)
}

pub fn run_strong(inst: &MarketInstance, opts: &StrongOptions) -> Result<StrongRun> {
    let n = inst.num_nodes();
    let budget = phase_budget(n);
    let mut st = initialize(inst);
    let mut threshold = st.delta.clone();
    let mut trace = RunTrace::default();
    let mut tracker = PhaseTracker::new(inst);
    let mut satisfied = vec![false; inst.num_buyers()];
    let mut progress_phases = Vec::new();
    let mut snapshots = Vec::new();
    let one = Rational::one();

    for phase in 0.. {
        if let Some(solution) = compressed_solution(inst, &st.market, &st.delta) {
            let mut lifted = solution;
            for (r, c) in lifted.refunds.iter_mut().zip(&st.market.refunds) {
                *r += c;
            }
            let budgets = inst.budgets_vec();
            let equilibrium = Equilibrium::certify(inst, &budgets, lifted);
            invariant!(
                equilibrium.certificate.passed(),
                "lifted compressed equilibrium fails on the original budgets"
            );
            trace
                .rows
                .push(TraceRow::new(phase, &st.delta, StepKind::Terminate));
            return Ok(StrongRun {
                equilibrium,
                trace,
                final_delta: st.delta.clone(),
                committed: st.market.refunds.clone(),
                progress_phases,
                phase_budget: budget,
                snapshots,
            });
        }
        if phase >= budget {
            return Err(SolverError::WatchdogExceeded(budget));
        }

        let start = tracker.start(inst, &st, phase, &mut trace);
        for _ in &start.new_abundant {
            progress_phases.push(phase);
        }
        trace.counters.progress_events += start.new_abundant.len();
        let comps: Components = components_of(inst, &abundant_mask(inst, &st.market, &st.delta));
        let alpha = alphas(inst, &st.market.prices);
        let mut newly_satisfied = Vec::new();
        for comp in &comps.list {
            if let Some(i) = comp.singleton_buyer() {
                if alpha[i] <= one && !satisfied[i] {
                    satisfied[i] = true;
                    newly_satisfied.push(i);
                    progress_phases.push(phase);
                    trace.counters.progress_events += 1;
                }
            }
        }

        let iterations = run_inner_loop(inst, &mut st, phase, &mut trace)?;
        let mut summary = tracker.finish(start, &st, phase, iterations);
        summary.new_satisfied_singletons = newly_satisfied;
        trace.counters.phases += 1;
        ensure_generic(inst, &st.market.prices)?;
        if opts.collect_snapshots {
            snapshots.push(Snapshot {
                phase,
                delta: st.delta.clone(),
                market: st.market.clone(),
            });
        }

        let fertile = !fertile_components(inst, &st.market, &st.delta).is_empty();
        if !fertile && st.delta <= threshold {
            let out = make_fertile(
                inst,
                &mut st,
                &mut threshold,
                opts.execution,
                phase,
                &mut trace,
            )?;
            summary.branch = Some(out.branch);
            summary.special_price_iterations = out.special_price_iterations;
            summary.restart = out.check;
            if out.branch == RestartBranch::Compressed {
                ensure_generic(inst, &st.market.prices)?;
            }
        } else {
            let before = potential(inst, &st);
            let repaired = halve_and_repair(inst, &mut st)?;
            let after = potential(inst, &st);
            trace.rows.push(
                TraceRow::new(phase, &st.delta, StepKind::Halve)
                    .subject(format!("{} repaired", repaired.len()))
                    .phi(&before, &after),
            );
        }
        trace.phases.push(summary);
    }
    unreachable!()
}

/// Formats a list of rationals for diagnostics.
pub fn format_all(values: &[Rational]) -> Vec<String> {
    values.iter().map(rational::format).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::load_instance;
    use crate::rational::frac;

    fn single(budget: i64) -> MarketInstance {
        load_instance(&format!(
            r#"{{"buyers":[{{"id":"b1","budget":{budget}}}],"goods":["g1"],"utilities":[["b1","g1",2]]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn surplus_examples() {
        let inst = single(3);
        let market = MarketState::new(&inst, vec![int(1)]);
        let comps = components_of(&inst, &[false]);
        assert_eq!(surplus(&inst, &market, &comps.list[0]), int(3));
        assert_eq!(surplus(&inst, &market, &comps.list[1]), int(-1));
        let joined = components_of(&inst, &[true]);
        assert_eq!(surplus(&inst, &market, &joined.list[0]), int(2));
    }

    #[test]
    fn fertility_rules() {
        let inst = single(3);
        // n = 2, Δ = 12: bound Δ/(3n²) = 1.
        let delta = int(12);
        let market = MarketState::new(&inst, vec![int(1)]);
        let reasons: Vec<FertileReason> = fertile_components(&inst, &market, &delta)
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        assert_eq!(
            reasons,
            vec![
                FertileReason::SingletonBuyer,
                FertileReason::NegativeSurplus
            ]
        );
        // α = 1 is not enough for the singleton rule.
        let market = MarketState::new(&inst, vec![int(2)]);
        let reasons: Vec<FertileReason> = fertile_components(&inst, &market, &delta)
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        assert_eq!(reasons, vec![FertileReason::NegativeSurplus]);
    }

    #[test]
    fn commitment_bounds() {
        let inst = single(3);
        let mut market = MarketState::new(&inst, vec![int(2)]);
        market.spending[0] = int(2);
        commit_refund(&inst, &mut market, 0, &int(0)).unwrap();
        assert_eq!(market.refunds, vec![int(0)]);
        commit_refund(&inst, &mut market, 0, &int(1)).unwrap();
        assert!(market.cash(&inst, 0).is_zero());
        assert!(commit_refund(&inst, &mut market, 0, &frac(1, 2)).is_err());
        let mut off = MarketState::new(&inst, vec![int(1)]);
        assert!(commit_refund(&inst, &mut off, 0, &int(1)).is_err());
    }

    #[test]
    fn tiny_instance_matches_forced_answer() {
        let inst = single(3);
        let run = run_strong(&inst, &StrongOptions::default()).unwrap();
        let s = &run.equilibrium.state;
        assert_eq!(s.prices, vec![int(2)]);
        assert_eq!(s.spending, vec![int(2)]);
        assert_eq!(s.refunds, vec![int(1)]);
        assert!(run.equilibrium.certificate.passed());
    }
}
