//! The Δ-scaling algorithm: price-and-augment with critical buyers, refund
//! steps, halving with repair, and support recovery at a small enough scale.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::basic_solution::{basic_solution, recover_support};
use crate::error::{invariant, Result, SolverError};
use crate::graph::{
    abundant_mask, active_set, alphas, residual_network, ActiveSet, Arc, Node, ResidualNetwork,
};
use crate::instance::{compute_stats, MarketInstance};
use crate::oracle::{check_equilibrium, check_genericity, Equilibrium};
use crate::rational::{self, int, Rational};
use crate::state::MarketState;
use crate::trace::{clamp, edge_names, PhaseSummary, RunTrace, StepKind, TraceRow};

/// Working state of a scaling run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalingState {
    pub market: MarketState,
    pub delta: Rational,
    /// `p^0`, frozen at initialization.
    pub initial_prices: Vec<Rational>,
    /// Edges whose spending need not be a multiple of Δ (carried over a
    /// compressed restart).
    pub exempt: Vec<bool>,
    /// Goods allowed a negative backorder down to the stored floor until their
    /// first augmentation (set by a compressed restart).
    pub deficit_floor: Vec<Option<Rational>>,
}

impl ScalingState {
    pub fn new(inst: &MarketInstance, market: MarketState, delta: Rational) -> Self {
        Self {
            initial_prices: market.prices.clone(),
            market,
            delta,
            exempt: vec![false; inst.num_edges()],
            deficit_floor: vec![None; inst.num_goods()],
        }
    }

    pub(crate) fn clear_repaired_deficits(&mut self, inst: &MarketInstance) {
        for j in 0..inst.num_goods() {
            if self.deficit_floor[j].is_some() && !self.market.backorder(inst, j).is_negative() {
                self.deficit_floor[j] = None;
            }
        }
    }
}

/// `Δ_0 = e_max`, `p^0_j = max_i U_ij min(e_i, U_iG) / (n U_iG)`, `x = 0`,
/// `r = 0`.
///
/// Capping `e_i` at `U_iG` keeps `p^0` below every equilibrium price: a good
/// bought by a buyer with `α_i <= 1` costs at least `U_ij`.
pub fn initialize(inst: &MarketInstance) -> ScalingState {
    let n = int(inst.num_nodes() as i64);
    let mut prices = vec![Rational::zero(); inst.num_goods()];
    for i in 0..inst.num_buyers() {
        let total: Rational = inst
            .buyer_edges(i)
            .iter()
            .map(|&k| &inst.edge(k).utility)
            .sum();
        let scale = if *inst.budget(i) < total {
            inst.budget(i)
        } else {
            &total
        };
        for &k in inst.buyer_edges(i) {
            let e = inst.edge(k);
            let rho = &e.utility * scale / (&n * &total);
            if rho > prices[e.good] {
                prices[e.good] = rho;
            }
        }
    }
    let delta = compute_stats(inst).e_max;
    ScalingState::new(inst, MarketState::new(inst, prices), delta)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NegativeRefund(usize),
    NegativeCash(usize),
    Backorder(usize),
    OffEquality(usize),
    NotMultiple(usize),
    NegativeSpending(usize),
    NegativePrice(usize),
}

/// All violated Δ-feasibility conditions.
pub fn feasibility_violations(inst: &MarketInstance, st: &ScalingState) -> Vec<Violation> {
    let m = &st.market;
    let mut out = Vec::new();
    for i in 0..inst.num_buyers() {
        if m.refunds[i].is_negative() {
            out.push(Violation::NegativeRefund(i));
        }
        if m.cash(inst, i).is_negative() {
            out.push(Violation::NegativeCash(i));
        }
    }
    for j in 0..inst.num_goods() {
        if m.prices[j].is_negative() {
            out.push(Violation::NegativePrice(j));
        }
        if m.prices[j] > st.initial_prices[j] {
            let b = m.backorder(inst, j);
            let lower = st.deficit_floor[j].clone().unwrap_or_else(Rational::zero);
            if b < lower || b > st.delta {
                out.push(Violation::Backorder(j));
            }
        }
    }
    if out.iter().any(|v| matches!(v, Violation::NegativePrice(_))) {
        return out;
    }
    let equality = crate::graph::equality_mask(inst, &m.prices);
    for (k, x) in m.spending.iter().enumerate() {
        if x.is_negative() {
            out.push(Violation::NegativeSpending(k));
        } else if x.is_positive() {
            if !equality[k] {
                out.push(Violation::OffEquality(k));
            }
            if !st.exempt[k] && !rational::is_multiple_of(x, &st.delta) {
                out.push(Violation::NotMultiple(k));
            }
        }
    }
    out
}

pub fn is_delta_feasible(inst: &MarketInstance, st: &ScalingState) -> bool {
    feasibility_violations(inst, st).is_empty()
}

/// Δ-feasible and every buyer holds less than Δ.
pub fn is_delta_optimal(inst: &MarketInstance, st: &ScalingState) -> bool {
    is_delta_feasible(inst, st)
        && (0..inst.num_buyers()).all(|i| st.market.cash(inst, i) < st.delta)
}

/// `Φ_Δ = Σ_i floor(c̄_i / Δ)`.
pub fn potential(inst: &MarketInstance, st: &ScalingState) -> BigInt {
    st.market.potential(inst, &st.delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    NewEqualityEdge,
    GoodBackorderZero,
    BuyerCritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventSubject {
    Edge(usize),
    Node(Node),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopEvent {
    pub kind: EventKind,
    pub subject: EventSubject,
    pub multiplier: Rational,
}

/// Scales the active goods by the smallest `q >= 1` at which a new equality
/// edge appears, an active good's backorder reaches zero, or an active buyer
/// becomes critical. Ties go to the earlier event kind, then the smaller
/// subject.
pub fn update_price_star(
    inst: &MarketInstance,
    market: &MarketState,
    active: &ActiveSet,
) -> Result<(Vec<Rational>, StopEvent)> {
    let prices = &market.prices;
    let one = Rational::one();
    let mut best: Option<(Rational, EventKind, EventSubject)> = None;
    let mut offer = |q: Rational, kind: EventKind, subject: EventSubject| {
        let cand = (q, kind, subject);
        if best.as_ref().is_none_or(|b| cand < *b) {
            best = Some(cand);
        }
    };
    for i in active.active_buyers() {
        let alpha = crate::graph::bang_per_buck(inst, prices, i);
        for &k in inst.buyer_edges(i) {
            let e = inst.edge(k);
            if !active.goods[e.good] {
                offer(
                    &alpha * &prices[e.good] / &e.utility,
                    EventKind::NewEqualityEdge,
                    EventSubject::Edge(k),
                );
            }
        }
        if alpha > one {
            offer(
                alpha,
                EventKind::BuyerCritical,
                EventSubject::Node(Node::Buyer(i)),
            );
        }
    }
    for j in active.active_goods() {
        let q = market.sold(inst, j) / &prices[j];
        offer(
            q,
            EventKind::GoodBackorderZero,
            EventSubject::Node(Node::Good(j)),
        );
    }
    let Some((q, kind, subject)) = best else {
        return Err(SolverError::InvariantViolation(
            "price update found no event".into(),
        ));
    };
    invariant!(
        q >= one,
        "price multiplier {} below one",
        rational::format(&q)
    );
    let mut updated = prices.clone();
    for j in active.active_goods() {
        updated[j] = &updated[j] * &q;
    }
    Ok((
        updated,
        StopEvent {
            kind,
            subject,
            multiplier: q,
        },
    ))
}

/// Forward arcs on `E(p)`, backward arcs where at least Δ can be pulled back.
pub(crate) fn scaling_network(inst: &MarketInstance, st: &ScalingState) -> ResidualNetwork {
    let mut net = residual_network(inst, &st.market);
    for (back, x) in net.backward.iter_mut().zip(&st.market.spending) {
        *back = *back && *x >= st.delta;
    }
    net
}

/// Moves Δ along a residual path.
pub fn augment(market: &mut MarketState, path: &[Arc], delta: &Rational) -> Result<()> {
    for arc in path {
        let x = &mut market.spending[arc.edge];
        if arc.forward {
            *x += delta;
        } else {
            invariant!(
                *x >= *delta,
                "backward arc on edge {} below capacity",
                arc.edge
            );
            *x -= delta;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentOutcome {
    pub root: usize,
    pub terminal: Node,
    pub price_updates: usize,
    pub path_len: usize,
}

/// One call of price-and-augment from `root`.
pub fn price_and_augment(
    inst: &MarketInstance,
    st: &mut ScalingState,
    root: usize,
) -> Result<AugmentOutcome> {
    let one = Rational::one();
    invariant!(
        st.market.cash(inst, root) >= st.delta,
        "root {} lacks cash",
        inst.buyer_id(root)
    );
    let mut price_updates = 0;
    loop {
        let net = scaling_network(inst, st);
        let active = active_set(inst, &net, &[Node::Buyer(root)]);
        let alpha = alphas(inst, &st.market.prices);
        if price_updates == 0 {
            invariant!(
                alpha[root] > one,
                "root {} is not above one",
                inst.buyer_id(root)
            );
        }
        let terminal = active
            .active_buyers()
            .find(|&i| alpha[i] == one)
            .map(Node::Buyer)
            .or_else(|| {
                active
                    .active_goods()
                    .find(|&j| !st.market.backorder(inst, j).is_positive())
                    .map(Node::Good)
            });
        if let Some(terminal) = terminal {
            let path = active.path_to(inst, terminal).expect("terminal is active");
            augment(&mut st.market, &path, &st.delta)?;
            if let Node::Buyer(i) = terminal {
                st.market.refunds[i] += &st.delta;
            }
            return Ok(AugmentOutcome {
                root,
                terminal,
                price_updates,
                path_len: path.len(),
            });
        }
        let (prices, _) = update_price_star(inst, &st.market, &active)?;
        st.market.prices = prices;
        price_updates += 1;
        invariant!(
            price_updates <= 2 * inst.num_nodes() + 2,
            "price updates do not reach a terminal"
        );
    }
}

/// `r_i += Δ` for a buyer with `α_i <= 1` and at least Δ in cash.
pub fn refund_step(inst: &MarketInstance, st: &mut ScalingState, buyer: usize) -> Result<()> {
    invariant!(
        crate::graph::bang_per_buck(inst, &st.market.prices, buyer) <= Rational::one()
            && st.market.cash(inst, buyer) >= st.delta,
        "refund step precondition fails at {}",
        inst.buyer_id(buyer)
    );
    st.market.refunds[buyer] += &st.delta;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Refund(usize),
    Augment(usize),
}

/// Refund steps first, then price-and-augment; smallest buyer in each case.
pub fn next_step(inst: &MarketInstance, st: &ScalingState) -> Option<Step> {
    let one = Rational::one();
    let alpha = alphas(inst, &st.market.prices);
    let rich: Vec<usize> = (0..inst.num_buyers())
        .filter(|&i| st.market.cash(inst, i) >= st.delta)
        .collect();
    rich.iter()
        .find(|&&i| alpha[i] <= one)
        .map(|&i| Step::Refund(i))
        .or_else(|| rich.first().map(|&i| Step::Augment(i)))
}

/// `Δ' = Δ/2`; each good with `b_j > Δ'` gives back Δ' from its smallest
/// buyer with positive spending.
pub fn halve_and_repair(inst: &MarketInstance, st: &mut ScalingState) -> Result<Vec<usize>> {
    let half = &st.delta / int(2);
    let mut repaired = Vec::new();
    for j in 0..inst.num_goods() {
        if st.market.backorder(inst, j) > half {
            let k = inst
                .good_edges(j)
                .iter()
                .copied()
                .find(|&k| st.market.spending[k].is_positive());
            let Some(k) = k else {
                return Err(SolverError::InvariantViolation(format!(
                    "good {} is overbought without spending",
                    inst.good_id(j)
                )));
            };
            invariant!(
                st.market.spending[k] > half,
                "repair would empty edge {}",
                k
            );
            st.market.spending[k] -= &half;
            repaired.push(k);
        }
    }
    st.delta = half;
    Ok(repaired)
}

/// Runs the inner loop until Δ-optimal, appending one row per iteration.
pub(crate) fn run_inner_loop(
    inst: &MarketInstance,
    st: &mut ScalingState,
    phase: usize,
    trace: &mut RunTrace,
) -> Result<usize> {
    let start = potential(inst, st);
    let cap = clamp(&start).max(0) as usize + 4 * inst.num_nodes();
    let mut iterations = 0;
    while let Some(step) = next_step(inst, st) {
        let before = potential(inst, st);
        let row = match step {
            Step::Refund(i) => {
                refund_step(inst, st, i)?;
                trace.counters.refund_steps += 1;
                TraceRow::new(phase, &st.delta, StepKind::Refund).subject(inst.buyer_id(i))
            }
            Step::Augment(root) => {
                let out = price_and_augment(inst, st, root)?;
                trace.counters.augmentations += 1;
                let kind = match out.terminal {
                    Node::Buyer(_) => StepKind::AugmentBuyer,
                    Node::Good(_) => StepKind::AugmentGood,
                };
                TraceRow::new(phase, &st.delta, kind).subject(out.terminal.id(inst))
            }
        };
        let after = potential(inst, st);
        trace.rows.push(row.phi(&before, &after));
        st.clear_repaired_deficits(inst);
        iterations += 1;
        invariant!(iterations <= cap, "inner loop exceeded {} iterations", cap);
    }
    Ok(iterations)
}

/// Bookkeeping shared by both solvers at phase boundaries.
pub(crate) struct PhaseTracker {
    ever_abundant: Vec<bool>,
}

pub(crate) struct PhaseStart {
    pub spending: Vec<Rational>,
    pub phi: i64,
    pub abundant: Vec<usize>,
    pub new_abundant: Vec<usize>,
}

impl PhaseTracker {
    pub fn new(inst: &MarketInstance) -> Self {
        Self {
            ever_abundant: vec![false; inst.num_edges()],
        }
    }

    pub fn start(
        &mut self,
        inst: &MarketInstance,
        st: &ScalingState,
        phase: usize,
        trace: &mut RunTrace,
    ) -> PhaseStart {
        let mask = abundant_mask(inst, &st.market, &st.delta);
        let abundant: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
        let new_abundant: Vec<usize> = abundant
            .iter()
            .copied()
            .filter(|&k| !self.ever_abundant[k])
            .collect();
        for &k in &new_abundant {
            self.ever_abundant[k] = true;
        }
        trace.counters.abundant_edges += new_abundant.len();
        let phi = potential(inst, st);
        let mut row = TraceRow::new(phase, &st.delta, StepKind::Phase).phi(&phi, &phi);
        row.abundant_added = edge_names(inst, &new_abundant);
        trace.rows.push(row);
        PhaseStart {
            spending: st.market.spending.clone(),
            phi: clamp(&phi),
            abundant,
            new_abundant,
        }
    }

    pub fn finish(
        &self,
        start: PhaseStart,
        st: &ScalingState,
        phase: usize,
        iterations: usize,
    ) -> PhaseSummary {
        let max_drift = start
            .spending
            .iter()
            .zip(&st.market.spending)
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap_or_else(Rational::zero);
        PhaseSummary {
            index: phase,
            delta: st.delta.clone(),
            phi_start: start.phi,
            iterations,
            max_drift,
            abundant_start: start.abundant,
            new_abundant: start.new_abundant,
            new_satisfied_singletons: Vec::new(),
            branch: None,
            restart: None,
            special_price_iterations: Vec::new(),
        }
    }
}

/// Fails with a genericity error if `E(p)` has a cycle or a component with two
/// critical buyers.
pub(crate) fn ensure_generic(inst: &MarketInstance, prices: &[Rational]) -> Result<()> {
    let report = check_genericity(inst, prices);
    if report.passed() {
        return Ok(());
    }
    let msg = match &report.offending_cycle {
        Some(cycle) => format!("equality graph has a cycle of length {}", cycle.len()),
        None => "two critical buyers share an equality component".to_string(),
    };
    Err(SolverError::Genericity(msg))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Stop at the first phase end with `Δ < 1/(8nD)` and return the basic
    /// solution of `{x > 4nΔ}`.
    Threshold,
    /// Additionally stop at any earlier phase end whose `{x > 4nΔ}` already
    /// yields a certified equilibrium.
    #[default]
    CertifiedSupport,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WeakOptions {
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakRun {
    pub equilibrium: Equilibrium,
    pub trace: RunTrace,
    pub final_delta: Rational,
    /// `1/(8nD)` with the denominator-cleared `D`.
    pub threshold: Rational,
    /// Whether the run stopped at the threshold (rather than earlier).
    pub reached_threshold: bool,
    /// Spending at the start of the last phase.
    pub final_phase_start: Vec<Rational>,
    /// Spending at the end of the last phase.
    pub final_phase_end: Vec<Rational>,
    /// `ceil(log2(Δ_0 · 8nD)) + 1`.
    pub phase_bound: usize,
}

pub fn run_weak(inst: &MarketInstance, opts: &WeakOptions) -> Result<WeakRun> {
    let stats = compute_stats(inst);
    let n = int(stats.n as i64);
    let threshold = (int(8) * &n * &stats.cleared_d_bound).recip();
    let mut st = initialize(inst);
    let phase_bound = (rational::ceil_log2(&(&st.delta / &threshold)).max(0) + 1) as usize;
    let budgets = inst.budgets_vec();
    let mut trace = RunTrace::default();
    let mut tracker = PhaseTracker::new(inst);

    for phase in 0.. {
        if phase > phase_bound + 1 {
            return Err(SolverError::WatchdogExceeded(phase_bound + 1));
        }
        let start = tracker.start(inst, &st, phase, &mut trace);
        let start_spending = start.spending.clone();
        let iterations = run_inner_loop(inst, &mut st, phase, &mut trace)?;
        trace
            .phases
            .push(tracker.finish(start, &st, phase, iterations));
        trace.counters.phases += 1;
        ensure_generic(inst, &st.market.prices)?;

        let below = st.delta < threshold;
        let candidate = if below || opts.termination == Termination::CertifiedSupport {
            recover_support(inst, &st.market, &st.delta)
                .and_then(|h| basic_solution(inst, &h, &budgets))
                .ok()
                .filter(|s| check_equilibrium(inst, &budgets, s).passed())
        } else {
            None
        };
        if let Some(solution) = candidate {
            trace
                .rows
                .push(TraceRow::new(phase, &st.delta, StepKind::Terminate));
            return Ok(WeakRun {
                equilibrium: Equilibrium::certify(inst, &budgets, solution),
                trace,
                final_delta: st.delta.clone(),
                threshold,
                reached_threshold: below,
                final_phase_start: start_spending,
                final_phase_end: st.market.spending.clone(),
                phase_bound,
            });
        }
        if below {
            return Err(SolverError::BasicSolutionFailed(
                "support recovered below the threshold does not certify".into(),
            ));
        }
        let before = potential(inst, &st);
        let repaired = halve_and_repair(inst, &mut st)?;
        let after = potential(inst, &st);
        trace.rows.push(
            TraceRow::new(phase, &st.delta, StepKind::Halve)
                .subject(format!("{} repaired", repaired.len()))
                .phi(&before, &after),
        );
    }
    unreachable!()
}
