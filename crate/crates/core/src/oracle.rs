//! Independent checks: equilibrium certification, brute-force equilibria by
//! support enumeration, and genericity of equality graphs.

use std::collections::VecDeque;

use num_traits::{One, Signed, Zero};
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::basic_solution::{basic_solution, SupportForest};
use crate::graph::{alphas, components_of, equality_mask, is_forest, mask_from_edges};
use crate::instance::MarketInstance;
use crate::par::{map_collect, Execution};
use crate::rational::{self, Rational};
use crate::state::{quantities, MarketState};

pub const BRUTE_FORCE_MAX_NODES: usize = 8;
pub const BRUTE_FORCE_MAX_EDGES: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Outcome of every equilibrium condition, in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub checks: Vec<CheckResult>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// The literal conditions hold but buyer optimality fails.
    pub fn derived_check_decides(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.passed || c.name == BUYER_OPTIMALITY)
            && !self.get(BUYER_OPTIMALITY).is_some_and(|c| c.passed)
    }
}

pub const POSITIVE_PRICES: &str = "positive_prices";
pub const BUDGET_BALANCE: &str = "budget_balance";
pub const MARKET_CLEARING: &str = "market_clearing";
pub const SUPPORT_ON_EQUALITY: &str = "support_on_equality";
pub const REFUND_COMPLEMENTARITY: &str = "refund_complementarity";
pub const BUYER_OPTIMALITY: &str = "buyer_optimality";

fn check(name: &str, failure: Option<String>) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: failure.is_none(),
        detail: failure,
    }
}

/// Certifies `(p, x, r)` against budgets `budgets`, exactly.
pub fn check_equilibrium(
    inst: &MarketInstance,
    budgets: &[Rational],
    state: &MarketState,
) -> Certificate {
    let mut checks = Vec::with_capacity(6);
    let bad_price = (0..inst.num_goods()).find(|&j| !state.prices[j].is_positive());
    checks.push(check(
        POSITIVE_PRICES,
        bad_price.map(|j| format!("price of {} is not positive", inst.good_id(j))),
    ));

    let balance = (0..inst.num_buyers()).find_map(|i| {
        if state.refunds[i].is_negative() {
            return Some(format!("negative refund at {}", inst.buyer_id(i)));
        }
        let cash = &budgets[i] - &state.refunds[i] - state.spent(inst, i);
        (!cash.is_zero()).then(|| {
            format!(
                "buyer {} has cash {}",
                inst.buyer_id(i),
                rational::format(&cash)
            )
        })
    });
    checks.push(check(BUDGET_BALANCE, balance));

    let clearing = (0..inst.num_goods()).find_map(|j| {
        let b = state.backorder(inst, j);
        (!b.is_zero()).then(|| {
            format!(
                "good {} has backorder {}",
                inst.good_id(j),
                rational::format(&b)
            )
        })
    });
    checks.push(check(MARKET_CLEARING, clearing));

    if bad_price.is_some() {
        for name in [
            SUPPORT_ON_EQUALITY,
            REFUND_COMPLEMENTARITY,
            BUYER_OPTIMALITY,
        ] {
            checks.push(check(name, Some("prices not positive".into())));
        }
        return Certificate { checks };
    }

    let alpha = alphas(inst, &state.prices);
    let equality = equality_mask(inst, &state.prices);
    let edge_name = |k: usize| {
        let e = inst.edge(k);
        format!("({}, {})", inst.buyer_id(e.buyer), inst.good_id(e.good))
    };
    let support = (0..inst.num_edges()).find_map(|k| {
        let x = &state.spending[k];
        if x.is_negative() {
            Some(format!("negative spending on {}", edge_name(k)))
        } else if x.is_positive() && !equality[k] {
            Some(format!(
                "spending off the equality graph on {}",
                edge_name(k)
            ))
        } else {
            None
        }
    });
    checks.push(check(SUPPORT_ON_EQUALITY, support));

    let one = Rational::one();
    let complementarity = (0..inst.num_buyers()).find_map(|i| {
        (state.refunds[i].is_positive() && alpha[i] > one).then(|| {
            format!(
                "buyer {} is refunded at bang-per-buck {}",
                inst.buyer_id(i),
                rational::format(&alpha[i])
            )
        })
    });
    checks.push(check(REFUND_COMPLEMENTARITY, complementarity));

    let optimality = (0..inst.num_edges()).find_map(|k| {
        let i = inst.edge(k).buyer;
        (state.spending[k].is_positive() && alpha[i] < one).then(|| {
            format!(
                "{} spends at bang-per-buck {}",
                edge_name(k),
                rational::format(&alpha[i])
            )
        })
    });
    checks.push(check(BUYER_OPTIMALITY, optimality));
    Certificate { checks }
}

/// A certified solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equilibrium {
    pub state: MarketState,
    /// `y_ij = x_ij / p_j`, per edge.
    pub quantities: Vec<Rational>,
    pub certificate: Certificate,
}

impl Equilibrium {
    pub fn certify(inst: &MarketInstance, budgets: &[Rational], state: MarketState) -> Self {
        let certificate = check_equilibrium(inst, budgets, &state);
        let quantities = if certificate.get(POSITIVE_PRICES).is_some_and(|c| c.passed) {
            quantities(inst, &state)
        } else {
            vec![Rational::zero(); inst.num_edges()]
        };
        Self {
            state,
            quantities,
            certificate,
        }
    }

    pub fn prices(&self) -> &[Rational] {
        &self.state.prices
    }

    pub fn spending(&self) -> &[Rational] {
        &self.state.spending
    }

    pub fn refunds(&self) -> &[Rational] {
        &self.state.refunds
    }

    /// `H* = {x_ij > 0}`.
    pub fn support(&self) -> Vec<usize> {
        self.state.support()
    }

    /// Smallest positive coordinate over prices, spending and refunds.
    pub fn min_positive_coordinate(&self) -> Option<Rational> {
        self.state
            .prices
            .iter()
            .chain(&self.state.spending)
            .chain(&self.state.refunds)
            .filter(|v| v.is_positive())
            .min()
            .cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BruteForceError {
    #[error("instance too large for enumeration (n = {n}, m = {m})")]
    TooLarge { n: usize, m: usize },
    #[error("no support yields an equilibrium")]
    NoEquilibrium,
    #[error("{} distinct equilibria found", .0.len())]
    Multiple(Vec<MarketState>),
}

/// Enumerates every cycle-free support (by size, then lexicographically) and
/// returns the unique basic solution that certifies.
pub fn brute_force_equilibrium(
    inst: &MarketInstance,
    exec: Execution,
) -> Result<Equilibrium, BruteForceError> {
    let (n, m) = (inst.num_nodes(), inst.num_edges());
    if n > BRUTE_FORCE_MAX_NODES || m > BRUTE_FORCE_MAX_EDGES {
        return Err(BruteForceError::TooLarge { n, m });
    }
    let supports = forest_subsets(inst);
    let budgets = inst.budgets_vec();
    let results = map_collect(exec, &supports, |edges| {
        let forest = SupportForest::new(inst, edges.clone()).ok()?;
        let state = basic_solution(inst, &forest, &budgets).ok()?;
        check_equilibrium(inst, &budgets, &state)
            .passed()
            .then_some(state)
    });
    let mut found: Vec<MarketState> = Vec::new();
    for state in results.into_iter().flatten() {
        if !found.contains(&state) {
            found.push(state);
        }
    }
    match found.len() {
        0 => Err(BruteForceError::NoEquilibrium),
        1 => Ok(Equilibrium::certify(inst, &budgets, found.pop().unwrap())),
        _ => Err(BruteForceError::Multiple(found)),
    }
}

/// All cycle-free edge subsets, by increasing size then lexicographically.
pub fn forest_subsets(inst: &MarketInstance) -> Vec<Vec<usize>> {
    let m = inst.num_edges();
    let max_size = m.min(inst.num_nodes() - 1);
    let mut out = Vec::new();
    for size in 0..=max_size {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            if is_forest(inst, &mask_from_edges(inst, &combo)) {
                out.push(combo.clone());
            }
            // next combination in lexicographic order
            let mut pos = size;
            while pos > 0 && combo[pos - 1] == m - size + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            combo[pos - 1] += 1;
            for t in pos..size {
                combo[t] = combo[t - 1] + 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenericityReport {
    pub is_forest: bool,
    /// A cycle of `E(p)` as `(buyer, good)` pairs.
    pub offending_cycle: Option<Vec<(usize, usize)>>,
    /// Buyers with bang-per-buck exactly one, per component of `E(p)`.
    pub critical_buyers_per_component: Vec<usize>,
}

impl GenericityReport {
    pub fn passed(&self) -> bool {
        self.is_forest && self.critical_buyers_per_component.iter().all(|&c| c <= 1)
    }
}

pub fn check_genericity(inst: &MarketInstance, prices: &[Rational]) -> GenericityReport {
    let nb = inst.num_buyers();
    let equality = equality_mask(inst, prices);
    let mut uf = UnionFind::<usize>::new(inst.num_nodes());
    let mut accepted: Vec<Vec<(usize, usize)>> = vec![Vec::new(); inst.num_nodes()];
    let mut offending_cycle = None;
    for (k, e) in inst.edges().iter().enumerate() {
        if !equality[k] {
            continue;
        }
        let (u, v) = (e.buyer, nb + e.good);
        if uf.union(u, v) {
            accepted[u].push((v, k));
            accepted[v].push((u, k));
        } else if offending_cycle.is_none() {
            let mut cycle = forest_path(&accepted, u, v);
            cycle.push(k);
            offending_cycle = Some(
                cycle
                    .into_iter()
                    .map(|k| (inst.edge(k).buyer, inst.edge(k).good))
                    .collect(),
            );
        }
    }
    let comps = components_of(inst, &equality);
    let alpha = alphas(inst, prices);
    let one = Rational::one();
    let critical_buyers_per_component = comps
        .list
        .iter()
        .map(|c| c.buyers.iter().filter(|&&i| alpha[i] == one).count())
        .collect();
    GenericityReport {
        is_forest: offending_cycle.is_none(),
        offending_cycle,
        critical_buyers_per_component,
    }
}

/// Edge indices along the unique forest path from `from` to `to`.
fn forest_path(adj: &[Vec<(usize, usize)>], from: usize, to: usize) -> Vec<usize> {
    let mut pred: Vec<Option<(usize, usize)>> = vec![None; adj.len()];
    let mut seen = vec![false; adj.len()];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &(w, k) in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                pred[w] = Some((u, k));
                queue.push_back(w);
            }
        }
    }
    let mut path = Vec::new();
    let mut cur = to;
    while let Some((u, k)) = pred[cur] {
        path.push(k);
        cur = u;
    }
    path.reverse();
    path
}
