//! Basic solutions: the price/spending/refund triple pinned down by a
//! cycle-free support and one scale condition per component.

use std::collections::VecDeque;

use num_traits::{One, Signed, Zero};

use crate::error::{Result, SolverError};
use crate::graph::{components_of, is_forest, mask_from_edges, Component};
use crate::instance::MarketInstance;
use crate::rational::{int, Rational};
use crate::state::MarketState;

/// A cycle-free set of edges, stored as sorted edge indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SupportForest {
    edges: Vec<usize>,
}

impl SupportForest {
    pub fn new(inst: &MarketInstance, mut edges: Vec<usize>) -> Result<Self> {
        edges.sort_unstable();
        edges.dedup();
        if !is_forest(inst, &mask_from_edges(inst, &edges)) {
            return Err(SolverError::BasicSolutionFailed(
                "support contains a cycle".into(),
            ));
        }
        Ok(Self { edges })
    }

    pub fn from_mask(inst: &MarketInstance, mask: &[bool]) -> Result<Self> {
        Self::new(inst, (0..mask.len()).filter(|&k| mask[k]).collect())
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn mask(&self, inst: &MarketInstance) -> Vec<bool> {
        mask_from_edges(inst, &self.edges)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeFlowError {
    #[error("edge set contains a cycle")]
    Cycle,
    #[error("node balance does not close (residual {residual} at node {node})")]
    Unbalanced { node: usize, residual: Rational },
}

/// The unique flow on a forest meeting node balances.
///
/// `edges` are `(buyer, good)` pairs; buyer `i` must send exactly `supply[i]`
/// and good `j` must receive exactly `demand[j]`. Values may come out negative;
/// callers decide whether that is acceptable.
pub fn tree_flow(
    edges: &[(usize, usize)],
    supply: &[Rational],
    demand: &[Rational],
) -> std::result::Result<Vec<Rational>, TreeFlowError> {
    let nb = supply.len();
    let nodes = nb + demand.len();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for (k, &(i, j)) in edges.iter().enumerate() {
        incident[i].push(k);
        incident[nb + j].push(k);
    }
    let mut residual: Vec<Rational> = supply.iter().chain(demand).cloned().collect();
    let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
    let mut used = vec![false; edges.len()];
    let mut flow = vec![Rational::zero(); edges.len()];
    let mut leaves: Vec<usize> = (0..nodes).rev().filter(|&v| degree[v] == 1).collect();
    let mut eliminated = 0;

    while let Some(v) = leaves.pop() {
        if degree[v] != 1 {
            continue;
        }
        let k = *incident[v]
            .iter()
            .find(|&&k| !used[k])
            .expect("leaf has an edge");
        let (i, j) = edges[k];
        let other = if v == i { nb + j } else { i };
        let value = std::mem::take(&mut residual[v]);
        residual[other] -= &value;
        flow[k] = value;
        used[k] = true;
        eliminated += 1;
        degree[v] = 0;
        degree[other] -= 1;
        if degree[other] == 1 {
            leaves.push(other);
        }
    }
    if eliminated != edges.len() {
        return Err(TreeFlowError::Cycle);
    }
    if let Some(node) = (0..nodes).find(|&v| !residual[v].is_zero()) {
        return Err(TreeFlowError::Unbalanced {
            node,
            residual: residual[node].clone(),
        });
    }
    Ok(flow)
}

/// `BasicSolution_ê(H)`. Refunds in the result are the basic-solution refunds.
///
/// Per component: first the budget-equals-price case, then anchored cases in
/// buyer order. A case is accepted only if spending is nonnegative, the anchor
/// refund is nonnegative and every buyer gets at least one util per dollar on
/// its support edges.
pub fn basic_solution(
    inst: &MarketInstance,
    support: &SupportForest,
    budgets: &[Rational],
) -> Result<MarketState> {
    assert_eq!(budgets.len(), inst.num_buyers());
    let comps = components_of(inst, &support.mask(inst));
    let mut state = MarketState::new(inst, vec![Rational::zero(); inst.num_goods()]);
    for comp in &comps.list {
        if let Some(i) = comp.singleton_buyer() {
            state.refunds[i] = budgets[i].clone();
            continue;
        }
        if let Some(j) = comp.singleton_good() {
            return Err(SolverError::BasicSolutionFailed(format!(
                "good {} has no support edge",
                inst.good_id(j)
            )));
        }
        solve_component(inst, comp, budgets, &mut state)?;
    }
    Ok(state)
}

fn solve_component(
    inst: &MarketInstance,
    comp: &Component,
    budgets: &[Rational],
    state: &mut MarketState,
) -> Result<()> {
    let ratios = price_ratios(inst, comp);
    let total_ratio: Rational = comp.goods.iter().map(|&j| &ratios[j]).sum();
    let total_budget: Rational = comp.buyers.iter().map(|&i| &budgets[i]).sum();

    if total_budget.is_positive() {
        let scale = &total_budget / &total_ratio;
        if let Some(x) = try_case(inst, comp, budgets, &ratios, &scale, None) {
            write_case(comp, &ratios, &scale, &x, None, state);
            return Ok(());
        }
    }
    for &anchor in &comp.buyers {
        let k = comp
            .edges
            .iter()
            .copied()
            .find(|&k| inst.edge(k).buyer == anchor)
            .expect("non-singleton buyer has a support edge");
        let e = inst.edge(k);
        let scale = &e.utility / &ratios[e.good];
        if let Some(x) = try_case(inst, comp, budgets, &ratios, &scale, Some(anchor)) {
            let spent: Rational = comp
                .edges
                .iter()
                .zip(&x)
                .filter(|(&k, _)| inst.edge(k).buyer == anchor)
                .map(|(_, v)| v)
                .sum();
            let refund = &budgets[anchor] - spent;
            write_case(comp, &ratios, &scale, &x, Some((anchor, refund)), state);
            return Ok(());
        }
    }
    Err(SolverError::BasicSolutionFailed(format!(
        "no consistent case for the component of {}",
        comp.buyer_root().id(inst)
    )))
}

/// Prices relative to the component's smallest good, from equal bang-per-buck
/// along support edges.
fn price_ratios(inst: &MarketInstance, comp: &Component) -> Vec<Rational> {
    let mut ratios = vec![Rational::zero(); inst.num_goods()];
    let mut seen_buyer = vec![false; inst.num_buyers()];
    let mut buyer_edges: Vec<Vec<usize>> = vec![Vec::new(); inst.num_buyers()];
    let mut good_edges: Vec<Vec<usize>> = vec![Vec::new(); inst.num_goods()];
    for &k in &comp.edges {
        buyer_edges[inst.edge(k).buyer].push(k);
        good_edges[inst.edge(k).good].push(k);
    }
    let root = comp.goods[0];
    ratios[root] = Rational::one();
    let mut queue = VecDeque::from([root]);
    while let Some(j) = queue.pop_front() {
        for &k in &good_edges[j] {
            let i = inst.edge(k).buyer;
            if seen_buyer[i] {
                continue;
            }
            seen_buyer[i] = true;
            let base = &ratios[j] / &inst.edge(k).utility;
            for &l in &buyer_edges[i] {
                let g = inst.edge(l).good;
                if g != j {
                    ratios[g] = &base * &inst.edge(l).utility;
                    queue.push_back(g);
                }
            }
        }
    }
    ratios
}

fn try_case(
    inst: &MarketInstance,
    comp: &Component,
    budgets: &[Rational],
    ratios: &[Rational],
    scale: &Rational,
    anchor: Option<usize>,
) -> Option<Vec<Rational>> {
    let prices: Vec<Rational> = comp.goods.iter().map(|&j| &ratios[j] * scale).collect();
    let local_good = |j: usize| comp.goods.binary_search(&j).expect("good in component");
    let local_buyer = |i: usize| comp.buyers.binary_search(&i).expect("buyer in component");

    let mut supply: Vec<Rational> = comp.buyers.iter().map(|&i| budgets[i].clone()).collect();
    if let Some(a) = anchor {
        let others: Rational = comp
            .buyers
            .iter()
            .filter(|&&i| i != a)
            .map(|&i| &budgets[i])
            .sum();
        let anchor_supply = prices.iter().sum::<Rational>() - others;
        if anchor_supply > budgets[a] {
            return None;
        }
        supply[local_buyer(a)] = anchor_supply;
    }
    let edges: Vec<(usize, usize)> = comp
        .edges
        .iter()
        .map(|&k| {
            (
                local_buyer(inst.edge(k).buyer),
                local_good(inst.edge(k).good),
            )
        })
        .collect();
    let x = tree_flow(&edges, &supply, &prices).ok()?;
    if x.iter().any(Signed::is_negative) {
        return None;
    }
    // Every buyer must weakly prefer its support goods to keeping money.
    for &k in &comp.edges {
        let e = inst.edge(k);
        if e.utility < prices[local_good(e.good)] {
            return None;
        }
    }
    Some(x)
}

fn write_case(
    comp: &Component,
    ratios: &[Rational],
    scale: &Rational,
    x: &[Rational],
    anchor: Option<(usize, Rational)>,
    state: &mut MarketState,
) {
    for &j in &comp.goods {
        state.prices[j] = &ratios[j] * scale;
    }
    for (&k, v) in comp.edges.iter().zip(x) {
        state.spending[k] = v.clone();
    }
    for &i in &comp.buyers {
        state.refunds[i] = Rational::zero();
    }
    if let Some((a, r)) = anchor {
        state.refunds[a] = r;
    }
}

/// `E_Δ = {x_ij > 4nΔ}`.
pub fn recover_support(
    inst: &MarketInstance,
    state: &MarketState,
    delta: &Rational,
) -> Result<SupportForest> {
    let bound = int(4 * inst.num_nodes() as i64) * delta;
    SupportForest::new(
        inst,
        (0..inst.num_edges())
            .filter(|&k| state.spending[k] > bound)
            .collect(),
    )
}
