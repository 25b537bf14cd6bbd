//! Choosing a new scale, new prices and a new allocation when a phase ends
//! without a fertile component.

use num_traits::{One, Signed, Zero};

use crate::basic_solution::tree_flow;
use crate::error::{invariant, Result, SolverError};
use crate::graph::{abundant_mask, active_set, alphas, components_of, Components, Node};
use crate::instance::MarketInstance;
use crate::par::{map_collect, Execution};
use crate::rational::{self, int, Rational};
use crate::state::MarketState;
use crate::trace::{RestartBranch, RestartCheck, RunTrace, StepKind, TraceRow};
use crate::weak::{augment, halve_and_repair, potential, scaling_network, ScalingState};

use super::special_price::{special_price, SpecialPriceRun};

/// Result of the parameter search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parameter {
    pub value: Rational,
    /// `Δ_H` per component.
    pub per_component: Vec<Rational>,
    pub runs: Vec<Option<SpecialPriceRun>>,
}

/// `Δ' = max_H Δ_H`.
///
/// A singleton buyer with `α > 1` contributes its whole effective budget
/// (which is also its cash once the allocation is rebuilt), one with `α <= 1`
/// contributes zero, and every other component contributes its surplus after
/// raising prices with target zero.
pub fn get_parameter(
    inst: &MarketInstance,
    market: &MarketState,
    delta: &Rational,
    comps: &Components,
    exec: Execution,
) -> Result<Parameter> {
    let alpha = alphas(inst, &market.prices);
    let idx: Vec<usize> = (0..comps.len()).collect();
    let results = map_collect(
        exec,
        &idx,
        |&h| -> Result<(Rational, Option<SpecialPriceRun>)> {
            let comp = &comps.list[h];
            if let Some(i) = comp.singleton_buyer() {
                let value = if alpha[i] > Rational::one() {
                    inst.budget(i) - &market.refunds[i]
                } else {
                    Rational::zero()
                };
                return Ok((value, None));
            }
            if let Some(j) = comp.singleton_good() {
                return Ok((-market.prices[j].clone(), None));
            }
            let run = special_price(inst, market, delta, comps, h, &Rational::zero())?;
            Ok((run.surplus(inst, comps, h), Some(run)))
        },
    );
    let mut per_component = Vec::with_capacity(results.len());
    let mut runs = Vec::with_capacity(results.len());
    for res in results {
        let (v, run) = res?;
        per_component.push(v);
        runs.push(run);
    }
    let value = per_component
        .iter()
        .max()
        .cloned()
        .expect("at least one component");
    Ok(Parameter {
        value,
        per_component,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestartPrices {
    pub prices: Vec<Rational>,
    pub refunds: Vec<Rational>,
    /// The raise made for each component, if one was needed.
    pub runs: Vec<Option<SpecialPriceRun>>,
}

/// Coordinatewise maxima over one price raise (target `Δ'`) per component
/// whose surplus exceeds `Δ'`.
pub fn get_prices(
    inst: &MarketInstance,
    market: &MarketState,
    delta: &Rational,
    comps: &Components,
    new_delta: &Rational,
    exec: Execution,
) -> Result<RestartPrices> {
    let idx: Vec<usize> = (0..comps.len()).collect();
    let results = map_collect(exec, &idx, |&h| -> Result<Option<SpecialPriceRun>> {
        let comp = &comps.list[h];
        if comp.is_singleton() || comp.surplus(inst, &market.prices, &market.refunds) <= *new_delta
        {
            return Ok(None);
        }
        special_price(inst, market, delta, comps, h, new_delta).map(Some)
    });
    let mut prices = market.prices.clone();
    let mut refunds = market.refunds.clone();
    let mut runs = Vec::with_capacity(results.len());
    for res in results {
        let run = res?;
        if let Some(run) = &run {
            for (p, q) in prices.iter_mut().zip(&run.prices) {
                if q > p {
                    *p = q.clone();
                }
            }
            for (r, q) in refunds.iter_mut().zip(&run.refunds) {
                if q > r {
                    *r = q.clone();
                }
            }
        }
        runs.push(run);
    }
    Ok(RestartPrices {
        prices,
        refunds,
        runs,
    })
}

/// Spending supported on the abundant forest. In each non-singleton component
/// the smallest buyer keeps `max(0, τ)` as cash, the smallest good carries a
/// backorder of `min(0, τ)`, and every other node balances exactly.
pub fn get_allocations(
    inst: &MarketInstance,
    prices: &[Rational],
    refunds: &[Rational],
    comps: &Components,
) -> Result<Vec<Rational>> {
    let mut x = vec![Rational::zero(); inst.num_edges()];
    for comp in comps.list.iter().filter(|c| !c.is_singleton()) {
        let tau = comp.surplus(inst, prices, refunds);
        let zero = Rational::zero();
        let keep = if tau.is_positive() {
            tau.clone()
        } else {
            zero.clone()
        };
        let owe = if tau.is_negative() { tau.clone() } else { zero };
        let supply: Vec<Rational> = comp
            .buyers
            .iter()
            .enumerate()
            .map(|(a, &i)| {
                let e = inst.budget(i) - &refunds[i];
                if a == 0 {
                    e - &keep
                } else {
                    e
                }
            })
            .collect();
        let demand: Vec<Rational> = comp
            .goods
            .iter()
            .enumerate()
            .map(|(b, &j)| {
                if b == 0 {
                    &prices[j] + &owe
                } else {
                    prices[j].clone()
                }
            })
            .collect();
        let local: Vec<(usize, usize)> = comp
            .edges
            .iter()
            .map(|&k| {
                let e = inst.edge(k);
                (
                    comp.buyers
                        .binary_search(&e.buyer)
                        .expect("buyer in component"),
                    comp.goods
                        .binary_search(&e.good)
                        .expect("good in component"),
                )
            })
            .collect();
        let flow = tree_flow(&local, &supply, &demand)
            .map_err(|e| SolverError::InvariantViolation(format!("restart allocation: {e}")))?;
        for (&k, f) in comp.edges.iter().zip(flow) {
            invariant!(
                !f.is_negative(),
                "restart allocation is negative on ({}, {})",
                inst.buyer_id(inst.edge(k).buyer),
                inst.good_id(inst.edge(k).good)
            );
            x[k] = f;
        }
    }
    Ok(x)
}

/// What a call to [`make_fertile`] did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestartOutcome {
    pub branch: RestartBranch,
    pub parameter: Rational,
    pub check: Option<RestartCheck>,
    /// Outer iterations of every price raise made in this call.
    pub special_price_iterations: Vec<usize>,
}

/// Adds the price raises to the run counters; returns their iteration counts.
fn record_runs(trace: &mut RunTrace, runs: &[Option<SpecialPriceRun>]) -> Vec<usize> {
    let c = &mut trace.counters;
    let mut iterations = Vec::new();
    for run in runs.iter().flatten() {
        c.special_price_calls += 1;
        c.special_price_max_iterations = c.special_price_max_iterations.max(run.iterations);
        c.reverse_direction_edges += run.reverse_direction_edges;
        c.lost_equality_edges += run.lost_equality_edges;
        iterations.push(run.iterations);
    }
    iterations
}

/// Delayed discovery, compressed restart, or (if the parameter is not
/// positive) plain halving.
pub fn make_fertile(
    inst: &MarketInstance,
    st: &mut ScalingState,
    threshold: &mut Rational,
    exec: Execution,
    phase: usize,
    trace: &mut RunTrace,
) -> Result<RestartOutcome> {
    let n = inst.num_nodes();
    let n2 = int((n * n) as i64);
    let n5 = rational::pow(&int(n as i64), 5);
    let old_delta = st.delta.clone();
    let old_abundant = abundant_mask(inst, &st.market, &old_delta);
    let comps = components_of(inst, &old_abundant);
    let parameter = get_parameter(inst, &st.market, &old_delta, &comps, exec)?;
    let new_delta = parameter.value.clone();
    let mut sp_iterations = record_runs(trace, &parameter.runs);
    let surplus_strings = |p: &[Rational], r: &[Rational]| -> Vec<String> {
        comps
            .list
            .iter()
            .map(|c| rational::format(&c.surplus(inst, p, r)))
            .collect()
    };

    if new_delta > &old_delta / &n2 {
        *threshold = &old_delta / &n5;
        let mut row = TraceRow::new(phase, &old_delta, StepKind::Restart);
        row.branch = Some(RestartBranch::Delayed);
        row.new_delta = Some(rational::format(&new_delta));
        row.threshold = Some(rational::format(threshold));
        row.surpluses = Some(surplus_strings(&st.market.prices, &st.market.refunds));
        trace.rows.push(row);
        trace.counters.delayed_discoveries += 1;
        return Ok(RestartOutcome {
            branch: RestartBranch::Delayed,
            parameter: new_delta,
            check: None,
            special_price_iterations: sp_iterations,
        });
    }

    if !new_delta.is_positive() {
        let before = potential(inst, st);
        halve_and_repair(inst, st)?;
        let after = potential(inst, st);
        let mut row = TraceRow::new(phase, &st.delta, StepKind::Restart).phi(&before, &after);
        row.branch = Some(RestartBranch::Degenerate);
        row.new_delta = Some(rational::format(&st.delta));
        row.threshold = Some(rational::format(threshold));
        trace.rows.push(row);
        trace.counters.degenerate_restarts += 1;
        return Ok(RestartOutcome {
            branch: RestartBranch::Degenerate,
            parameter: new_delta,
            check: None,
            special_price_iterations: sp_iterations,
        });
    }

    let raised = get_prices(inst, &st.market, &old_delta, &comps, &new_delta, exec)?;
    sp_iterations.extend(record_runs(trace, &raised.runs));
    let mut root_surpluses = Vec::new();
    for (h, run) in raised.runs.iter().enumerate() {
        let Some(run) = run else { continue };
        let before = comps.list[h].surplus(inst, &st.market.prices, &st.market.refunds);
        let after = run.surplus(inst, &comps, h);
        let expected = if before < new_delta {
            before.clone()
        } else {
            new_delta.clone()
        };
        invariant!(
            after == expected,
            "raised surplus {} differs from min(s, Δ') = {}",
            rational::format(&after),
            rational::format(&expected)
        );
        root_surpluses.push((before, after));
    }
    let spending = get_allocations(inst, &raised.prices, &raised.refunds, &comps)?;
    let surpluses: Vec<Rational> = comps
        .list
        .iter()
        .map(|c| c.surplus(inst, &raised.prices, &raised.refunds))
        .collect();
    let min_old_abundant = (0..inst.num_edges())
        .filter(|&k| old_abundant[k])
        .map(|k| spending[k].clone())
        .min();

    let row_surpluses = surplus_strings(&raised.prices, &raised.refunds);
    st.market = MarketState {
        prices: raised.prices,
        spending,
        refunds: raised.refunds,
    };
    st.delta = new_delta.clone();
    *threshold = &new_delta / &n5;

    st.exempt = old_abundant;
    for j in 0..inst.num_goods() {
        let b = st.market.backorder(inst, j);
        st.deficit_floor[j] =
            (b.is_negative() && st.market.prices[j] > st.initial_prices[j]).then_some(b);
    }
    let mut row = TraceRow::new(phase, &old_delta, StepKind::Restart);
    row.branch = Some(RestartBranch::Compressed);
    row.new_delta = Some(rational::format(&new_delta));
    row.threshold = Some(rational::format(threshold));
    row.surpluses = Some(row_surpluses);
    trace.rows.push(row);
    trace.counters.restarts += 1;

    let (repairs, unrepaired) = repair_deficits(inst, st, phase, trace)?;
    let alpha = alphas(inst, &st.market.prices);
    let one = Rational::one();
    // The refund steps the next phase would open with, done in one go once the
    // deficits have had their pick of the cash.
    let mut batched = 0;
    for (i, a) in alpha.iter().enumerate() {
        let cash = st.market.cash(inst, i);
        if *a <= one && cash >= st.delta {
            let steps = rational::floor_div(&cash, &st.delta);
            st.market.refunds[i] += Rational::from_integer(steps) * &st.delta;
            batched += 1;
        }
    }
    Ok(RestartOutcome {
        branch: RestartBranch::Compressed,
        parameter: new_delta.clone(),
        check: Some(RestartCheck {
            old_delta,
            new_delta,
            surpluses,
            root_surpluses,
            min_old_abundant,
            special_price_iterations: sp_iterations.clone(),
            repairs,
            unrepaired_deficits: unrepaired,
            batched_refunds: batched,
        }),
        special_price_iterations: sp_iterations,
    })
}

/// One Δ-augmentation into each good left with a negative backorder, from the
/// smallest buyer holding at least Δ that can reach it. Returns the number of
/// repairs and of goods still in deficit.
fn repair_deficits(
    inst: &MarketInstance,
    st: &mut ScalingState,
    phase: usize,
    trace: &mut RunTrace,
) -> Result<(usize, usize)> {
    let mut repairs = 0;
    for j in 0..inst.num_goods() {
        if st.deficit_floor[j].is_none() {
            continue;
        }
        let net = scaling_network(inst, st);
        let rich: Vec<usize> = (0..inst.num_buyers())
            .filter(|&i| st.market.cash(inst, i) >= st.delta)
            .collect();
        for i in rich {
            let active = active_set(inst, &net, &[Node::Buyer(i)]);
            let Some(path) = active.path_to(inst, Node::Good(j)) else {
                continue;
            };
            let before = potential(inst, st);
            augment(&mut st.market, &path, &st.delta)?;
            let after = potential(inst, st);
            trace.rows.push(
                TraceRow::new(phase, &st.delta, StepKind::Repair)
                    .subject(inst.good_id(j))
                    .phi(&before, &after),
            );
            repairs += 1;
            break;
        }
        st.clear_repaired_deficits(inst);
    }
    let unrepaired = st.deficit_floor.iter().filter(|f| f.is_some()).count();
    Ok((repairs, unrepaired))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::components_of;
    use crate::instance::load_instance;
    use crate::rational::frac;

    #[test]
    fn allocation_by_node_balance() {
        let inst = load_instance(
            r#"{"buyers":[{"id":"b1","budget":5}],"goods":["g1","g2"],"utilities":[["b1","g1",1],["b1","g2",1]]}"#,
        )
        .unwrap();
        let comps = components_of(&inst, &[true, true]);
        let x = get_allocations(&inst, &[int(2), int(2)], &[int(0)], &comps).unwrap();
        assert_eq!(x, vec![int(2), int(2)]);
        // τ = -1/2: the root good absorbs the deficit.
        let x = get_allocations(&inst, &[int(2), int(2)], &[frac(9, 2)], &comps);
        assert!(x.is_err());
        let x = get_allocations(&inst, &[int(3), frac(5, 2)], &[int(0)], &comps).unwrap();
        assert_eq!(x, vec![frac(5, 2), frac(5, 2)]);
    }

    #[test]
    fn baseline_prices_when_nothing_to_raise() {
        let inst = load_instance(
            r#"{"buyers":[{"id":"b1","budget":1}],"goods":["g1"],"utilities":[["b1","g1",3]]}"#,
        )
        .unwrap();
        let mut market = MarketState::new(&inst, vec![int(1)]);
        market.spending[0] = int(1);
        let delta = frac(1, 100);
        let comps = components_of(&inst, &abundant_mask(&inst, &market, &delta));
        let out = get_prices(
            &inst,
            &market,
            &delta,
            &comps,
            &int(1),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(out.prices, market.prices);
        assert_eq!(out.refunds, market.refunds);
        assert!(out.runs.iter().all(Option::is_none));
    }

    #[test]
    fn parameter_case_table() {
        // b1 alone with α = 3 > 1; g1 alone at price 1/2.
        let inst = load_instance(
            r#"{"buyers":[{"id":"b1","budget":2}],"goods":["g1"],"utilities":[["b1","g1",3]]}"#,
        )
        .unwrap();
        let market = MarketState::new(&inst, vec![frac(1, 2)]);
        let delta = int(1);
        let comps = components_of(&inst, &[false]);
        let param = get_parameter(&inst, &market, &delta, &comps, Execution::Sequential).unwrap();
        assert_eq!(param.per_component, vec![int(2), frac(-1, 2)]);
        assert_eq!(param.value, int(2));
    }
}
